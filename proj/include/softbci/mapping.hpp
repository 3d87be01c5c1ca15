#pragma once

#include <string_view>

namespace softbci {

/// Constants that turn the normalized alpha power into actuator commands.
/// beta_gain and gamma_gain are the per-unit slopes of the setpoint and
/// inflation-time maps and must agree with the endpoint ranges:
///   beta_gain  == (p_max - p_min) / 100
///   gamma_gain == (t_inf_max - t_inf_min) / 100
struct MappingParams {
  double alpha_gain = 2.55;  // duty per A_PSD unit
  double beta_gain = 0.15;   // kPa per A_PSD unit
  double gamma_gain = 0.02;  // s per A_PSD unit
  double p_min = 120.0;      // kPa
  double p_max = 135.0;      // kPa
  double t_inf_min = 0.8;    // s
  double t_inf_max = 2.8;    // s
  double deflate_offset = 0.5;  // s

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
  bool operator==(const MappingParams&) const = default;
};

/// Returns a copy with one named parameter changed. Changing a gain moves the
/// matching upper endpoint (and vice versa) so the pair stays consistent.
/// Throws ConfigError for unknown names or values that break an invariant.
/// With `check` false only the name is checked; callers that set several
/// parameters in sequence validate once at the end.
MappingParams with_param(const MappingParams& params, std::string_view name, double value,
                         bool check = true);

struct CharacterCommand {
  int duty = 0;  // PWM duty, [0, 255]
  bool operator==(const CharacterCommand&) const = default;
};

struct FlowerCommand {
  double setpoint = 120.0;     // kPa
  double t_inflation = 0.8;    // s
  double t_deflation = 1.3;    // s
  bool operator==(const FlowerCommand&) const = default;
};

/// duty = clamp(round(alpha_gain * a_psd), 0, 255), half away from zero.
/// Throws ContractViolation unless 0 <= a_psd <= 100.
CharacterCommand to_duty(double a_psd, const MappingParams& params = {});

/// setpoint = p_min + beta_gain * a_psd, t_inflation = t_inf_min + gamma_gain * a_psd,
/// t_deflation = t_inflation + deflate_offset. Throws ContractViolation unless
/// 0 <= a_psd <= 100.
FlowerCommand to_flower_command(double a_psd, const MappingParams& params = {});

}  // namespace softbci
