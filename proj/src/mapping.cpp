#include "softbci/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "softbci/error.hpp"

namespace softbci {

namespace {

bool close_rel(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

void check_a_psd(double a_psd) {
  if (!(a_psd >= 0.0 && a_psd <= 100.0)) {
    throw ContractViolation("a_psd " + std::to_string(a_psd) + " outside [0, 100]");
  }
}

}  // namespace

void MappingParams::validate() const {
  const double all[] = {alpha_gain, beta_gain, gamma_gain, p_min, p_max,
                        t_inf_min,  t_inf_max, deflate_offset};
  for (double v : all) {
    if (!std::isfinite(v)) throw ConfigError("mapping parameters must be finite");
  }
  if (alpha_gain < 0.0) throw ConfigError("alpha_gain must be non-negative");
  if (!(beta_gain > 0.0)) throw ConfigError("beta_gain must be positive (p_min < p_max)");
  if (!(gamma_gain > 0.0)) throw ConfigError("gamma_gain must be positive (t_inf_min < t_inf_max)");
  if (!(p_min < p_max)) throw ConfigError("p_min must be below p_max");
  if (!(t_inf_min < t_inf_max)) throw ConfigError("t_inf_min must be below t_inf_max");
  if (t_inf_min < 0.0) throw ConfigError("t_inf_min must be non-negative");
  if (deflate_offset < 0.0) throw ConfigError("deflate_offset must be non-negative");
  if (!close_rel(beta_gain, (p_max - p_min) / 100.0)) {
    throw ConfigError("beta_gain must equal (p_max - p_min) / 100");
  }
  if (!close_rel(gamma_gain, (t_inf_max - t_inf_min) / 100.0)) {
    throw ConfigError("gamma_gain must equal (t_inf_max - t_inf_min) / 100");
  }
}

MappingParams with_param(const MappingParams& params, std::string_view name, double value,
                         bool check) {
  MappingParams p = params;
  if (name == "alpha_gain") {
    p.alpha_gain = value;
  } else if (name == "beta_gain") {
    p.beta_gain = value;
    p.p_max = p.p_min + 100.0 * value;
  } else if (name == "gamma_gain") {
    p.gamma_gain = value;
    p.t_inf_max = p.t_inf_min + 100.0 * value;
  } else if (name == "p_min") {
    p.p_min = value;
    p.beta_gain = (p.p_max - value) / 100.0;
  } else if (name == "p_max") {
    p.p_max = value;
    p.beta_gain = (value - p.p_min) / 100.0;
  } else if (name == "t_inf_min") {
    p.t_inf_min = value;
    p.gamma_gain = (p.t_inf_max - value) / 100.0;
  } else if (name == "t_inf_max") {
    p.t_inf_max = value;
    p.gamma_gain = (value - p.t_inf_min) / 100.0;
  } else if (name == "deflate_offset") {
    p.deflate_offset = value;
  } else {
    throw ConfigError("unknown mapping parameter `" + std::string(name) + "`");
  }
  if (check) p.validate();
  return p;
}

CharacterCommand to_duty(double a_psd, const MappingParams& params) {
  check_a_psd(a_psd);
  // 2.55 has no exact binary form (2.55 * 50 == 127.49999...). Snap to a
  // micro-unit grid first so exact decimal halves round away from zero.
  const double raw = std::nearbyint(params.alpha_gain * a_psd * 1e6) / 1e6;
  const long duty = std::lround(raw);
  return {static_cast<int>(std::clamp(duty, 0L, 255L))};
}

FlowerCommand to_flower_command(double a_psd, const MappingParams& params) {
  check_a_psd(a_psd);
  const double u = a_psd / 100.0;
  FlowerCommand cmd;
  // std::lerp is exact at both ends, so a_psd 0 and 100 land on the endpoints.
  cmd.setpoint = std::lerp(params.p_min, params.p_max, u);
  // Round t_inflation onto the grid of t_inflation + offset so the offset
  // survives subtraction exactly.
  cmd.t_deflation = std::lerp(params.t_inf_min, params.t_inf_max, u) + params.deflate_offset;
  cmd.t_inflation = cmd.t_deflation - params.deflate_offset;
  return cmd;
}

}  // namespace softbci
