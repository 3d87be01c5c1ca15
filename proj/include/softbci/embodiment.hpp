#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "softbci/mapping.hpp"

namespace softbci {

inline constexpr double kControlRateHz = 100.0;
inline constexpr double kControlPeriod = 1.0 / kControlRateHz;

// ---------------------------------------------------------------------------
// Soft flower

struct FlowerPlantParams {
  double p_ambient = 101.3;  // kPa absolute
  double p_supply = 150.0;   // kPa, pump ceiling
  // Saturated pump takes 2.5 s from 120 to 135 kPa.
  double k_pump = std::log(2.0) / 2.5;
  // Open vent takes 2 s from 135 to 120 kPa.
  double k_vent = std::log((135.0 - 101.3) / (120.0 - 101.3)) / 2.0;
  double p_initial = 120.0;  // pre-pressurized resting state

  void validate() const;
};

/// First-order pneumatic chamber:
///   dp/dt = k_pump * effort * (p_supply - p) - k_vent * [valve_open] * (p - p_ambient)
class FlowerPlant {
 public:
  explicit FlowerPlant(FlowerPlantParams params = {});

  /// Explicit Euler step, 0 < dt <= 0.01 s. Result clamped to [p_ambient, p_supply].
  void plant_step(double dt);

  double pressure() const noexcept { return p_; }
  void set_pressure(double p) noexcept { p_ = p; }
  bool valve_open() const noexcept { return valve_open_; }
  double pump_effort() const noexcept { return pump_effort_; }
  void set_valve_open(bool open) noexcept { valve_open_ = open; }
  /// Clamped to [0, 1].
  void set_pump_effort(double effort) noexcept;
  const FlowerPlantParams& params() const noexcept { return params_; }

 private:
  FlowerPlantParams params_;
  double p_;
  bool valve_open_ = false;
  double pump_effort_ = 0.0;
};

struct SensorParams {
  double noise_sigma = 0.2;  // kPa
  std::size_t window = 10;   // moving-average length, samples at 100 Hz
  std::uint64_t rng_seed = 7;
};

struct SensorReading {
  double raw = 0.0;
  double filtered = 0.0;
};

/// Absolute pressure sensor sampled at 100 Hz: Gaussian noise plus a moving
/// average over the last min(count, window) raw samples.
class PressureSensor {
 public:
  explicit PressureSensor(SensorParams params = {});

  SensorReading sensor_read(double true_pressure);
  void reset();
  const SensorParams& params() const noexcept { return params_; }

 private:
  SensorParams params_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_;
  std::vector<double> ring_;
  std::size_t count_ = 0;
  std::size_t head_ = 0;
};

struct PidGains {
  double kp = 0.4;            // 1/kPa
  double ki = 0.2;            // 1/(kPa s)
  double kd = 0.02;           // s/kPa
  double windup_limit = 5.0;  // kPa s

  void validate() const;
  bool operator==(const PidGains&) const = default;
};

/// Pump-effort PID with output limits [0, 1]. The integral is clamped to
/// +/-windup_limit and frozen while the output is saturated in the direction
/// the error would push it. Derivative is a first difference of the error;
/// the first step after reset contributes no derivative.
class PidController {
 public:
  explicit PidController(PidGains gains = {});

  double pid_step(double setpoint, double measurement, double dt);
  void reset() noexcept;

  double integral() const noexcept { return integral_; }
  const PidGains& gains() const noexcept { return gains_; }
  void set_gains(const PidGains& gains);

 private:
  PidGains gains_;
  double integral_ = 0.0;
  double prev_error_ = 0.0;
  bool has_prev_ = false;
};

enum class CyclePhase { Idle, Inflating, Deflating };
std::string_view to_string(CyclePhase phase) noexcept;

struct SchedulerOutput {
  CyclePhase phase = CyclePhase::Idle;
  double remaining = 0.0;  // s left in the phase, after this tick
  bool valve_open = false;
  bool pid_active = false;
};

/// Inflate/deflate cycle. Inflating: valve closed, PID drives the pump toward
/// the latched setpoint. Deflating: pump off, valve open, unless the
/// low-pressure guard is on and the filtered pressure has reached p_min, in
/// which case the valve stays closed for the rest of the phase. New commands
/// are held pending and latched only at the end of a deflation (or straight
/// away from Idle); without a new command the latched cycle repeats.
class CycleScheduler {
 public:
  explicit CycleScheduler(bool guard_enabled = true, double guard_pressure = 120.0);

  SchedulerOutput scheduler_step(const std::optional<FlowerCommand>& new_command,
                                 double filtered_pressure, double dt);

  CyclePhase phase() const noexcept { return phase_; }
  double remaining() const noexcept { return remaining_; }
  const std::optional<FlowerCommand>& latched() const noexcept { return latched_; }
  const std::optional<FlowerCommand>& pending() const noexcept { return pending_; }
  /// True on the tick an Inflating phase was entered.
  bool inflation_started() const noexcept { return inflation_started_; }
  bool guard_enabled() const noexcept { return guard_enabled_; }
  void set_guard(bool enabled) noexcept { guard_enabled_ = enabled; }
  double guard_pressure() const noexcept { return guard_pressure_; }
  void set_guard_pressure(double p) noexcept { guard_pressure_ = p; }

 private:
  void begin_inflation();

  bool guard_enabled_;
  double guard_pressure_;
  CyclePhase phase_ = CyclePhase::Idle;
  double remaining_ = 0.0;
  bool guard_tripped_ = false;
  bool inflation_started_ = false;
  std::optional<FlowerCommand> latched_;
  std::optional<FlowerCommand> pending_;
};

struct FlowerTick {
  double p_true = 0.0;
  double p_meas = 0.0;
  double p_filt = 0.0;
  bool valve_open = false;
  double pump_effort = 0.0;
  CyclePhase phase = CyclePhase::Idle;
  double remaining = 0.0;
  double setpoint = 0.0;
};

struct FlowerRigParams {
  FlowerPlantParams plant;
  SensorParams sensor;
  PidGains pid;
  bool guard_enabled = true;
};

/// One 100 Hz control tick of the whole flower: sense, schedule, regulate,
/// integrate. The returned values describe the chamber at the start of the
/// tick and the actuator state applied over it.
class FlowerRig {
 public:
  explicit FlowerRig(FlowerRigParams params = {}, double guard_pressure = 120.0);

  FlowerTick tick(const std::optional<FlowerCommand>& new_command);

  const FlowerPlant& plant() const noexcept { return plant_; }
  FlowerPlant& plant() noexcept { return plant_; }
  const CycleScheduler& scheduler() const noexcept { return scheduler_; }
  CycleScheduler& scheduler() noexcept { return scheduler_; }
  PidController& pid() noexcept { return pid_; }
  const PidController& pid() const noexcept { return pid_; }
  double last_filtered() const noexcept { return last_filtered_; }

 private:
  FlowerPlant plant_;
  PressureSensor sensor_;
  PidController pid_;
  CycleScheduler scheduler_;
  double last_filtered_;
};

// ---------------------------------------------------------------------------
// Soft character

struct CharacterParams {
  double omega_max = 30.0;   // rad/s at full duty
  double motor_tau = 0.3;    // s
  double wobble_gain = 0.2;  // dance rad per motor rad

  void validate() const;
};

/// Duty-driven DC motor; the character's dance frequency is proportional to
/// motor speed.
class CharacterPlant {
 public:
  explicit CharacterPlant(CharacterParams params = {});

  /// Throws ContractViolation unless 0 <= duty <= 255.
  void character_step(int duty, double dt);

  int duty() const noexcept { return duty_; }
  double omega() const noexcept { return omega_; }
  double wobble_phase() const noexcept { return wobble_phase_; }
  /// wobble_gain * omega / 2pi.
  double dance_frequency_hz() const noexcept;
  /// omega / omega_max; equals duty / 255 in steady state.
  double amplitude() const noexcept;
  const CharacterParams& params() const noexcept { return params_; }

 private:
  CharacterParams params_;
  int duty_ = 0;
  double omega_ = 0.0;
  double wobble_phase_ = 0.0;
};

}  // namespace softbci
