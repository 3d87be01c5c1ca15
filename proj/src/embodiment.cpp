#include "softbci/embodiment.hpp"

#include <algorithm>
#include <numbers>
#include <string>

#include "softbci/error.hpp"

namespace softbci {

void FlowerPlantParams::validate() const {
  if (!(p_ambient > 0.0 && p_ambient < p_supply)) {
    throw ConfigError("flower plant needs 0 < p_ambient < p_supply");
  }
  if (!(k_pump > 0.0) || !(k_vent > 0.0)) throw ConfigError("k_pump and k_vent must be positive");
  if (!(p_initial >= p_ambient && p_initial <= p_supply)) {
    throw ConfigError("p_initial must lie in [p_ambient, p_supply]");
  }
}

FlowerPlant::FlowerPlant(FlowerPlantParams params) : params_(params), p_(params.p_initial) {
  params_.validate();
}

void FlowerPlant::set_pump_effort(double effort) noexcept {
  pump_effort_ = std::isfinite(effort) ? std::clamp(effort, 0.0, 1.0) : 0.0;
}

void FlowerPlant::plant_step(double dt) {
  if (!(dt > 0.0 && dt <= kControlPeriod * (1.0 + 1e-9))) {
    throw ContractViolation("plant_step requires 0 < dt <= 0.01 s");
  }
  const double inflow = params_.k_pump * pump_effort_ * (params_.p_supply - p_);
  const double outflow = valve_open_ ? params_.k_vent * (p_ - params_.p_ambient) : 0.0;
  const double next = p_ + (inflow - outflow) * dt;
  if (!std::isfinite(next)) throw SimulationFault("flower chamber pressure became non-finite");
  p_ = std::clamp(next, params_.p_ambient, params_.p_supply);
}

PressureSensor::PressureSensor(SensorParams params)
    : params_(params),
      rng_(params.rng_seed),
      noise_(0.0, params.noise_sigma > 0.0 ? params.noise_sigma : 1.0),
      ring_(params.window, 0.0) {
  if (params_.window == 0) throw ConfigError("sensor moving-average window must be >= 1");
  if (!(params_.noise_sigma >= 0.0)) throw ConfigError("sensor noise_sigma must be >= 0");
}

SensorReading PressureSensor::sensor_read(double true_pressure) {
  const double raw = params_.noise_sigma > 0.0 ? true_pressure + noise_(rng_) : true_pressure;
  ring_[head_] = raw;
  head_ = (head_ + 1) % ring_.size();
  count_ = std::min(count_ + 1, ring_.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < count_; ++i) sum += ring_[i];
  return {raw, sum / static_cast<double>(count_)};
}

void PressureSensor::reset() {
  rng_.seed(params_.rng_seed);
  noise_.reset();
  std::fill(ring_.begin(), ring_.end(), 0.0);
  count_ = 0;
  head_ = 0;
}

void PidGains::validate() const {
  if (!(kp >= 0.0 && ki >= 0.0 && kd >= 0.0)) throw ConfigError("PID gains must be non-negative");
  if (!(windup_limit >= 0.0)) throw ConfigError("windup_limit must be non-negative");
  if (!std::isfinite(kp + ki + kd + windup_limit)) throw ConfigError("PID gains must be finite");
}

PidController::PidController(PidGains gains) : gains_(gains) { gains_.validate(); }

void PidController::set_gains(const PidGains& gains) {
  gains.validate();
  gains_ = gains;
  integral_ = std::clamp(integral_, -gains_.windup_limit, gains_.windup_limit);
}

void PidController::reset() noexcept {
  integral_ = 0.0;
  prev_error_ = 0.0;
  has_prev_ = false;
}

double PidController::pid_step(double setpoint, double measurement, double dt) {
  const double error = setpoint - measurement;
  const double derivative = has_prev_ && dt > 0.0 ? (error - prev_error_) / dt : 0.0;
  prev_error_ = error;
  has_prev_ = true;

  const double unclamped = gains_.kp * error + gains_.ki * integral_ + gains_.kd * derivative;
  const bool pushing_high = unclamped >= 1.0 && error > 0.0;
  const bool pushing_low = unclamped <= 0.0 && error < 0.0;
  if (!pushing_high && !pushing_low) {
    integral_ = std::clamp(integral_ + error * dt, -gains_.windup_limit, gains_.windup_limit);
  }
  const double u = gains_.kp * error + gains_.ki * integral_ + gains_.kd * derivative;
  return std::clamp(u, 0.0, 1.0);
}

std::string_view to_string(CyclePhase phase) noexcept {
  switch (phase) {
    case CyclePhase::Inflating:
      return "inflating";
    case CyclePhase::Deflating:
      return "deflating";
    case CyclePhase::Idle:
      break;
  }
  return "idle";
}

CycleScheduler::CycleScheduler(bool guard_enabled, double guard_pressure)
    : guard_enabled_(guard_enabled), guard_pressure_(guard_pressure) {}

void CycleScheduler::begin_inflation() {
  latched_ = *pending_;
  pending_.reset();
  phase_ = CyclePhase::Inflating;
  remaining_ = latched_->t_inflation;
  inflation_started_ = true;
}

SchedulerOutput CycleScheduler::scheduler_step(const std::optional<FlowerCommand>& new_command,
                                               double filtered_pressure, double dt) {
  inflation_started_ = false;
  if (new_command) pending_ = *new_command;
  if (phase_ == CyclePhase::Idle && pending_) begin_inflation();

  SchedulerOutput out;
  out.phase = phase_;
  switch (phase_) {
    case CyclePhase::Inflating:
      out.pid_active = true;
      break;
    case CyclePhase::Deflating:
      if (guard_enabled_ && filtered_pressure <= guard_pressure_) guard_tripped_ = true;
      out.valve_open = !guard_tripped_;
      break;
    case CyclePhase::Idle:
      break;
  }

  if (phase_ != CyclePhase::Idle) {
    remaining_ -= dt;
    out.remaining = std::max(0.0, remaining_);
    if (remaining_ <= 1e-9) {
      if (phase_ == CyclePhase::Inflating) {
        phase_ = CyclePhase::Deflating;
        remaining_ = latched_->t_deflation;
        guard_tripped_ = false;
      } else {
        if (!pending_) pending_ = latched_;
        begin_inflation();
      }
    }
  }
  return out;
}

FlowerRig::FlowerRig(FlowerRigParams params, double guard_pressure)
    : plant_(params.plant),
      sensor_(params.sensor),
      pid_(params.pid),
      scheduler_(params.guard_enabled, guard_pressure),
      last_filtered_(params.plant.p_initial) {}

FlowerTick FlowerRig::tick(const std::optional<FlowerCommand>& new_command) {
  const auto reading = sensor_.sensor_read(plant_.pressure());
  last_filtered_ = reading.filtered;
  const auto out = scheduler_.scheduler_step(new_command, reading.filtered, kControlPeriod);
  if (scheduler_.inflation_started()) pid_.reset();

  const double setpoint = scheduler_.latched() ? scheduler_.latched()->setpoint : 0.0;
  const double effort =
      out.pid_active ? pid_.pid_step(setpoint, reading.filtered, kControlPeriod) : 0.0;
  plant_.set_valve_open(out.valve_open);
  plant_.set_pump_effort(effort);

  FlowerTick t{plant_.pressure(), reading.raw, reading.filtered, out.valve_open,
               plant_.pump_effort(), out.phase, out.remaining, setpoint};
  plant_.plant_step(kControlPeriod);
  return t;
}

void CharacterParams::validate() const {
  if (!(omega_max > 0.0)) throw ConfigError("omega_max must be positive");
  if (!(motor_tau >= 0.0)) throw ConfigError("motor_tau must be non-negative");
  if (!(wobble_gain >= 0.0)) throw ConfigError("wobble_gain must be non-negative");
}

CharacterPlant::CharacterPlant(CharacterParams params) : params_(params) { params_.validate(); }

void CharacterPlant::character_step(int duty, double dt) {
  if (duty < 0 || duty > 255) {
    throw ContractViolation("duty " + std::to_string(duty) + " outside [0, 255]");
  }
  if (!(dt > 0.0)) throw ContractViolation("character_step requires dt > 0");
  duty_ = duty;
  const double target = params_.omega_max * static_cast<double>(duty) / 255.0;
  const double blend = params_.motor_tau > 0.0 ? 1.0 - std::exp(-dt / params_.motor_tau) : 1.0;
  omega_ += (target - omega_) * blend;
  omega_ = std::clamp(omega_, 0.0, params_.omega_max);
  wobble_phase_ = std::fmod(wobble_phase_ + params_.wobble_gain * omega_ * dt,
                            2.0 * std::numbers::pi);
}

double CharacterPlant::dance_frequency_hz() const noexcept {
  return params_.wobble_gain * omega_ / (2.0 * std::numbers::pi);
}

double CharacterPlant::amplitude() const noexcept { return omega_ / params_.omega_max; }

}  // namespace softbci
