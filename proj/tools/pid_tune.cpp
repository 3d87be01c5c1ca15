// Step-response and gain sweep for the flower pressure loop. Prints the
// numbers quoted in docs/pid_tuning.md.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <fmt/format.h>

#include "softbci/embodiment.hpp"

using namespace softbci;

namespace {

constexpr double kSetpoints[] = {122.0, 127.5, 130.0, 135.0};

// Open-loop reaction curve from 120 kPa with a noise-free sensor: steepest
// slope of the filtered reading and the tangent's dead time.
void reaction_curve(double effort) {
  FlowerPlant plant;
  PressureSensor sensor({.noise_sigma = 0.0});
  plant.set_pump_effort(effort);
  std::vector<double> y;
  for (int i = 0; i < 300; ++i) {
    y.push_back(sensor.sensor_read(plant.pressure()).filtered);
    plant.plant_step(kControlPeriod);
  }
  double slope = 0.0;
  std::size_t at = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    const double s = (y[i] - y[i - 1]) / kControlPeriod;
    if (s > slope) {
      slope = s;
      at = i;
    }
  }
  const double dead = static_cast<double>(at) * kControlPeriod - (y[at] - y[0]) / slope;
  fmt::print("effort {:.1f}: slope {:.3f} kPa/s ({:.3f} per unit effort), dead time {:.3f} s\n", effort,
             slope, slope / effort, dead);
}

struct StepResult {
  double end_error = 0.0;  // |p - setpoint| at 2.8 s
  double overshoot = 0.0;
};

StepResult inflate(const FlowerRigParams& params, double setpoint) {
  FlowerRig rig(params);
  const FlowerCommand cmd{setpoint, 2.8, 3.3};
  double peak = 0.0;
  for (int i = 0; i < 280; ++i) {
    rig.tick(i == 0 ? std::optional(cmd) : std::nullopt);
    peak = std::max(peak, rig.plant().pressure());
  }
  return {std::abs(rig.plant().pressure() - setpoint), std::max(0.0, peak - setpoint)};
}

void nominal(const char* name, const PidGains& g) {
  fmt::print("{:<8} kp {:.3f} ki {:.3f} kd {:.4f} |", name, g.kp, g.ki, g.kd);
  for (double sp : kSetpoints) {
    FlowerRigParams p;
    p.pid = g;
    p.sensor.noise_sigma = 0.0;
    const auto r = inflate(p, sp);
    fmt::print("  {}: err {:.2f} os {:.2f}", sp, r.end_error, r.overshoot);
  }
  fmt::print("\n");
}

// Worst end error over all setpoints with a faster pump and a slower sensor.
void robustness(const char* name, const PidGains& g) {
  fmt::print("{:<8}", name);
  for (double pump : {1.0, 2.0, 4.0}) {
    for (std::size_t window : {10u, 30u}) {
      double worst = 0.0;
      for (double sp : kSetpoints) {
        FlowerRigParams p;
        p.pid = g;
        p.sensor.noise_sigma = 0.0;
        p.sensor.window = window;
        p.plant.k_pump *= pump;
        worst = std::max(worst, inflate(p, sp).end_error);
      }
      fmt::print("  pump x{} window {}: {:.2f}", pump, window, worst);
    }
  }
  fmt::print("\n");
}

}  // namespace

int main() {
  fmt::print("reaction curve\n");
  for (double u : {0.2, 0.5, 1.0}) reaction_curve(u);

  // Ziegler-Nichols open-loop rules for an integrating process.
  const double rate = FlowerPlantParams{}.k_pump * (FlowerPlantParams{}.p_supply - 127.5);
  const double dead = 0.05;
  const double kp = 1.2 / (rate * dead);
  const PidGains zn{kp, kp / (2.0 * dead), kp * 0.5 * dead, 5.0};
  fmt::print("\nslope at 127.5 kPa {:.3f} kPa/s, dead time {:.2f} s\n", rate, dead);

  fmt::print("\nnominal plant, noise-free sensor\n");
  nominal("zn", zn);
  nominal("kp 1.5", {1.5, 0.2, 0.02, 5.0});
  nominal("kp 0.8", {0.8, 0.2, 0.02, 5.0});
  nominal("default", PidGains{});
  nominal("ki 0", {0.4, 0.0, 0.02, 5.0});

  fmt::print("\nworst end error under plant and sensor changes\n");
  robustness("zn", zn);
  robustness("kp 1.5", {1.5, 0.2, 0.02, 5.0});
  robustness("default", PidGains{});
}
