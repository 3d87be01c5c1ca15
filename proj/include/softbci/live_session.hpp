#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "softbci/orchestrator.hpp"

namespace softbci {

inline constexpr double kSnapshotRateHz = 20.0;
inline constexpr std::uint64_t kTicksPerSnapshot = 5;  // 100 Hz / 20 Hz

/// Immutable view of the running installation, published at 20 Hz.
struct StateSnapshot {
  std::uint64_t seq = 0;
  double t_s = 0.0;      // session clock, monotonic across runs
  bool running = false;
  double run_t_s = 0.0;  // clock of the active run
  std::optional<Eyes> eyes;
  double a_psd = 0.0;
  bool gated = false;
  bool override_active = false;
  std::vector<double> spectrum_freq;  // 6-20 Hz
  std::vector<double> spectrum_psd;

  struct Character {
    int duty = 0;
    double dance_freq_hz = 0.0;
    double amplitude = 0.0;
  } character;

  struct Flower {
    double setpoint = 0.0;
    double p_filt = 0.0;
    bool valve = false;
    CyclePhase phase = CyclePhase::Idle;
    double remaining_s = 0.0;
  } flower;

  struct Params {
    double alpha_gain = 0.0;
    double beta_gain = 0.0;
    double gamma_gain = 0.0;
    double threshold = 0.0;
    double p_ref = 0.0;
    bool guard = true;
  } params;

  nlohmann::json to_json() const;
};

struct SetEyes {
  Eyes eyes;
};
struct OverrideAlpha {
  double a_psd;
};
struct ClearOverride {};
struct SetParam {
  std::string name;
  double value;
};
struct SetGuard {
  bool enabled;
};
struct Start {
  RunConfig config;
};
struct Stop {};
struct Reset {};

using OperatorCommand =
    std::variant<SetEyes, OverrideAlpha, ClearOverride, SetParam, SetGuard, Start, Stop, Reset>;

/// Parses `{"type": "...", ...}`. Throws ConfigError on a malformed message.
///   set_eyes {eyes: open|closed}      override_alpha {a_psd: 0..100}
///   clear_override                    set_param {name, value}
///   set_guard {enabled: bool}         start {config: {...}}   stop   reset
OperatorCommand parse_command(const nlohmann::json& j, const RunConfig& base = {});
std::string command_name(const OperatorCommand& cmd);

struct CommandResult {
  bool accepted = false;
  std::string reason;

  nlohmann::json to_json(const std::string& command) const;
};

class SnapshotHub {
 public:
  /// Latest-wins mailbox: an unread snapshot is replaced by a newer one and
  /// counted as dropped. Publishing never blocks on a subscriber.
  class Subscription {
   public:
    std::shared_ptr<const StateSnapshot> try_next();
    std::shared_ptr<const StateSnapshot> wait_next(std::chrono::milliseconds timeout);
    std::uint64_t dropped() const;

   private:
    friend class SnapshotHub;
    void deliver(std::shared_ptr<const StateSnapshot> snapshot);

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::shared_ptr<const StateSnapshot> pending_;
    std::uint64_t dropped_ = 0;
  };

  std::shared_ptr<Subscription> subscribe();
  void publish(std::shared_ptr<const StateSnapshot> snapshot);
  std::size_t subscriber_count();
  std::uint64_t published() const noexcept { return published_.load(); }

 private:
  std::mutex mutex_;
  std::vector<std::weak_ptr<Subscription>> subscribers_;
  std::atomic<std::uint64_t> published_{0};
};

struct LiveSessionOptions {
  /// Write CSV telemetry for each run to its output_dir.
  bool record = false;
  /// Stop runs at their configured duration instead of holding the last
  /// scenario state indefinitely.
  bool bounded = false;
};

/// Drives a pipeline on a 100 Hz tick and exposes it to operators.
/// `apply_command` may be called from any thread: it validates immediately and
/// queues the command; queued commands are applied together at the start of
/// the next tick, so no snapshot ever reflects a partly applied command.
class LiveSession {
 public:
  explicit LiveSession(LiveSessionOptions options = {});
  ~LiveSession();
  LiveSession(const LiveSession&) = delete;
  LiveSession& operator=(const LiveSession&) = delete;

  CommandResult apply_command(const OperatorCommand& cmd);

  /// One control tick. Publishes a snapshot every fifth tick.
  void tick();

  /// Runs `tick()` on a background thread paced to the wall clock.
  void start_realtime();
  void stop_realtime();

  SnapshotHub& hub() noexcept { return hub_; }
  std::shared_ptr<const StateSnapshot> latest() const;
  nlohmann::json config_json() const;
  bool running() const;
  std::optional<RunReport> last_report() const;
  std::uint64_t session_ticks() const noexcept { return session_ticks_.load(); }

 private:
  struct Staged {
    RunConfig config;
    MappingParams mapping;
    Calibration calibration;
    PidGains pid;
  };
  struct Queued {
    OperatorCommand cmd;
    std::optional<Calibration> calibration;  // resolved for Start
  };

  CommandResult validate_locked(const OperatorCommand& cmd, std::optional<Calibration>& cal);
  void apply_on_tick(Queued& q);
  void start_pipeline(const RunConfig& config, const Calibration& cal);
  void finish_pipeline();
  std::shared_ptr<const StateSnapshot> make_snapshot();

  LiveSessionOptions options_;
  SnapshotHub hub_;

  mutable std::mutex mutex_;  // guards everything below up to the thread
  std::deque<Queued> queue_;
  std::optional<Staged> staged_;  // engaged while a run is active
  std::shared_ptr<const StateSnapshot> latest_;
  nlohmann::json config_json_;
  std::optional<RunReport> last_report_;

  // Tick-thread state.
  std::unique_ptr<Pipeline> pipeline_;
  std::optional<RunConfig> run_config_;
  std::optional<Calibration> run_calibration_;
  std::uint64_t seq_ = 0;
  std::atomic<std::uint64_t> session_ticks_{0};

  std::atomic<bool> realtime_running_{false};
  std::thread realtime_thread_;
};

}  // namespace softbci
