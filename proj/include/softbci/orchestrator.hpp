#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "softbci/config.hpp"
#include "softbci/dsp.hpp"
#include "softbci/embodiment.hpp"
#include "softbci/link.hpp"
#include "softbci/mapping.hpp"
#include "softbci/signal_source.hpp"

namespace softbci {

/// A stretch of constant ground-truth eyes state. Replayed recordings carry
/// no ground truth (`eyes` empty).
struct EyesSegment {
  double start = 0.0;
  double end = 0.0;
  std::optional<Eyes> eyes;
};

struct SegmentStats {
  EyesSegment segment;
  std::size_t frames = 0;
  double mean_a_psd = 0.0;
  std::size_t duty_updates = 0;
  double mean_duty = 0.0;
};

struct CharacterSummary {
  std::size_t updates = 0;
  std::size_t trace_rows = 0;
  int min_duty = 0;
  int max_duty = 0;
  double mean_duty_open = 0.0;
  double mean_duty_closed = 0.0;
};

struct FlowerSummary {
  std::size_t commands = 0;
  std::size_t trace_rows = 0;
  double min_p_true = 0.0;
  double max_p_true = 0.0;
  /// Minimum true pressure from the first deflation onward.
  std::optional<double> min_p_after_first_inflation;
};

struct RunReport {
  double duration_s = 0.0;
  std::uint64_t ticks = 0;
  std::size_t samples = 0;
  std::size_t frames_emitted = 0;
  std::size_t alpha_events = 0;
  std::size_t link_errors = 0;
  Calibration calibration;
  double mean_a_psd_open = 0.0;
  double mean_a_psd_closed = 0.0;
  std::vector<SegmentStats> segments;
  std::optional<CharacterSummary> character;
  std::optional<FlowerSummary> flower;
  std::vector<std::string> files;  // names relative to the output directory

  nlohmann::json to_json() const;
};

/// Resolves the run's calibration: a calibration file, explicit values, or
/// automatic calibration on a synthetic eyes-closed recording (or the replay
/// file itself for replay sources).
Calibration resolve_calibration(const RunConfig& config);

/// Samples a calibration recording for `config` (synthetic eyes-closed or the
/// start of the replay file) of `calibration_duration_s` seconds.
std::vector<EegSample> calibration_recording(const RunConfig& config);

class Telemetry;

/// One run of the full chain on the 100 Hz simulation clock:
///   source -> dsp -> pacing + wire codec -> mapping -> embodiments.
/// Each `step()` advances one control tick. EEG samples stamped at or before
/// the tick time are consumed first, then the pacers, then the plants.
class Pipeline {
 public:
  /// `output_dir` empty disables CSV telemetry. An unbounded pipeline ignores
  /// the configured duration and keeps running past the end of the scenario
  /// (the last eyes state holds).
  Pipeline(RunConfig config, Calibration calibration, const std::filesystem::path& output_dir,
           bool unbounded = false);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void step();
  /// Steps until the configured duration is reached.
  void run_to_end();
  bool finished() const noexcept { return total_ticks_ && tick_ >= *total_ticks_; }

  /// Flushes telemetry and writes report.json (when telemetry is enabled).
  RunReport finish();

  std::uint64_t tick_index() const noexcept { return tick_; }
  double now() const noexcept { return static_cast<double>(tick_) * kControlPeriod; }
  std::optional<std::uint64_t> total_ticks() const noexcept { return total_ticks_; }

  // Live control, applied between ticks.
  /// Throws ConfigError for replay sources.
  void set_eyes(Eyes eyes);
  void set_alpha_override(std::optional<double> a_psd);
  void set_guard(bool enabled);
  void set_mapping(const MappingParams& params);
  void set_calibration(const Calibration& cal);
  void set_pid_gains(const PidGains& gains);

  const RunConfig& config() const noexcept { return config_; }
  std::optional<Eyes> eyes() const noexcept;
  std::optional<double> alpha_override() const noexcept { return override_; }
  const std::optional<AlphaReading>& latest_reading() const noexcept { return latest_reading_; }
  const std::optional<SpectrumFrame>& latest_spectrum() const noexcept { return latest_spectrum_; }
  const Calibration& calibration() const noexcept { return detector_.calibration(); }
  const MappingParams& mapping() const noexcept { return config_.mapping; }
  const CharacterPlant& character() const noexcept { return character_; }
  int duty() const noexcept { return duty_; }
  const FlowerRig& flower() const noexcept { return flower_; }
  const std::optional<FlowerTick>& latest_flower_tick() const noexcept { return last_flower_; }
  std::size_t frames_emitted() const noexcept { return frames_; }

 private:
  struct ReplayBuffer {
    std::vector<EegSample> samples;
    std::size_t next = 0;
  };

  std::optional<EegSample> next_sample();
  void consume_samples(std::int64_t until_us);
  void on_reading(const DspOutput& out);
  std::optional<int> transmit(FramePacer& pacer, FrameDecoder& decoder, double t);
  void track_eyes(double t);

  RunConfig config_;
  std::variant<SyntheticEeg, ReplayBuffer> source_;
  AlphaDetector detector_;
  FramePacer character_pacer_;
  FramePacer flower_pacer_;
  FrameDecoder character_link_;
  FrameDecoder flower_link_;
  CharacterPlant character_;
  FlowerRig flower_;
  std::unique_ptr<Telemetry> telemetry_;

  std::uint64_t tick_ = 0;
  std::uint64_t next_sample_ = 0;
  std::optional<std::uint64_t> total_ticks_;
  std::optional<double> override_;
  int duty_ = 0;
  std::optional<AlphaReading> latest_reading_;
  std::optional<SpectrumFrame> latest_spectrum_;
  std::optional<FlowerTick> last_flower_;
  std::size_t frames_ = 0;

  // Report accumulators.
  std::vector<EyesSegment> timeline_;
  std::vector<AlphaReading> readings_;
  std::vector<std::pair<double, int>> duties_;
  std::size_t flower_commands_ = 0;
  std::size_t character_rows_ = 0;
  std::size_t flower_rows_ = 0;
  double min_p_ = 0.0;
  double max_p_ = 0.0;
  bool seen_deflation_ = false;
  std::optional<double> min_p_after_inflation_;
};

/// Validates the config, calibrates, runs to the end (paced to the wall clock
/// when `config.realtime`), and writes every CSV plus report.json into
/// `config.output_dir`.
RunReport run(const RunConfig& config);

/// Calibrates from the configured source and writes
/// `<output_dir>/calibration.txt`.
Calibration calibrate_cmd(const RunConfig& config);

/// Reads a finished run's CSVs and writes figure-shaped data next to them.
/// Returns the names of the files written. Throws IoError when inputs are
/// missing.
std::vector<std::string> export_figures(const std::filesystem::path& run_output_dir);

}  // namespace softbci
