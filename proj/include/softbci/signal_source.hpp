#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace softbci {

inline constexpr double kEegRateHz = 250.0;

struct EegSample {
  double t = 0.0;  // seconds since stream start
  double v = 0.0;  // microvolts
};

enum class Eyes { Open, Closed };

std::string_view to_string(Eyes eyes) noexcept;
std::optional<Eyes> parse_eyes(std::string_view text) noexcept;

struct ScenarioSegment {
  Eyes eyes = Eyes::Open;
  double duration = 0.0;  // seconds
};

using Scenario = std::vector<ScenarioSegment>;

/// The built-in 70 s eyes-open / eyes-closed protocol:
/// open 10 s, closed 20 s, open 10 s, closed 20 s, open 10 s.
Scenario default_scenario();

/// Throws ConfigError on an empty scenario or a non-positive duration.
void validate(const Scenario& scenario);
double total_duration(const Scenario& scenario) noexcept;

/// Eyes state at time t. Past the end of the script the last segment's state holds.
Eyes eyes_at(const Scenario& scenario, double t) noexcept;

/// Index of the segment containing t, or the last index once the script is exhausted.
std::size_t segment_index_at(const Scenario& scenario, double t) noexcept;

/// Scenario file: one `open|closed,<duration_s>` segment per line. Blank lines
/// and lines starting with '#' are ignored.
Scenario parse_scenario(std::istream& in);
Scenario load_scenario(const std::filesystem::path& path);

struct SynthParams {
  double alpha_freq = 10.0;        // Hz
  double alpha_amp_closed = 20.0;  // uV
  double alpha_amp_open = 2.0;     // uV
  double noise_amp = 4.0;          // uV RMS of the pink background
  double transition_tau = 0.5;     // s
  double phase = 0.0;              // rad
  std::uint64_t rng_seed = 1;

  void validate() const;
};

// Pink (1/f) noise: white Gaussian noise through Paul Kellet's parallel
// one-pole bank, rescaled to unit variance from the bank's impulse-response
// energy.
class PinkNoise {
 public:
  explicit PinkNoise(std::uint64_t seed);
  double next();

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> white_{0.0, 1.0};
  double b_[7] = {};
  double scale_ = 1.0;
};

/// Synthetic single-channel occipital EEG: an alpha sinusoid whose amplitude
/// relaxes exponentially toward the eyes-open or eyes-closed level, plus pink
/// background noise. Deterministic for a given seed and eyes-state history.
class SyntheticEeg {
 public:
  SyntheticEeg(SynthParams params, Scenario scenario);

  EegSample next_sample();

  /// Live steering: takes precedence over the scenario until cleared.
  void set_eyes_override(Eyes eyes) noexcept { override_ = eyes; }
  void clear_eyes_override() noexcept { override_.reset(); }

  /// Eyes state that will drive the next sample.
  Eyes current_eyes() const noexcept;
  std::uint64_t samples_emitted() const noexcept { return index_; }
  double amplitude() const noexcept { return amplitude_; }
  const SynthParams& params() const noexcept { return params_; }
  const Scenario& scenario() const noexcept { return scenario_; }

 private:
  double target_amplitude(Eyes eyes) const noexcept;

  SynthParams params_;
  Scenario scenario_;
  PinkNoise noise_;
  std::optional<Eyes> override_;
  std::uint64_t index_ = 0;
  double amplitude_ = 0.0;
  double decay_ = 0.0;
};

/// Replays a raw-EEG CSV (`t_s,eeg_uV`, 250 Hz implied). Timestamps are
/// reconstructed from the row index; the file's t_s column must agree with
/// that grid to within half a sample. An optional leading `# fs_hz=<rate>`
/// line is checked against 250 Hz.
class ReplaySource {
 public:
  explicit ReplaySource(const std::filesystem::path& path);
  explicit ReplaySource(std::unique_ptr<std::istream> in);

  /// Next sample in file order, or nullopt at end of stream.
  std::optional<EegSample> replay_next();
  std::uint64_t samples_emitted() const noexcept { return index_; }

 private:
  void read_header();

  std::unique_ptr<std::istream> in_;
  std::size_t line_ = 0;
  std::uint64_t index_ = 0;
  std::optional<std::string> lookahead_;
};

/// Reads a whole raw-EEG CSV into memory.
std::vector<EegSample> read_eeg_csv(const std::filesystem::path& path);

}  // namespace softbci
