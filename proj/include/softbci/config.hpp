#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "softbci/dsp.hpp"
#include "softbci/embodiment.hpp"
#include "softbci/mapping.hpp"
#include "softbci/signal_source.hpp"

namespace softbci {

enum class Embodiment { Character, Flower, Both };
enum class SourceKind { Synth, Replay };

std::string_view to_string(Embodiment e) noexcept;
std::string_view to_string(SourceKind s) noexcept;

inline constexpr double kCharacterCadence = 1.0;  // s between duty updates
inline constexpr double kFlowerCadence = 5.0;     // s between flower commands

/// Everything needed to reproduce a run. Plain value; `validate()` checks the
/// cross-field invariants.
struct RunConfig {
  Embodiment embodiment = Embodiment::Both;
  SourceKind source = SourceKind::Synth;
  SynthParams synth;
  Scenario scenario = default_scenario();
  std::filesystem::path replay_path;

  // Calibration: a file, explicit values, or (when both are absent) automatic
  // calibration on a synthetic eyes-closed recording.
  std::filesystem::path calibration_path;
  std::optional<double> p_ref;
  std::optional<double> threshold;
  double calibration_duration_s = 10.0;

  DspConfig dsp;
  MappingParams mapping;
  FlowerPlantParams plant;
  SensorParams sensor;
  PidGains pid;
  CharacterParams character;

  std::optional<double> cadence_s;   // overrides both per-embodiment cadences
  std::optional<double> duration_s;  // defaults to the scenario length
  bool guard_enabled = true;
  std::uint64_t seed = 1;
  bool realtime = false;
  std::filesystem::path output_dir = "out";

  bool has_character() const noexcept { return embodiment != Embodiment::Flower; }
  bool has_flower() const noexcept { return embodiment != Embodiment::Character; }
  double character_cadence() const noexcept { return cadence_s.value_or(kCharacterCadence); }
  double flower_cadence() const noexcept { return cadence_s.value_or(kFlowerCadence); }

  /// Throws ConfigError.
  void validate() const;
};

/// Sets one key (the same keys the config file accepts). Throws ConfigError
/// for unknown keys and unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Names of every accepted key, in documentation order.
std::vector<std::string> config_keys();

/// Flat `key = value` text; '#' starts a comment. Throws ParseError.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

nlohmann::json to_json(const RunConfig& config);
/// Applies every member of a JSON object as a setting on top of `base`.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Calibration file: `p_ref = <v>` and `threshold = <v>` lines.
Calibration load_calibration(const std::filesystem::path& path);
void save_calibration(const std::filesystem::path& path, const Calibration& cal);

/// Seeds derived from the run seed so that every random stream is distinct
/// but reproducible.
std::uint64_t sensor_seed(std::uint64_t seed) noexcept;
std::uint64_t calibration_seed(std::uint64_t seed) noexcept;

}  // namespace softbci
