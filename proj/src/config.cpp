#include "softbci/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "softbci/error.hpp"
#include "text_util.hpp"

namespace softbci {

using nlohmann::json;

std::string_view to_string(Embodiment e) noexcept {
  switch (e) {
    case Embodiment::Character:
      return "character";
    case Embodiment::Flower:
      return "flower";
    case Embodiment::Both:
      break;
  }
  return "both";
}

std::string_view to_string(SourceKind s) noexcept {
  return s == SourceKind::Synth ? "synth" : "replay";
}

std::uint64_t sensor_seed(std::uint64_t seed) noexcept { return seed ^ 0x9E3779B97F4A7C15ULL; }
std::uint64_t calibration_seed(std::uint64_t seed) noexcept { return seed + 1; }

void RunConfig::validate() const {
  synth.validate();
  softbci::validate(scenario);
  dsp.filter.validate();
  if (dsp.window_length != kWindowLength || dsp.hop != kWindowHop) {
    throw ConfigError("window length and hop are fixed at 500 / 250 samples");
  }
  mapping.validate();
  plant.validate();
  pid.validate();
  character.validate();
  if (!(sensor.noise_sigma >= 0.0) || sensor.window == 0) {
    throw ConfigError("sensor needs noise_sigma >= 0 and window >= 1");
  }
  if (source == SourceKind::Replay) {
    if (replay_path.empty()) throw ConfigError("replay source needs a replay file");
    if (!std::filesystem::exists(replay_path)) {
      throw IoError("replay file not found: " + replay_path.string());
    }
  }
  if (!calibration_path.empty() && !std::filesystem::exists(calibration_path)) {
    throw IoError("calibration file not found: " + calibration_path.string());
  }
  if (p_ref && !(*p_ref > 0.0)) throw ConfigError("p_ref must be positive");
  if (threshold && !(*threshold >= 0.0)) throw ConfigError("threshold must be non-negative");
  if (!(calibration_duration_s > 0.0)) throw ConfigError("calibration_duration_s must be positive");
  if (cadence_s && !(*cadence_s > 0.0)) throw ConfigError("cadence_s must be positive");
  if (duration_s && !(*duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (output_dir.empty()) throw ConfigError("output directory must be set");
}

namespace {

double to_double(std::string_view key, std::string_view value) {
  const auto v = detail::parse_double(value);
  if (!v) throw ConfigError(fmt::format("`{}` expects a number, got `{}`", key, value));
  return *v;
}

bool to_bool(std::string_view key, std::string_view value) {
  const auto v = detail::lower(detail::trim(value));
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("`{}` expects on|off, got `{}`", key, value));
}

std::string scenario_text(const Scenario& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ';';
    out += fmt::format("{},{}", to_string(s[i].eyes), s[i].duration);
  }
  return out;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<json(const RunConfig&)> get;
};

template <class Member>
Key number_key(const char* name, Member member) {
  return {name,
          [name, member](RunConfig& c, std::string_view v) { member(c) = to_double(name, v); },
          [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c))); }};
}

Key mapping_key(const char* name) {
  return {name,
          [name](RunConfig& c, std::string_view v) {
            // Validated with the whole config; a file may move both endpoints.
            c.mapping = with_param(c.mapping, name, to_double(name, v), false);
          },
          [name](const RunConfig& c) {
            const std::string_view n = name;
            const auto& m = c.mapping;
            if (n == "alpha_gain") return json(m.alpha_gain);
            // The slopes follow from the endpoints.
            if (n == "beta_gain" || n == "gamma_gain") return json(nullptr);
            if (n == "p_min") return json(m.p_min);
            if (n == "p_max") return json(m.p_max);
            if (n == "t_inf_min") return json(m.t_inf_min);
            if (n == "t_inf_max") return json(m.t_inf_max);
            return json(m.deflate_offset);
          }};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back({"embodiment",
                 [](RunConfig& c, std::string_view v) {
                   const auto s = detail::lower(detail::trim(v));
                   if (s == "character") c.embodiment = Embodiment::Character;
                   else if (s == "flower") c.embodiment = Embodiment::Flower;
                   else if (s == "both") c.embodiment = Embodiment::Both;
                   else throw ConfigError("`embodiment` expects character|flower|both");
                 },
                 [](const RunConfig& c) { return json(std::string(to_string(c.embodiment))); }});
    k.push_back({"source",
                 [](RunConfig& c, std::string_view v) {
                   const auto s = detail::lower(detail::trim(v));
                   if (s == "synth") c.source = SourceKind::Synth;
                   else if (s == "replay") c.source = SourceKind::Replay;
                   else throw ConfigError("`source` expects synth|replay");
                 },
                 [](const RunConfig& c) { return json(std::string(to_string(c.source))); }});
    k.push_back({"replay",
                 [](RunConfig& c, std::string_view v) {
                   c.replay_path = std::string(detail::trim(v));
                   c.source = SourceKind::Replay;
                 },
                 [](const RunConfig& c) {
                   return c.source == SourceKind::Replay ? json(c.replay_path.string()) : json(nullptr);
                 }});
    k.push_back({"scenario",
                 [](RunConfig& c, std::string_view v) {
                   c.scenario = load_scenario(std::string(detail::trim(v)));
                 },
                 [](const RunConfig&) { return json(nullptr); }});
    k.push_back({"scenario_segments",
                 [](RunConfig& c, std::string_view v) {
                   std::string text(v);
                   for (auto& ch : text) {
                     if (ch == ';') ch = '\n';
                   }
                   std::istringstream in(text);
                   c.scenario = parse_scenario(in);
                 },
                 [](const RunConfig& c) { return json(scenario_text(c.scenario)); }});
    k.push_back({"seed",
                 [](RunConfig& c, std::string_view v) {
                   const auto s = detail::parse_u64(v);
                   if (!s) throw ConfigError("`seed` expects an unsigned 64-bit integer");
                   c.seed = *s;
                 },
                 [](const RunConfig& c) { return json(c.seed); }});
    k.push_back({"realtime", [](RunConfig& c, std::string_view v) { c.realtime = to_bool("realtime", v); },
                 [](const RunConfig& c) { return json(c.realtime); }});
    k.push_back({"guard", [](RunConfig& c, std::string_view v) { c.guard_enabled = to_bool("guard", v); },
                 [](const RunConfig& c) { return json(c.guard_enabled); }});
    k.push_back({"out", [](RunConfig& c, std::string_view v) { c.output_dir = std::string(detail::trim(v)); },
                 [](const RunConfig& c) { return json(c.output_dir.string()); }});
    k.push_back({"duration_s",
                 [](RunConfig& c, std::string_view v) { c.duration_s = to_double("duration_s", v); },
                 [](const RunConfig& c) { return optional_json(c.duration_s); }});
    k.push_back({"cadence_s",
                 [](RunConfig& c, std::string_view v) { c.cadence_s = to_double("cadence_s", v); },
                 [](const RunConfig& c) { return optional_json(c.cadence_s); }});

    k.push_back(number_key("alpha_freq", [](RunConfig& c) -> double& { return c.synth.alpha_freq; }));
    k.push_back(number_key("alpha_amp_closed", [](RunConfig& c) -> double& { return c.synth.alpha_amp_closed; }));
    k.push_back(number_key("alpha_amp_open", [](RunConfig& c) -> double& { return c.synth.alpha_amp_open; }));
    k.push_back(number_key("noise_amp", [](RunConfig& c) -> double& { return c.synth.noise_amp; }));
    k.push_back(number_key("transition_tau", [](RunConfig& c) -> double& { return c.synth.transition_tau; }));

    k.push_back({"calibration",
                 [](RunConfig& c, std::string_view v) {
                   const auto s = detail::trim(v);
                   if (detail::lower(s) == "auto") c.calibration_path.clear();
                   else c.calibration_path = std::string(s);
                 },
                 [](const RunConfig& c) {
                   return json(c.calibration_path.empty() ? std::string("auto")
                                                          : c.calibration_path.string());
                 }});
    k.push_back({"p_ref", [](RunConfig& c, std::string_view v) { c.p_ref = to_double("p_ref", v); },
                 [](const RunConfig& c) { return optional_json(c.p_ref); }});
    k.push_back({"threshold",
                 [](RunConfig& c, std::string_view v) { c.threshold = to_double("threshold", v); },
                 [](const RunConfig& c) { return optional_json(c.threshold); }});
    k.push_back(number_key("calibration_duration_s",
                           [](RunConfig& c) -> double& { return c.calibration_duration_s; }));

    k.push_back(number_key("filter_low_hz", [](RunConfig& c) -> double& { return c.dsp.filter.low_cut; }));
    k.push_back(number_key("filter_high_hz", [](RunConfig& c) -> double& { return c.dsp.filter.high_cut; }));
    k.push_back({"filter_order",
                 [](RunConfig& c, std::string_view v) {
                   const auto n = detail::parse_u64(v);
                   if (!n || *n > 64) throw ConfigError("`filter_order` expects an even integer");
                   c.dsp.filter.order = static_cast<int>(*n);
                 },
                 [](const RunConfig& c) { return json(c.dsp.filter.order); }});
    k.push_back({"window",
                 [](RunConfig& c, std::string_view v) {
                   const auto s = detail::lower(detail::trim(v));
                   if (s == "rectangular" || s == "rect") c.dsp.window = WindowKind::Rectangular;
                   else if (s == "hann") c.dsp.window = WindowKind::Hann;
                   else throw ConfigError("`window` expects rectangular|hann");
                 },
                 [](const RunConfig& c) {
                   return json(c.dsp.window == WindowKind::Hann ? "hann" : "rectangular");
                 }});

    for (const char* name : {"alpha_gain", "beta_gain", "gamma_gain", "p_min", "p_max", "t_inf_min",
                             "t_inf_max", "deflate_offset"}) {
      k.push_back(mapping_key(name));
    }

    k.push_back(number_key("p_ambient", [](RunConfig& c) -> double& { return c.plant.p_ambient; }));
    k.push_back(number_key("p_supply", [](RunConfig& c) -> double& { return c.plant.p_supply; }));
    k.push_back(number_key("k_pump", [](RunConfig& c) -> double& { return c.plant.k_pump; }));
    k.push_back(number_key("k_vent", [](RunConfig& c) -> double& { return c.plant.k_vent; }));
    k.push_back(number_key("p_initial", [](RunConfig& c) -> double& { return c.plant.p_initial; }));
    k.push_back(number_key("noise_sigma", [](RunConfig& c) -> double& { return c.sensor.noise_sigma; }));
    k.push_back({"sensor_window",
                 [](RunConfig& c, std::string_view v) {
                   const auto n = detail::parse_u64(v);
                   if (!n || *n == 0) throw ConfigError("`sensor_window` expects a positive integer");
                   c.sensor.window = static_cast<std::size_t>(*n);
                 },
                 [](const RunConfig& c) { return json(c.sensor.window); }});
    k.push_back(number_key("kp", [](RunConfig& c) -> double& { return c.pid.kp; }));
    k.push_back(number_key("ki", [](RunConfig& c) -> double& { return c.pid.ki; }));
    k.push_back(number_key("kd", [](RunConfig& c) -> double& { return c.pid.kd; }));
    k.push_back(number_key("windup_limit", [](RunConfig& c) -> double& { return c.pid.windup_limit; }));
    k.push_back(number_key("omega_max", [](RunConfig& c) -> double& { return c.character.omega_max; }));
    k.push_back(number_key("motor_tau", [](RunConfig& c) -> double& { return c.character.motor_tau; }));
    k.push_back(number_key("wobble_gain", [](RunConfig& c) -> double& { return c.character.wobble_gain; }));
    return k;
  }();
  return keys;
}

const Key* find_key(std::string_view name) {
  for (const auto& k : key_table()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const auto* k = find_key(detail::trim(key));
  if (!k) throw ConfigError(fmt::format("unknown config key `{}`", key));
  k->set(config, detail::trim(value));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const auto& k : key_table()) names.emplace_back(k.name);
  return names;
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = detail::trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected `key = value`");
    try {
      apply_setting(base, text.substr(0, eq), text.substr(eq + 1));
    } catch (const ParseError&) {
      throw;
    } catch (const ConfigError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

json to_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& k : key_table()) {
    auto v = k.get(config);
    if (!v.is_null()) j[k.name] = std::move(v);
  }
  return j;
}

RunConfig config_from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (value.is_null()) continue;
    if (value.is_string()) {
      apply_setting(base, key, value.get<std::string>());
    } else if (value.is_boolean()) {
      apply_setting(base, key, value.get<bool>() ? "on" : "off");
    } else if (value.is_number_unsigned()) {
      apply_setting(base, key, std::to_string(value.get<std::uint64_t>()));
    } else if (value.is_number()) {
      apply_setting(base, key, fmt::format("{}", value.get<double>()));
    } else {
      throw ConfigError(fmt::format("config key `{}` has an unsupported JSON type", key));
    }
  }
  return base;
}

Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  std::optional<double> p_ref, threshold;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected `key = value`");
    const auto key = detail::trim(text.substr(0, eq));
    const auto value = detail::parse_double(text.substr(eq + 1));
    if (!value) throw ParseError(line_no, "value is not a number");
    if (key == "p_ref") p_ref = value;
    else if (key == "threshold") threshold = value;
    else throw ParseError(line_no, fmt::format("unknown calibration key `{}`", key));
  }
  if (!p_ref || !threshold) throw ConfigError("calibration file needs p_ref and threshold");
  Calibration cal{*p_ref, *threshold};
  cal.validate();
  return cal;
}

void save_calibration(const std::filesystem::path& path, const Calibration& cal) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write calibration file " + path.string());
  out << fmt::format("# alpha-power calibration (uV^2/Hz)\np_ref = {}\nthreshold = {}\n", cal.p_ref,
                     cal.threshold);
  if (!out) throw IoError("failed writing calibration file " + path.string());
}

}  // namespace softbci
