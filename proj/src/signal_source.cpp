#include "softbci/signal_source.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <sstream>

#include "softbci/error.hpp"
#include "text_util.hpp"

namespace softbci {

std::string_view to_string(Eyes eyes) noexcept {
  return eyes == Eyes::Open ? "open" : "closed";
}

std::optional<Eyes> parse_eyes(std::string_view text) noexcept {
  const auto t = detail::lower(detail::trim(text));
  if (t == "open") return Eyes::Open;
  if (t == "closed") return Eyes::Closed;
  return std::nullopt;
}

Scenario default_scenario() {
  return {
      {Eyes::Open, 10.0},
      {Eyes::Closed, 20.0},
      {Eyes::Open, 10.0},
      {Eyes::Closed, 20.0},
      {Eyes::Open, 10.0},
  };
}

void validate(const Scenario& scenario) {
  if (scenario.empty()) throw ConfigError("scenario has no segments");
  for (std::size_t i = 0; i < scenario.size(); ++i) {
    const double d = scenario[i].duration;
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw ConfigError("scenario segment " + std::to_string(i) + " has non-positive duration");
    }
  }
}

double total_duration(const Scenario& scenario) noexcept {
  double total = 0.0;
  for (const auto& s : scenario) total += s.duration;
  return total;
}

std::size_t segment_index_at(const Scenario& scenario, double t) noexcept {
  double end = 0.0;
  for (std::size_t i = 0; i < scenario.size(); ++i) {
    end += scenario[i].duration;
    if (t < end) return i;
  }
  return scenario.empty() ? 0 : scenario.size() - 1;
}

Eyes eyes_at(const Scenario& scenario, double t) noexcept {
  if (scenario.empty()) return Eyes::Open;
  return scenario[segment_index_at(scenario, t)].eyes;
}

Scenario parse_scenario(std::istream& in) {
  Scenario scenario;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto fields = detail::split(text, ',');
    if (fields.size() != 2) throw ParseError(line_no, "expected `open|closed,<duration_s>`");
    const auto eyes = parse_eyes(fields[0]);
    if (!eyes) throw ParseError(line_no, "eyes state must be `open` or `closed`");
    const auto duration = detail::parse_double(fields[1]);
    if (!duration) throw ParseError(line_no, "duration is not a number");
    if (*duration <= 0.0) throw ParseError(line_no, "duration must be positive");
    scenario.push_back({*eyes, *duration});
  }
  validate(scenario);
  return scenario;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  return parse_scenario(in);
}

void SynthParams::validate() const {
  if (!(alpha_freq >= 8.0 && alpha_freq <= 13.0)) {
    throw ConfigError("alpha_freq must lie in [8, 13] Hz");
  }
  if (!(alpha_amp_open >= 0.0) || !(alpha_amp_closed >= 0.0) || !(noise_amp >= 0.0)) {
    throw ConfigError("synthetic amplitudes must be non-negative");
  }
  if (!(alpha_amp_open < alpha_amp_closed)) {
    throw ConfigError("alpha_amp_open must be below alpha_amp_closed");
  }
  if (!(transition_tau >= 0.0) || !std::isfinite(transition_tau)) {
    throw ConfigError("transition_tau must be non-negative");
  }
  if (!std::isfinite(phase)) throw ConfigError("phase must be finite");
}

namespace {

constexpr double kPole[6] = {0.99886, 0.99332, 0.96900, 0.86650, 0.55000, -0.7616};
constexpr double kGain[6] = {0.0555179, 0.0750759, 0.1538520, 0.3104856, 0.5329522, -0.0168980};
constexpr double kDirect = 0.5362;
constexpr double kDelayed = 0.115926;

double kellet_step(double (&b)[7], double w) noexcept {
  double out = b[6] + w * kDirect;
  for (int i = 0; i < 6; ++i) {
    b[i] = kPole[i] * b[i] + w * kGain[i];
    out += b[i];
  }
  b[6] = w * kDelayed;
  return out;
}

double kellet_rms_gain() {
  double b[7] = {};
  double energy = 0.0;
  for (int n = 0; n < 60000; ++n) {
    const double h = kellet_step(b, n == 0 ? 1.0 : 0.0);
    energy += h * h;
  }
  return std::sqrt(energy);
}

}  // namespace

PinkNoise::PinkNoise(std::uint64_t seed) : rng_(seed) {
  static const double gain = kellet_rms_gain();
  scale_ = 1.0 / gain;
}

double PinkNoise::next() { return kellet_step(b_, white_(rng_)) * scale_; }

SyntheticEeg::SyntheticEeg(SynthParams params, Scenario scenario)
    : params_(params), scenario_(std::move(scenario)), noise_(params.rng_seed) {
  params_.validate();
  softbci::validate(scenario_);
  const double dt = 1.0 / kEegRateHz;
  decay_ = params_.transition_tau > 0.0 ? std::exp(-dt / params_.transition_tau) : 0.0;
  amplitude_ = target_amplitude(current_eyes());
}

Eyes SyntheticEeg::current_eyes() const noexcept {
  if (override_) return *override_;
  return eyes_at(scenario_, static_cast<double>(index_) / kEegRateHz);
}

double SyntheticEeg::target_amplitude(Eyes eyes) const noexcept {
  return eyes == Eyes::Closed ? params_.alpha_amp_closed : params_.alpha_amp_open;
}

EegSample SyntheticEeg::next_sample() {
  const double t = static_cast<double>(index_) / kEegRateHz;
  if (index_ > 0) {
    const double target = target_amplitude(current_eyes());
    amplitude_ = target + (amplitude_ - target) * decay_;
  }
  const double carrier = std::sin(2.0 * std::numbers::pi * params_.alpha_freq * t + params_.phase);
  // Always draw, so the noise sequence does not depend on noise_amp.
  const double noise = noise_.next();
  ++index_;
  return {t, amplitude_ * carrier + params_.noise_amp * noise};
}

ReplaySource::ReplaySource(const std::filesystem::path& path) {
  auto file = std::make_unique<std::ifstream>(path);
  if (!*file) throw IoError("cannot open replay file " + path.string());
  in_ = std::move(file);
  read_header();
}

ReplaySource::ReplaySource(std::unique_ptr<std::istream> in) : in_(std::move(in)) {
  read_header();
}

void ReplaySource::read_header() {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      const auto body = detail::trim(text.substr(1));
      if (body.starts_with("fs_hz=")) {
        const auto fs = detail::parse_double(body.substr(6));
        if (!fs || *fs != kEegRateHz) {
          throw ConfigError("replay sample rate mismatch: file declares `" + std::string(body) +
                            "`, pipeline expects 250 Hz");
        }
      }
      continue;
    }
    if (text != "t_s,eeg_uV") {
      throw ConfigError("line " + std::to_string(line_) + ": expected header `t_s,eeg_uV`");
    }
    return;
  }
  throw ConfigError("replay file has no `t_s,eeg_uV` header");
}

std::optional<EegSample> ReplaySource::replay_next() {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto fields = detail::split(text, ',');
    if (fields.size() != 2) throw ParseError(line_, "expected 2 fields `t_s,eeg_uV`");
    const auto t_file = detail::parse_double(fields[0]);
    const auto v = detail::parse_double(fields[1]);
    if (!t_file) throw ParseError(line_, "t_s is not a finite number");
    if (!v) throw ParseError(line_, "eeg_uV is not a finite number");
    const double t = static_cast<double>(index_) / kEegRateHz;
    if (std::abs(*t_file - t) > 0.5 / kEegRateHz) {
      throw ConfigError("line " + std::to_string(line_) +
                        ": timestamp does not match the 250 Hz sample grid");
    }
    ++index_;
    return EegSample{t, *v};
  }
  return std::nullopt;
}

std::vector<EegSample> read_eeg_csv(const std::filesystem::path& path) {
  ReplaySource source(path);
  std::vector<EegSample> samples;
  while (auto s = source.replay_next()) samples.push_back(*s);
  return samples;
}

}  // namespace softbci
