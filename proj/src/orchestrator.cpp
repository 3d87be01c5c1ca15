#include "softbci/orchestrator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include "csv.hpp"
#include "softbci/error.hpp"
#include "text_util.hpp"

namespace softbci {

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("file not found: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  for (auto f : split(trim(line), ',')) table.header.emplace_back(f);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> row;
    for (auto f : split(trim(line), ',')) row.emplace_back(f);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace detail

namespace {

constexpr std::int64_t kTickUs = 10'000;
constexpr std::int64_t kSampleUs = 4'000;

std::string eyes_label(const std::optional<Eyes>& eyes) {
  return eyes ? std::string(to_string(*eyes)) : std::string("unknown");
}

json segment_json(const EyesSegment& s) {
  return {{"start_s", s.start}, {"end_s", s.end}, {"eyes", eyes_label(s.eyes)}};
}

}  // namespace

json RunReport::to_json() const {
  json j;
  j["duration_s"] = duration_s;
  j["ticks"] = ticks;
  j["samples"] = samples;
  j["frames_emitted"] = frames_emitted;
  j["alpha_events"] = alpha_events;
  j["link_errors"] = link_errors;
  j["calibration"] = {{"p_ref", calibration.p_ref}, {"threshold", calibration.threshold}};
  j["mean_a_psd_open"] = mean_a_psd_open;
  j["mean_a_psd_closed"] = mean_a_psd_closed;
  j["segments"] = json::array();
  for (const auto& s : segments) {
    auto sj = segment_json(s.segment);
    sj["frames"] = s.frames;
    sj["mean_a_psd"] = s.mean_a_psd;
    sj["duty_updates"] = s.duty_updates;
    sj["mean_duty"] = s.mean_duty;
    j["segments"].push_back(std::move(sj));
  }
  if (character) {
    j["character"] = {{"updates", character->updates},
                      {"trace_rows", character->trace_rows},
                      {"min_duty", character->min_duty},
                      {"max_duty", character->max_duty},
                      {"mean_duty_open", character->mean_duty_open},
                      {"mean_duty_closed", character->mean_duty_closed}};
  }
  if (flower) {
    j["flower"] = {{"commands", flower->commands},
                   {"trace_rows", flower->trace_rows},
                   {"min_p_true_kpa", flower->min_p_true},
                   {"max_p_true_kpa", flower->max_p_true}};
    j["flower"]["min_p_after_first_inflation_kpa"] =
        flower->min_p_after_first_inflation ? json(*flower->min_p_after_first_inflation)
                                            : json(nullptr);
  }
  j["files"] = files;
  return j;
}

// ---------------------------------------------------------------------------
// Telemetry

class Telemetry {
 public:
  Telemetry(const fs::path& dir, const RunConfig& config) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    eeg.emplace(dir / "eeg_raw.csv", "t_s,eeg_uV");
    psd.emplace(dir / "psd.csv", "frame_idx,t_end_s,f_hz,psd");
    alpha.emplace(dir / "alpha.csv", "t_s,p_alpha,a_psd,gated");
    if (config.has_character()) {
      character_cmd.emplace(dir / "character_commands.csv", "t_s,a_psd,duty");
      character_trace.emplace(dir / "character_trace.csv", "t_s,duty,omega,dance_freq_hz,amplitude");
    }
    if (config.has_flower()) {
      flower_cmd.emplace(dir / "flower_commands.csv",
                         "t_s,a_psd,setpoint_kpa,t_inflation_s,t_deflation_s");
      pressure.emplace(dir / "pressure_trace.csv",
                       "t_s,p_true_kpa,p_meas_kpa,p_filt_kpa,valve,pump_effort,phase");
    }
  }

  std::vector<std::string> close_all() {
    std::vector<std::string> names;
    for (auto* w : {&eeg, &psd, &alpha, &character_cmd, &character_trace, &flower_cmd, &pressure}) {
      if (*w) {
        (*w)->close();
        names.push_back((*w)->path().filename().string());
      }
    }
    return names;
  }

  const fs::path& dir() const noexcept { return dir_; }

  std::optional<detail::CsvWriter> eeg, psd, alpha;
  std::optional<detail::CsvWriter> character_cmd, character_trace;
  std::optional<detail::CsvWriter> flower_cmd, pressure;

 private:
  fs::path dir_;
};

// ---------------------------------------------------------------------------
// Calibration

std::vector<EegSample> calibration_recording(const RunConfig& config) {
  const auto n = static_cast<std::size_t>(std::llround(config.calibration_duration_s * kEegRateHz));
  std::vector<EegSample> samples;
  if (config.source == SourceKind::Replay) {
    auto all = read_eeg_csv(config.replay_path);
    if (all.size() > n) all.resize(n);
    return all;
  }
  SynthParams params = config.synth;
  params.rng_seed = calibration_seed(config.seed);
  SyntheticEeg gen(params, {{Eyes::Closed, config.calibration_duration_s}});
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) samples.push_back(gen.next_sample());
  return samples;
}

Calibration resolve_calibration(const RunConfig& config) {
  if (!config.calibration_path.empty()) {
    Calibration cal = load_calibration(config.calibration_path);
    if (config.p_ref) cal.p_ref = *config.p_ref;
    if (config.threshold) cal.threshold = *config.threshold;
    cal.validate();
    return cal;
  }
  if (config.p_ref) {
    Calibration cal{*config.p_ref, config.threshold.value_or(0.25 * *config.p_ref)};
    cal.validate();
    return cal;
  }
  CalibrationOptions options;
  options.dsp = config.dsp;
  options.threshold_override = config.threshold;
  return calibrate(calibration_recording(config), options);
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(RunConfig config, Calibration calibration, const fs::path& output_dir,
                   bool unbounded)
    : config_(std::move(config)),
      source_(ReplayBuffer{}),
      detector_(config_.dsp, calibration),
      character_pacer_(config_.character_cadence()),
      flower_pacer_(config_.flower_cadence()),
      character_(config_.character),
      flower_(FlowerRigParams{config_.plant,
                              SensorParams{config_.sensor.noise_sigma, config_.sensor.window,
                                           sensor_seed(config_.seed)},
                              config_.pid, config_.guard_enabled},
              config_.mapping.p_min) {
  config_.validate();
  double duration = 0.0;
  if (config_.source == SourceKind::Synth) {
    SynthParams params = config_.synth;
    params.rng_seed = config_.seed;
    source_.emplace<SyntheticEeg>(params, config_.scenario);
    duration = config_.duration_s.value_or(total_duration(config_.scenario));
  } else {
    ReplayBuffer buffer{read_eeg_csv(config_.replay_path), 0};
    duration = config_.duration_s.value_or(static_cast<double>(buffer.samples.size()) / kEegRateHz);
    source_ = std::move(buffer);
  }
  if (!unbounded) total_ticks_ = static_cast<std::uint64_t>(std::llround(duration * kControlRateHz));
  if (!output_dir.empty()) telemetry_ = std::make_unique<Telemetry>(output_dir, config_);
  min_p_ = max_p_ = flower_.plant().pressure();
}

Pipeline::~Pipeline() = default;

std::optional<Eyes> Pipeline::eyes() const noexcept {
  if (const auto* gen = std::get_if<SyntheticEeg>(&source_)) return gen->current_eyes();
  return std::nullopt;
}

std::optional<EegSample> Pipeline::next_sample() {
  if (auto* gen = std::get_if<SyntheticEeg>(&source_)) return gen->next_sample();
  auto& replay = std::get<ReplayBuffer>(source_);
  if (replay.next >= replay.samples.size()) return std::nullopt;
  return replay.samples[replay.next++];
}

void Pipeline::track_eyes(double t) {
  const auto state = eyes();
  if (timeline_.empty() || timeline_.back().eyes != state) {
    if (!timeline_.empty()) timeline_.back().end = t;
    timeline_.push_back({t, t, state});
  }
}

void Pipeline::consume_samples(std::int64_t until_us) {
  while (static_cast<std::int64_t>(next_sample_) * kSampleUs < until_us) {
    track_eyes(static_cast<double>(next_sample_) / kEegRateHz);
    const auto sample = next_sample();
    if (!sample) return;
    ++next_sample_;
    if (telemetry_) telemetry_->eeg->row("{},{}", sample->t, sample->v);
    if (auto out = detector_.push_sample(*sample)) on_reading(*out);
  }
}

void Pipeline::on_reading(const DspOutput& out) {
  ++frames_;
  latest_reading_ = out.reading;
  latest_spectrum_ = out.spectrum;
  readings_.push_back(out.reading);
  if (telemetry_) {
    const auto& s = out.spectrum;
    for (std::size_t k = 0; k < s.freq.size(); ++k) {
      telemetry_->psd->row("{},{},{},{}", s.frame_idx, s.t_end, s.freq[k], s.psd[k]);
    }
    const auto& r = out.reading;
    telemetry_->alpha->row("{},{},{},{}", r.t, r.p_alpha, r.a_psd, r.gated ? 1 : 0);
  }
  if (!override_) {
    character_pacer_.offer(out.reading);
    flower_pacer_.offer(out.reading);
  }
}

std::optional<int> Pipeline::transmit(FramePacer& pacer, FrameDecoder& decoder, double t) {
  const auto reading = pacer.poll(t);
  if (!reading) return std::nullopt;
  const auto values = decoder.decode_frame(encode_reading(reading->a_psd));
  if (values.empty()) return std::nullopt;
  return values.back();
}

void Pipeline::step() {
  if (finished()) return;
  // Tick k covers [k dt, (k+1) dt) and is stamped with its end time.
  const std::int64_t now_us = static_cast<std::int64_t>(tick_ + 1) * kTickUs;
  const double t = static_cast<double>(tick_ + 1) * kControlPeriod;
  const char* stage = "source";
  try {
    consume_samples(now_us);

    stage = "link";
    if (override_) {
      const AlphaReading forced{t, 0.0, *override_, true, 0.0, 0.0};
      character_pacer_.offer(forced);
      flower_pacer_.offer(forced);
    }

    if (config_.has_character()) {
      stage = "mapping";
      if (const auto a = transmit(character_pacer_, character_link_, t)) {
        duty_ = to_duty(*a, config_.mapping).duty;
        duties_.emplace_back(t, duty_);
        if (telemetry_) telemetry_->character_cmd->row("{},{},{}", t, *a, duty_);
      }
      stage = "character";
      character_.character_step(duty_, kControlPeriod);
      if (telemetry_) {
        telemetry_->character_trace->row("{},{},{},{},{}", t, duty_, character_.omega(),
                                         character_.dance_frequency_hz(), character_.amplitude());
      }
      ++character_rows_;
    }

    if (config_.has_flower()) {
      stage = "mapping";
      std::optional<FlowerCommand> cmd;
      if (const auto a = transmit(flower_pacer_, flower_link_, t)) {
        cmd = to_flower_command(*a, config_.mapping);
        ++flower_commands_;
        if (telemetry_) {
          telemetry_->flower_cmd->row("{},{},{},{},{}", t, *a, cmd->setpoint, cmd->t_inflation,
                                      cmd->t_deflation);
        }
      }
      stage = "flower";
      auto ft = flower_.tick(cmd);
      // Report the chamber at the end of the tick; the sensor sampled its start.
      ft.p_true = flower_.plant().pressure();
      last_flower_ = ft;
      ++flower_rows_;
      min_p_ = std::min(min_p_, ft.p_true);
      max_p_ = std::max(max_p_, ft.p_true);
      if (ft.phase == CyclePhase::Deflating) seen_deflation_ = true;
      if (seen_deflation_) {
        min_p_after_inflation_ = std::min(min_p_after_inflation_.value_or(ft.p_true), ft.p_true);
      }
      if (telemetry_) {
        telemetry_->pressure->row("{},{},{},{},{},{},{}", t, ft.p_true, ft.p_meas, ft.p_filt,
                                  ft.valve_open ? 1 : 0, ft.pump_effort, to_string(ft.phase));
      }
    }
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw ContractViolation(fmt::format("stage `{}` at tick {} (t={}s): {}", stage, tick_, t, e.what()));
  }
  ++tick_;
}

void Pipeline::run_to_end() {
  while (!finished()) step();
}

void Pipeline::set_eyes(Eyes eyes) {
  auto* gen = std::get_if<SyntheticEeg>(&source_);
  if (!gen) throw ConfigError("eyes state can only be steered on a synthetic source");
  gen->set_eyes_override(eyes);
}

void Pipeline::set_alpha_override(std::optional<double> a_psd) {
  if (a_psd && !(*a_psd >= 0.0 && *a_psd <= 100.0)) {
    throw ConfigError("alpha override must lie in [0, 100]");
  }
  override_ = a_psd;
}

void Pipeline::set_guard(bool enabled) {
  config_.guard_enabled = enabled;
  flower_.scheduler().set_guard(enabled);
}

void Pipeline::set_mapping(const MappingParams& params) {
  params.validate();
  config_.mapping = params;
  flower_.scheduler().set_guard_pressure(params.p_min);
}

void Pipeline::set_calibration(const Calibration& cal) {
  detector_.set_calibration(cal);
  config_.p_ref = cal.p_ref;
  config_.threshold = cal.threshold;
}

void Pipeline::set_pid_gains(const PidGains& gains) {
  flower_.pid().set_gains(gains);
  config_.pid = gains;
}

RunReport Pipeline::finish() {
  RunReport report;
  report.ticks = tick_;
  report.duration_s = now();
  report.samples = next_sample_;
  report.frames_emitted = frames_;
  report.calibration = detector_.calibration();
  report.link_errors = character_link_.error_count() + flower_link_.error_count();
  for (const auto& r : readings_) report.alpha_events += r.gated ? 1 : 0;

  auto timeline = timeline_;
  if (timeline.empty()) timeline.push_back({0.0, 0.0, eyes()});
  timeline.back().end = report.duration_s;

  double sum_open = 0.0, sum_closed = 0.0, duty_open = 0.0, duty_closed = 0.0;
  std::size_t n_open = 0, n_closed = 0, d_open = 0, d_closed = 0;
  for (std::size_t i = 0; i < timeline.size(); ++i) {
    const auto& seg = timeline[i];
    // The run's final instant belongs to the last segment.
    const bool last = i + 1 == timeline.size();
    const auto inside = [&](double t) { return t >= seg.start && (t < seg.end || (last && t <= seg.end)); };
    SegmentStats stats{seg};
    double sum = 0.0, duty_sum = 0.0;
    for (const auto& r : readings_) {
      if (inside(r.t)) {
        sum += r.a_psd;
        ++stats.frames;
      }
    }
    for (const auto& [t, duty] : duties_) {
      if (inside(t)) {
        duty_sum += duty;
        ++stats.duty_updates;
      }
    }
    if (stats.frames) stats.mean_a_psd = sum / static_cast<double>(stats.frames);
    if (stats.duty_updates) stats.mean_duty = duty_sum / static_cast<double>(stats.duty_updates);
    if (seg.eyes == Eyes::Open) {
      sum_open += sum, n_open += stats.frames, duty_open += duty_sum, d_open += stats.duty_updates;
    } else if (seg.eyes == Eyes::Closed) {
      sum_closed += sum, n_closed += stats.frames, duty_closed += duty_sum,
          d_closed += stats.duty_updates;
    }
    report.segments.push_back(stats);
  }
  if (n_open) report.mean_a_psd_open = sum_open / static_cast<double>(n_open);
  if (n_closed) report.mean_a_psd_closed = sum_closed / static_cast<double>(n_closed);

  if (config_.has_character()) {
    CharacterSummary c;
    c.updates = duties_.size();
    c.trace_rows = character_rows_;
    if (!duties_.empty()) {
      c.min_duty = c.max_duty = duties_.front().second;
      for (const auto& d : duties_) {
        c.min_duty = std::min(c.min_duty, d.second);
        c.max_duty = std::max(c.max_duty, d.second);
      }
    }
    if (d_open) c.mean_duty_open = duty_open / static_cast<double>(d_open);
    if (d_closed) c.mean_duty_closed = duty_closed / static_cast<double>(d_closed);
    report.character = c;
  }
  if (config_.has_flower()) {
    report.flower = FlowerSummary{flower_commands_, flower_rows_, min_p_, max_p_,
                                  min_p_after_inflation_};
  }

  if (telemetry_) {
    const auto& dir = telemetry_->dir();
    report.files = telemetry_->close_all();
    {
      detail::CsvWriter seg(dir / "segments.csv", "start_s,end_s,eyes");
      for (const auto& s : timeline) seg.row("{},{},{}", s.start, s.end, eyes_label(s.eyes));
    }
    report.files.push_back("segments.csv");
    if (fs::exists(dir / "calibration.txt")) report.files.push_back("calibration.txt");
    report.files.push_back("report.json");
    auto j = report.to_json();
    j["config"] = to_json(config_);
    std::ofstream out(dir / "report.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing report.json");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Entry points

RunReport run(const RunConfig& config) {
  config.validate();
  const Calibration cal = resolve_calibration(config);
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.output_dir.string());
  save_calibration(config.output_dir / "calibration.txt", cal);

  Pipeline pipeline(config, cal, config.output_dir);
  if (config.realtime) {
    const auto start = std::chrono::steady_clock::now();
    while (!pipeline.finished()) {
      std::this_thread::sleep_until(start + std::chrono::microseconds(kTickUs) *
                                                static_cast<std::int64_t>(pipeline.tick_index()));
      pipeline.step();
    }
  } else {
    pipeline.run_to_end();
  }
  return pipeline.finish();
}

Calibration calibrate_cmd(const RunConfig& config) {
  config.validate();
  CalibrationOptions options;
  options.dsp = config.dsp;
  options.p_ref_override = config.p_ref;
  options.threshold_override = config.threshold;
  const Calibration cal = calibrate(calibration_recording(config), options);
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.output_dir.string());
  save_calibration(config.output_dir / "calibration.txt", cal);
  return cal;
}

namespace {

struct Marker {
  double start;
  double end;
  std::string eyes;
};

std::string segment_at(const std::vector<Marker>& markers, double t) {
  for (const auto& m : markers) {
    if (t >= m.start && t < m.end) return m.eyes;
  }
  return markers.empty() ? "unknown" : markers.back().eyes;
}

double num(const std::string& s, const fs::path& file) {
  const auto v = detail::parse_double(s);
  if (!v) throw IoError("non-numeric field `" + s + "` in " + file.string());
  return *v;
}

struct PsdFrames {
  std::vector<double> t_end;
  std::vector<std::vector<std::pair<double, double>>> band;  // (f, psd) within 6-20 Hz
};

PsdFrames load_psd(const fs::path& path) {
  const auto table = detail::read_csv(path);
  const auto c_idx = table.column("frame_idx"), c_t = table.column("t_end_s"),
             c_f = table.column("f_hz"), c_p = table.column("psd");
  PsdFrames frames;
  for (const auto& row : table.rows) {
    const auto idx = static_cast<std::size_t>(num(row[c_idx], path));
    if (idx >= frames.t_end.size()) {
      frames.t_end.resize(idx + 1, 0.0);
      frames.band.resize(idx + 1);
    }
    frames.t_end[idx] = num(row[c_t], path);
    const double f = num(row[c_f], path);
    if (f >= kPeakSearchLowHz && f <= kPeakSearchHighHz) {
      frames.band[idx].emplace_back(f, num(row[c_p], path));
    }
  }
  return frames;
}

void write_psd_snapshots(const fs::path& out, const PsdFrames& frames,
                         const std::vector<double>& instants) {
  detail::CsvWriter w(out, "instant,t_s,t_end_s,f_hz,psd");
  std::size_t instant = 0;
  for (const double t : instants) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < frames.t_end.size(); ++i) {
      if (frames.t_end[i] <= t + 1e-9) best = i;
    }
    if (!best) continue;
    for (const auto& [f, p] : frames.band[*best]) {
      w.row("{},{},{},{},{}", instant, t, frames.t_end[*best], f, p);
    }
    ++instant;
  }
}

}  // namespace

std::vector<std::string> export_figures(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("run output directory not found: " + dir.string());
  const auto seg_path = dir / "segments.csv";
  const auto psd_path = dir / "psd.csv";
  const auto char_path = dir / "character_commands.csv";
  const auto flower_cmd_path = dir / "flower_commands.csv";
  const auto pressure_path = dir / "pressure_trace.csv";
  for (const auto& required : {seg_path, psd_path}) {
    if (!fs::exists(required)) throw IoError("file not found: " + required.string());
  }
  if (!fs::exists(char_path) && !fs::exists(pressure_path)) {
    throw IoError("file not found: neither " + char_path.string() + " nor " +
                  pressure_path.string() + " exists");
  }

  std::vector<Marker> markers;
  {
    const auto table = detail::read_csv(seg_path);
    const auto c_s = table.column("start_s"), c_e = table.column("end_s"), c_y = table.column("eyes");
    for (const auto& row : table.rows) {
      markers.push_back({num(row[c_s], seg_path), num(row[c_e], seg_path), row[c_y]});
    }
  }
  std::vector<std::string> written;
  {
    detail::CsvWriter w(dir / "fig_markers.csv", "t_s,eyes");
    for (const auto& m : markers) w.row("{},{}", m.start, m.eyes);
    written.push_back("fig_markers.csv");
  }
  const auto frames = load_psd(psd_path);

  if (fs::exists(char_path)) {
    const auto table = detail::read_csv(char_path);
    const auto c_t = table.column("t_s"), c_d = table.column("duty");
    std::vector<double> instants;
    detail::CsvWriter w(dir / "fig5b_duty.csv", "t_s,duty,segment");
    for (const auto& row : table.rows) {
      const double t = num(row[c_t], char_path);
      instants.push_back(t);
      w.row("{},{},{}", t, row[c_d], segment_at(markers, t));
    }
    w.close();
    write_psd_snapshots(dir / "fig5a_psd.csv", frames, instants);
    written.push_back("fig5a_psd.csv");
    written.push_back("fig5b_duty.csv");
  }
  if (fs::exists(pressure_path)) {
    const auto table = detail::read_csv(pressure_path);
    const auto c_t = table.column("t_s"), c_p = table.column("p_filt_kpa");
    detail::CsvWriter w(dir / "fig6b_pressure.csv", "t_s,p_filt_kpa,segment");
    for (const auto& row : table.rows) {
      const double t = num(row[c_t], pressure_path);
      w.row("{},{},{}", t, row[c_p], segment_at(markers, t));
    }
    w.close();
    std::vector<double> instants;
    if (fs::exists(flower_cmd_path)) {
      const auto cmds = detail::read_csv(flower_cmd_path);
      const auto c_ct = cmds.column("t_s");
      for (const auto& row : cmds.rows) instants.push_back(num(row[c_ct], flower_cmd_path));
    }
    write_psd_snapshots(dir / "fig6a_psd.csv", frames, instants);
    written.push_back("fig6a_psd.csv");
    written.push_back("fig6b_pressure.csv");
  }
  return written;
}

}  // namespace softbci
