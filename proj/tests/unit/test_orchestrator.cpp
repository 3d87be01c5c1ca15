#include <doctest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "softbci/error.hpp"
#include "softbci/orchestrator.hpp"
#include "unit/oracles.hpp"

using namespace softbci;
namespace fs = std::filesystem;

namespace {

RunConfig config_in(const std::string& name) {
  RunConfig c;
  c.output_dir = oracle::temp_dir(name);
  return c;
}

bool on_tick_grid(double t) { return std::abs(t * 100.0 - std::round(t * 100.0)) < 1e-6; }

}  // namespace

TEST_SUITE("orchestrator") {

TEST_CASE("default 70 s run row counts") {
  auto c = config_in("orch_default");
  const auto r = run(c);
  const auto& out = c.output_dir;
  CHECK(r.duration_s == 70.0);
  CHECK(r.ticks == 7000);
  CHECK(r.samples == 17500);
  CHECK(r.frames_emitted == 69);
  REQUIRE(r.character);
  REQUIRE(r.flower);
  CHECK(r.character->updates == 69);
  CHECK(r.flower->commands == 14);
  CHECK(oracle::count_lines(out / "pressure_trace.csv") == 7001);
  CHECK(oracle::count_lines(out / "character_trace.csv") == 7001);

  const auto cmds = oracle::read_csv(out / "character_commands.csv");
  REQUIRE(cmds.rows.size() == 69);
  CHECK(cmds.col("t_s").front() == 2.0);
  CHECK(cmds.col("t_s").back() == 70.0);
  const auto alpha = oracle::read_csv(out / "alpha.csv");
  CHECK(alpha.col("t_s").front() == doctest::Approx(1.996));
}

TEST_CASE("report counts equal csv rows and every listed file is non-empty") {
  auto c = config_in("orch_integrity");
  const auto r = run(c);
  const auto& out = c.output_dir;
  CHECK(oracle::read_csv(out / "eeg_raw.csv").rows.size() == r.samples);
  CHECK(oracle::read_csv(out / "alpha.csv").rows.size() == r.frames_emitted);
  CHECK(oracle::read_csv(out / "psd.csv").rows.size() == r.frames_emitted * 251);
  CHECK(oracle::read_csv(out / "character_commands.csv").rows.size() == r.character->updates);
  CHECK(oracle::read_csv(out / "character_trace.csv").rows.size() == r.character->trace_rows);
  CHECK(oracle::read_csv(out / "flower_commands.csv").rows.size() == r.flower->commands);
  CHECK(oracle::read_csv(out / "pressure_trace.csv").rows.size() == r.flower->trace_rows);
  std::size_t gated = 0;
  for (double g : oracle::read_csv(out / "alpha.csv").col("gated")) gated += g == 1.0;
  CHECK(gated == r.alpha_events);

  CHECK(r.files.size() >= 10);
  for (const auto& f : r.files) {
    INFO(f);
    REQUIRE(fs::exists(out / f));
    CHECK(fs::file_size(out / f) > 0);
  }
  const auto j = nlohmann::json::parse(oracle::slurp(out / "report.json"));
  CHECK(j["frames_emitted"] == r.frames_emitted);
  CHECK(j["segments"].size() == 5);
}

TEST_CASE("csv headers") {
  auto c = config_in("orch_headers");
  run(c);
  const auto& out = c.output_dir;
  const std::pair<const char*, const char*> expected[] = {
      {"eeg_raw.csv", "t_s,eeg_uV"},
      {"psd.csv", "frame_idx,t_end_s,f_hz,psd"},
      {"alpha.csv", "t_s,p_alpha,a_psd,gated"},
      {"character_commands.csv", "t_s,a_psd,duty"},
      {"flower_commands.csv", "t_s,a_psd,setpoint_kpa,t_inflation_s,t_deflation_s"},
      {"pressure_trace.csv", "t_s,p_true_kpa,p_meas_kpa,p_filt_kpa,valve,pump_effort,phase"},
      {"character_trace.csv", "t_s,duty,omega,dance_freq_hz,amplitude"},
      {"segments.csv", "start_s,end_s,eyes"},
  };
  for (const auto& [file, header] : expected) {
    std::ifstream in(out / file);
    std::string line;
    std::getline(in, line);
    CHECK(line == header);
  }
  const auto text = oracle::slurp(out / "pressure_trace.csv");
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.back() == '\n');
}

TEST_CASE("all logged timestamps share one clock") {
  auto c = config_in("orch_clock");
  run(c);
  const auto& out = c.output_dir;
  const auto eeg = oracle::read_csv(out / "eeg_raw.csv").col("t_s");
  for (std::size_t i = 0; i < eeg.size(); ++i) REQUIRE(eeg[i] == doctest::Approx(i / 250.0));
  const auto trace = oracle::read_csv(out / "pressure_trace.csv").col("t_s");
  for (std::size_t i = 0; i < trace.size(); ++i) REQUIRE(trace[i] == doctest::Approx((i + 1) / 100.0));
  const auto ctrace = oracle::read_csv(out / "character_trace.csv").col("t_s");
  CHECK(ctrace == trace);
  for (const char* f : {"character_commands.csv", "flower_commands.csv"}) {
    for (double t : oracle::read_csv(out / f).col("t_s")) REQUIRE(on_tick_grid(t));
  }
  // Each command follows the reading it carries by less than one cadence.
  const auto alpha_t = oracle::read_csv(out / "alpha.csv").col("t_s");
  const auto cmd_t = oracle::read_csv(out / "character_commands.csv").col("t_s");
  REQUIRE(alpha_t.size() == cmd_t.size());
  for (std::size_t i = 0; i < cmd_t.size(); ++i) {
    REQUIRE(cmd_t[i] - alpha_t[i] > 0.0);
    REQUIRE(cmd_t[i] - alpha_t[i] <= 0.01 + 1e-9);
  }
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  auto a = config_in("orch_det_a");
  auto b = config_in("orch_det_b");
  a.seed = b.seed = 99;
  const auto ra = run(a);
  run(b);
  for (const auto& f : ra.files) {
    if (f == "report.json") continue;  // names its own output directory
    INFO(f);
    CHECK(oracle::slurp(a.output_dir / f) == oracle::slurp(b.output_dir / f));
  }
  auto c = config_in("orch_det_c");
  c.seed = 100;
  run(c);
  CHECK(oracle::slurp(a.output_dir / "eeg_raw.csv") != oracle::slurp(c.output_dir / "eeg_raw.csv"));
}

TEST_CASE("closed segments beat open segments") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto c = config_in("orch_sep");
    c.embodiment = Embodiment::Character;
    c.seed = seed;
    const auto r = run(c);
    CHECK(r.mean_a_psd_closed > r.mean_a_psd_open);
    CHECK(r.character->mean_duty_closed > 128.0);
    CHECK(r.character->mean_duty_open < 64.0);
  }
}

TEST_CASE("embodiment selection") {
  auto c = config_in("orch_flower_only");
  c.embodiment = Embodiment::Flower;
  const auto r = run(c);
  CHECK_FALSE(r.character);
  REQUIRE(r.flower);
  CHECK_FALSE(fs::exists(c.output_dir / "character_commands.csv"));
  CHECK(fs::exists(c.output_dir / "pressure_trace.csv"));
}

TEST_CASE("cadence override") {
  auto c = config_in("orch_cadence");
  c.embodiment = Embodiment::Flower;
  c.cadence_s = 1.0;
  const auto r = run(c);
  CHECK(r.flower->commands == 69);
}

TEST_CASE("replaying a recorded stream reproduces the detector output") {
  auto a = config_in("orch_rec");
  a.p_ref = 40.0;
  a.threshold = 10.0;
  run(a);
  auto b = config_in("orch_replay");
  b.source = SourceKind::Replay;
  b.replay_path = a.output_dir / "eeg_raw.csv";
  b.p_ref = 40.0;
  b.threshold = 10.0;
  const auto rb = run(b);
  CHECK(rb.samples == 17500);
  CHECK(oracle::slurp(a.output_dir / "alpha.csv") == oracle::slurp(b.output_dir / "alpha.csv"));
  CHECK(oracle::slurp(a.output_dir / "character_commands.csv") ==
        oracle::slurp(b.output_dir / "character_commands.csv"));
  // No ground truth on replay.
  CHECK(oracle::read_csv(b.output_dir / "segments.csv").rows.at(0).at(2) == "unknown");
}

TEST_CASE("replay auto calibration uses the file") {
  auto a = config_in("orch_rec2");
  run(a);
  auto b = config_in("orch_replay2");
  b.source = SourceKind::Replay;
  b.replay_path = a.output_dir / "eeg_raw.csv";
  const auto cal = resolve_calibration(b);
  CHECK(cal.p_ref > 0.0);
  CHECK(cal.threshold == cal.p_ref / 4.0);
}

TEST_CASE("calibrate_cmd writes a deterministic file") {
  auto c = config_in("orch_cal");
  const auto cal = calibrate_cmd(c);
  CHECK(cal.p_ref > 0.0);
  const auto first = oracle::slurp(c.output_dir / "calibration.txt");
  calibrate_cmd(c);
  CHECK(oracle::slurp(c.output_dir / "calibration.txt") == first);
  CHECK(load_calibration(c.output_dir / "calibration.txt") == cal);

  c.calibration_duration_s = 2.0;
  CHECK_THROWS_AS(calibrate_cmd(c), CalibrationError);
}

TEST_CASE("a calibration file drives the run") {
  auto c = config_in("orch_calfile");
  save_calibration(c.output_dir / "given.txt", {123.0, 4.0});
  c.calibration_path = c.output_dir / "given.txt";
  const auto r = run(c);
  CHECK(r.calibration == Calibration{123.0, 4.0});
}

TEST_CASE("export figures for a character and flower run") {
  auto c = config_in("orch_figs");
  run(c);
  const auto files = export_figures(c.output_dir);
  const std::set<std::string> names(files.begin(), files.end());
  for (const char* f : {"fig5a_psd.csv", "fig5b_duty.csv", "fig6a_psd.csv", "fig6b_pressure.csv",
                        "fig_markers.csv"}) {
    CHECK(names.count(f));
  }
  const auto duty = oracle::read_csv(c.output_dir / "fig5b_duty.csv");
  CHECK(duty.header == std::vector<std::string>{"t_s", "duty", "segment"});
  CHECK(duty.rows.size() == 69);
  const auto p = oracle::read_csv(c.output_dir / "fig6b_pressure.csv");
  CHECK(p.header == std::vector<std::string>{"t_s", "p_filt_kpa", "segment"});
  CHECK(p.rows.size() == 7000);
  CHECK(p.rows.front().at(2) == "open");
  CHECK(p.rows.at(1500).at(2) == "closed");
  const auto psd = oracle::read_csv(c.output_dir / "fig5a_psd.csv");
  CHECK(psd.header == std::vector<std::string>{"instant", "t_s", "t_end_s", "f_hz", "psd"});
  for (double f : psd.col("f_hz")) REQUIRE((f >= 6.0 && f <= 20.0));
  const auto markers = oracle::read_csv(c.output_dir / "fig_markers.csv");
  CHECK(markers.rows.size() == 5);
}

TEST_CASE("zero alpha events still produce figure files") {
  auto c = config_in("orch_no_alpha");
  c.embodiment = Embodiment::Character;
  c.p_ref = 1.0;
  c.threshold = 1e12;
  const auto r = run(c);
  CHECK(r.alpha_events == 0);
  export_figures(c.output_dir);
  for (double d : oracle::read_csv(c.output_dir / "fig5b_duty.csv").col("duty")) REQUIRE(d == 0.0);
}

TEST_CASE("export reports missing inputs") {
  const auto empty = oracle::temp_dir("orch_empty");
  CHECK_THROWS_WITH_AS(export_figures(empty), doctest::Contains("file not found"), IoError);
  CHECK_THROWS_AS(export_figures(empty / "nope"), IoError);
}

TEST_CASE("unwritable output directory is an I/O error") {
  const auto dir = oracle::temp_dir("orch_io");
  std::ofstream(dir / "blocker") << "x";
  RunConfig c;
  c.output_dir = dir / "blocker" / "sub";
  c.p_ref = 10.0;
  CHECK_THROWS_AS(run(c), IoError);
}

TEST_CASE("guard off dips below p_min, guard on holds") {
  auto on = config_in("orch_guard_on");
  on.embodiment = Embodiment::Flower;
  auto off = config_in("orch_guard_off");
  off.embodiment = Embodiment::Flower;
  off.guard_enabled = false;
  const auto ron = run(on);
  const auto roff = run(off);
  CHECK(roff.flower->min_p_true < 120.0);
  REQUIRE(ron.flower->min_p_after_first_inflation);
  CHECK(*ron.flower->min_p_after_first_inflation >= 119.4);
}

TEST_CASE("realtime pacing follows the wall clock") {
  auto c = config_in("orch_rt");
  c.duration_s = 0.3;
  c.realtime = true;
  c.p_ref = 10.0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run(c);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(r.ticks == 30);
  CHECK(elapsed >= 0.28);
}

TEST_CASE("pipeline live controls") {
  RunConfig c;
  c.p_ref = 20.0;
  Pipeline p(c, {20.0, 5.0}, {}, true);
  CHECK_FALSE(p.total_ticks());
  p.set_alpha_override(100.0);
  for (int i = 0; i < 501; ++i) p.step();
  CHECK(p.duty() == 255);
  REQUIRE(p.flower().scheduler().latched());
  CHECK(p.flower().scheduler().latched()->setpoint == 135.0);
  CHECK_THROWS_AS(p.set_alpha_override(101.0), ConfigError);
  p.set_eyes(Eyes::Closed);
  CHECK(p.eyes() == Eyes::Closed);
  for (int i = 0; i < 8000; ++i) p.step();  // past the scripted 70 s
  CHECK(p.tick_index() == 8501);
  CHECK_FALSE(p.finished());

  RunConfig rc = config_in("orch_live_replay");
  rc.p_ref = 10.0;
  run(rc);
  RunConfig rp;
  rp.source = SourceKind::Replay;
  rp.replay_path = rc.output_dir / "eeg_raw.csv";
  Pipeline replay(rp, {10.0, 1.0}, {});
  CHECK_THROWS_AS(replay.set_eyes(Eyes::Open), ConfigError);
}

}  // TEST_SUITE
