#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "softbci/config.hpp"
#include "softbci/error.hpp"
#include "softbci/live_session.hpp"
#include "softbci/orchestrator.hpp"
#include "softbci/server.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kRuntime = 3, kIo = 4 };

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string embodiment;
  std::string scenario;
  std::string replay;
  bool realtime = false;
  std::string guard;
  std::string out;
  std::vector<std::string> settings;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "RNG seed (u64)");
    app.add_option("--embodiment", embodiment, "character|flower|both");
    app.add_option("--scenario", scenario, "scenario file, one `open|closed,<seconds>` per line");
    app.add_option("--replay", replay, "raw EEG CSV (t_s,eeg_uV) to replay instead of synthesizing");
    app.add_flag("--realtime", realtime, "pace the run to the wall clock");
    app.add_option("--guard", guard, "low-pressure guard on|off");
    app.add_option("--out", out, "output directory");
    app.add_option("--set", settings, "extra config setting key=value (repeatable)");
  }

  softbci::RunConfig build() const {
    softbci::RunConfig cfg;
    if (!config.empty()) cfg = softbci::load_config(config);
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw softbci::ConfigError(fmt::format("--set expects key=value, got `{}`", s));
      }
      softbci::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (!embodiment.empty()) softbci::apply_setting(cfg, "embodiment", embodiment);
    if (!scenario.empty()) softbci::apply_setting(cfg, "scenario", scenario);
    if (!replay.empty()) softbci::apply_setting(cfg, "replay", replay);
    if (realtime) cfg.realtime = true;
    if (!guard.empty()) softbci::apply_setting(cfg, "guard", guard);
    if (!out.empty()) cfg.output_dir = out;
    return cfg;
  }
};

int cmd_run(const CommonFlags& flags) {
  auto cfg = flags.build();
  const auto report = softbci::run(cfg);
  fmt::print("run finished: {:.2f} s, {} frames, {} alpha events, {} link errors\n",
             report.duration_s, report.frames_emitted, report.alpha_events, report.link_errors);
  fmt::print("mean a_psd open {:.2f} closed {:.2f}\n", report.mean_a_psd_open,
             report.mean_a_psd_closed);
  fmt::print("wrote {} files to {}\n", report.files.size(), cfg.output_dir.string());
  return kOk;
}

int cmd_calibrate(const CommonFlags& flags) {
  auto cfg = flags.build();
  const auto cal = softbci::calibrate_cmd(cfg);
  fmt::print("p_ref = {:.17g}\nthreshold = {:.17g}\n", cal.p_ref, cal.threshold);
  fmt::print("wrote {}\n", (cfg.output_dir / "calibration.txt").string());
  return kOk;
}

int cmd_export(const std::string& dir) {
  for (const auto& name : softbci::export_figures(dir)) fmt::print("{}\n", name);
  return kOk;
}

struct ServeFlags {
  std::string bind = "127.0.0.1";
  std::uint16_t port = 8787;
  std::optional<std::uint16_t> tcp_port;
  bool record = false;
  bool start = false;
  bool bounded = false;
};

int cmd_serve(const CommonFlags& flags, const ServeFlags& sf) {
  auto cfg = flags.build();
  cfg.validate();
  softbci::LiveSession session({.record = sf.record, .bounded = sf.bounded});
  softbci::Server server(session, {sf.bind, sf.port, sf.tcp_port, cfg});
  if (sf.start) {
    const auto res = session.apply_command(softbci::Start{cfg});
    if (!res.accepted) throw softbci::ConfigError(res.reason);
  }
  server.start();
  session.start_realtime();
  fmt::print("serving on http://{}:{} (ws path /ws)", sf.bind, server.port());
  if (server.tcp_port()) fmt::print(", ndjson tcp port {}", *server.tcp_port());
  fmt::print("\n");
  std::fflush(stdout);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  session.stop_realtime();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alpha-wave driven soft robot pipeline and simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, cal_flags, serve_flags;
  auto* run = app.add_subcommand("run", "run a scenario end to end and write CSV telemetry");
  run_flags.add_to(*run);

  auto* cal = app.add_subcommand("calibrate", "calibrate on an eyes-closed recording");
  cal_flags.add_to(*cal);

  std::string export_dir;
  auto* exp = app.add_subcommand("export-figs", "write figure-shaped CSVs from a finished run");
  exp->add_option("dir", export_dir, "run output directory")->required();

  ServeFlags sf;
  auto* serve = app.add_subcommand("serve", "live control service (HTTP + WebSocket)");
  serve_flags.add_to(*serve);
  serve->add_option("--bind", sf.bind, "bind address");
  serve->add_option("--port", sf.port, "HTTP/WebSocket port");
  serve->add_option("--tcp-port", sf.tcp_port, "also serve NDJSON over plain TCP on this port");
  serve->add_flag("--record", sf.record, "write CSV telemetry for each live run");
  serve->add_flag("--start", sf.start, "start a run with the given config immediately");
  serve->add_flag("--bounded", sf.bounded, "end live runs at the scenario duration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*cal) return cmd_calibrate(cal_flags);
    if (*exp) return cmd_export(export_dir);
    if (*serve) return cmd_serve(serve_flags, sf);
  } catch (const softbci::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const softbci::IoError& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kIo;
  } catch (const softbci::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntime;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntime;
  }
  return kOk;
}
