#include "softbci/live_session.hpp"

#include <fmt/format.h>

#include "softbci/error.hpp"

namespace softbci {

using nlohmann::json;

json StateSnapshot::to_json() const {
  json j;
  j["type"] = "snapshot";
  j["seq"] = seq;
  j["t_s"] = t_s;
  j["running"] = running;
  j["run_t_s"] = run_t_s;
  j["eyes_state"] = eyes ? json(std::string(to_string(*eyes))) : json(nullptr);
  j["a_psd"] = a_psd;
  j["gated"] = gated;
  j["override_active"] = override_active;
  j["spectrum"] = {{"f_hz", spectrum_freq}, {"psd", spectrum_psd}};
  j["character"] = {{"duty", character.duty},
                    {"dance_freq_hz", character.dance_freq_hz},
                    {"amplitude", character.amplitude}};
  j["flower"] = {{"setpoint", flower.setpoint},
                 {"p_filt", flower.p_filt},
                 {"valve", flower.valve},
                 {"phase", std::string(to_string(flower.phase))},
                 {"remaining_s", flower.remaining_s}};
  j["params"] = {{"alpha_gain", params.alpha_gain}, {"beta_gain", params.beta_gain},
                 {"gamma_gain", params.gamma_gain}, {"threshold", params.threshold},
                 {"p_ref", params.p_ref},           {"guard", params.guard}};
  return j;
}

namespace {

template <class T>
T field(const json& j, const char* name) {
  if (!j.contains(name)) throw ConfigError(fmt::format("command is missing `{}`", name));
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("command field `{}` has the wrong type", name));
  }
}

}  // namespace

OperatorCommand parse_command(const json& j, const RunConfig& base) {
  if (!j.is_object()) throw ConfigError("command must be a JSON object");
  const auto type = field<std::string>(j, "type");
  if (type == "set_eyes") {
    const auto eyes = parse_eyes(field<std::string>(j, "eyes"));
    if (!eyes) throw ConfigError("`eyes` must be open or closed");
    return SetEyes{*eyes};
  }
  if (type == "override_alpha") return OverrideAlpha{field<double>(j, "a_psd")};
  if (type == "clear_override") return ClearOverride{};
  if (type == "set_param") return SetParam{field<std::string>(j, "name"), field<double>(j, "value")};
  if (type == "set_guard") return SetGuard{field<bool>(j, "enabled")};
  if (type == "start") {
    return Start{j.contains("config") ? config_from_json(j.at("config"), base) : base};
  }
  if (type == "stop") return Stop{};
  if (type == "reset") return Reset{};
  throw ConfigError(fmt::format("unknown command type `{}`", type));
}

std::string command_name(const OperatorCommand& cmd) {
  struct Visitor {
    std::string operator()(const SetEyes&) const { return "set_eyes"; }
    std::string operator()(const OverrideAlpha&) const { return "override_alpha"; }
    std::string operator()(const ClearOverride&) const { return "clear_override"; }
    std::string operator()(const SetParam&) const { return "set_param"; }
    std::string operator()(const SetGuard&) const { return "set_guard"; }
    std::string operator()(const Start&) const { return "start"; }
    std::string operator()(const Stop&) const { return "stop"; }
    std::string operator()(const Reset&) const { return "reset"; }
  };
  return std::visit(Visitor{}, cmd);
}

json CommandResult::to_json(const std::string& command) const {
  json j{{"type", accepted ? "ack" : "rejection"}, {"command", command}};
  if (!accepted) j["reason"] = reason;
  return j;
}

// ---------------------------------------------------------------------------

void SnapshotHub::Subscription::deliver(std::shared_ptr<const StateSnapshot> snapshot) {
  {
    std::lock_guard lock(mutex_);
    if (pending_) ++dropped_;
    pending_ = std::move(snapshot);
  }
  cv_.notify_all();
}

std::shared_ptr<const StateSnapshot> SnapshotHub::Subscription::try_next() {
  std::lock_guard lock(mutex_);
  return std::exchange(pending_, nullptr);
}

std::shared_ptr<const StateSnapshot> SnapshotHub::Subscription::wait_next(
    std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [this] { return pending_ != nullptr; });
  return std::exchange(pending_, nullptr);
}

std::uint64_t SnapshotHub::Subscription::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

std::shared_ptr<SnapshotHub::Subscription> SnapshotHub::subscribe() {
  auto sub = std::make_shared<Subscription>();
  std::lock_guard lock(mutex_);
  subscribers_.push_back(sub);
  return sub;
}

void SnapshotHub::publish(std::shared_ptr<const StateSnapshot> snapshot) {
  std::vector<std::shared_ptr<Subscription>> live;
  {
    std::lock_guard lock(mutex_);
    std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
    for (const auto& w : subscribers_) {
      if (auto s = w.lock()) live.push_back(std::move(s));
    }
  }
  for (const auto& s : live) s->deliver(snapshot);
  ++published_;
}

std::size_t SnapshotHub::subscriber_count() {
  std::lock_guard lock(mutex_);
  std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
  return subscribers_.size();
}

// ---------------------------------------------------------------------------

LiveSession::LiveSession(LiveSessionOptions options) : options_(options) {
  config_json_ = json::object();
}

LiveSession::~LiveSession() { stop_realtime(); }

CommandResult LiveSession::validate_locked(const OperatorCommand& cmd,
                                           std::optional<Calibration>& cal) {
  if (const auto* start = std::get_if<Start>(&cmd)) {
    try {
      start->config.validate();
      cal = resolve_calibration(start->config);
    } catch (const Error& e) {
      return {false, e.what()};
    }
    staged_ = Staged{start->config, start->config.mapping, *cal, start->config.pid};
    return {true, {}};
  }
  if (!staged_) return {false, "no active run"};
  auto& st = *staged_;

  struct Visitor {
    Staged& st;
    CommandResult operator()(const SetEyes&) const {
      if (st.config.source != SourceKind::Synth) {
        return {false, "eyes state can only be steered on a synthetic source"};
      }
      return {true, {}};
    }
    CommandResult operator()(const OverrideAlpha& o) const {
      if (!(o.a_psd >= 0.0 && o.a_psd <= 100.0)) return {false, "a_psd must lie in [0, 100]"};
      return {true, {}};
    }
    CommandResult operator()(const ClearOverride&) const { return {true, {}}; }
    CommandResult operator()(const SetGuard&) const { return {true, {}}; }
    CommandResult operator()(const SetParam& p) const {
      try {
        if (p.name == "threshold" || p.name == "p_ref") {
          Calibration c = st.calibration;
          (p.name == "threshold" ? c.threshold : c.p_ref) = p.value;
          c.validate();
          st.calibration = c;
        } else if (p.name == "kp" || p.name == "ki" || p.name == "kd" || p.name == "windup_limit") {
          PidGains g = st.pid;
          (p.name == "kp" ? g.kp : p.name == "ki" ? g.ki : p.name == "kd" ? g.kd : g.windup_limit) =
              p.value;
          g.validate();
          st.pid = g;
        } else {
          st.mapping = with_param(st.mapping, p.name, p.value);
        }
      } catch (const ConfigError& e) {
        return {false, e.what()};
      }
      return {true, {}};
    }
    CommandResult operator()(const Start&) const { return {true, {}}; }
    CommandResult operator()(const Stop&) const { return {true, {}}; }
    CommandResult operator()(const Reset&) const { return {true, {}}; }
  };
  auto result = std::visit(Visitor{st}, cmd);
  if (result.accepted && std::holds_alternative<Stop>(cmd)) staged_.reset();
  return result;
}

CommandResult LiveSession::apply_command(const OperatorCommand& cmd) {
  std::lock_guard lock(mutex_);
  std::optional<Calibration> cal;
  auto result = validate_locked(cmd, cal);
  if (result.accepted) {
    if (std::holds_alternative<Reset>(cmd) && staged_) {
      staged_->mapping = staged_->config.mapping;
      staged_->pid = staged_->config.pid;
    }
    queue_.push_back({cmd, cal});
  }
  return result;
}

void LiveSession::start_pipeline(const RunConfig& config, const Calibration& cal) {
  const auto out = options_.record ? config.output_dir : std::filesystem::path{};
  if (options_.record) save_calibration(config.output_dir / "calibration.txt", cal);
  pipeline_ = std::make_unique<Pipeline>(config, cal, out, !options_.bounded);
  run_config_ = config;
  run_calibration_ = cal;
}

void LiveSession::finish_pipeline() {
  if (!pipeline_) return;
  auto report = pipeline_->finish();
  pipeline_.reset();
  std::lock_guard lock(mutex_);
  last_report_ = std::move(report);
}

void LiveSession::apply_on_tick(Queued& q) {
  struct Visitor {
    LiveSession& s;
    Queued& q;
    void operator()(const Start& start) const {
      s.finish_pipeline();
      if (s.options_.record) std::filesystem::create_directories(start.config.output_dir);
      s.start_pipeline(start.config, *q.calibration);
    }
    void operator()(const Stop&) const { s.finish_pipeline(); }
    void operator()(const Reset&) const {
      if (!s.run_config_) return;
      s.finish_pipeline();
      s.start_pipeline(*s.run_config_, *s.run_calibration_);
    }
    void operator()(const SetEyes& e) const {
      if (s.pipeline_) s.pipeline_->set_eyes(e.eyes);
    }
    void operator()(const OverrideAlpha& o) const {
      if (s.pipeline_) s.pipeline_->set_alpha_override(o.a_psd);
    }
    void operator()(const ClearOverride&) const {
      if (s.pipeline_) s.pipeline_->set_alpha_override(std::nullopt);
    }
    void operator()(const SetGuard& g) const {
      if (s.pipeline_) s.pipeline_->set_guard(g.enabled);
    }
    void operator()(const SetParam& p) const {
      if (!s.pipeline_) return;
      if (p.name == "threshold" || p.name == "p_ref") {
        Calibration c = s.pipeline_->calibration();
        (p.name == "threshold" ? c.threshold : c.p_ref) = p.value;
        s.pipeline_->set_calibration(c);
      } else if (p.name == "kp" || p.name == "ki" || p.name == "kd" || p.name == "windup_limit") {
        PidGains g = s.pipeline_->config().pid;
        (p.name == "kp" ? g.kp : p.name == "ki" ? g.ki : p.name == "kd" ? g.kd : g.windup_limit) =
            p.value;
        s.pipeline_->set_pid_gains(g);
      } else {
        s.pipeline_->set_mapping(with_param(s.pipeline_->mapping(), p.name, p.value));
      }
    }
  };
  std::visit(Visitor{*this, q}, q.cmd);
}

std::shared_ptr<const StateSnapshot> LiveSession::make_snapshot() {
  auto snap = std::make_shared<StateSnapshot>();
  snap->seq = seq_++;
  snap->t_s = static_cast<double>(session_ticks_.load()) * kControlPeriod;
  if (!pipeline_) return snap;
  const auto& p = *pipeline_;
  snap->running = true;
  snap->run_t_s = p.now();
  snap->eyes = p.eyes();
  snap->override_active = p.alpha_override().has_value();
  if (p.alpha_override()) {
    snap->a_psd = *p.alpha_override();
    snap->gated = true;
  } else if (p.latest_reading()) {
    snap->a_psd = p.latest_reading()->a_psd;
    snap->gated = p.latest_reading()->gated;
  }
  if (const auto& s = p.latest_spectrum()) {
    for (std::size_t k = 0; k < s->freq.size(); ++k) {
      if (s->freq[k] >= kPeakSearchLowHz && s->freq[k] <= kPeakSearchHighHz) {
        snap->spectrum_freq.push_back(s->freq[k]);
        snap->spectrum_psd.push_back(s->psd[k]);
      }
    }
  }
  snap->character = {p.duty(), p.character().dance_frequency_hz(), p.character().amplitude()};
  const auto& sched = p.flower().scheduler();
  snap->flower.setpoint = sched.latched() ? sched.latched()->setpoint : 0.0;
  snap->flower.p_filt = p.flower().last_filtered();
  snap->flower.valve = p.flower().plant().valve_open();
  snap->flower.phase = sched.phase();
  snap->flower.remaining_s = sched.phase() == CyclePhase::Idle ? 0.0 : std::max(0.0, sched.remaining());
  const auto& m = p.mapping();
  snap->params = {m.alpha_gain,          m.beta_gain,        m.gamma_gain,
                  p.calibration().threshold, p.calibration().p_ref, p.config().guard_enabled};
  return snap;
}

void LiveSession::tick() {
  std::deque<Queued> commands;
  {
    std::lock_guard lock(mutex_);
    commands.swap(queue_);
  }
  bool config_changed = !commands.empty();
  for (auto& q : commands) apply_on_tick(q);

  if (pipeline_) {
    pipeline_->step();
    if (pipeline_->finished()) {
      finish_pipeline();
      std::lock_guard lock(mutex_);
      staged_.reset();
      config_changed = true;
    }
  }

  const auto ticks = session_ticks_.load() + 1;
  session_ticks_.store(ticks);
  std::shared_ptr<const StateSnapshot> snap;
  if (ticks % kTicksPerSnapshot == 0) snap = make_snapshot();
  {
    std::lock_guard lock(mutex_);
    if (config_changed) config_json_ = pipeline_ ? to_json(pipeline_->config()) : json::object();
    if (snap) latest_ = snap;
  }
  if (snap) hub_.publish(snap);
}

void LiveSession::start_realtime() {
  if (realtime_running_.exchange(true)) return;
  realtime_thread_ = std::thread([this] {
    const auto period = std::chrono::microseconds(10'000);
    auto next = std::chrono::steady_clock::now();
    while (realtime_running_.load()) {
      try {
        tick();
      } catch (const std::exception& e) {
        fmt::print(stderr, "live session: run aborted: {}\n", e.what());
        pipeline_.reset();
        std::lock_guard lock(mutex_);
        staged_.reset();
        config_json_ = json::object();
      }
      next += period;
      std::this_thread::sleep_until(next);
    }
  });
}

void LiveSession::stop_realtime() {
  if (!realtime_running_.exchange(false)) return;
  if (realtime_thread_.joinable()) realtime_thread_.join();
}

std::shared_ptr<const StateSnapshot> LiveSession::latest() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

json LiveSession::config_json() const {
  std::lock_guard lock(mutex_);
  return config_json_;
}

bool LiveSession::running() const {
  std::lock_guard lock(mutex_);
  return staged_.has_value();
}

std::optional<RunReport> LiveSession::last_report() const {
  std::lock_guard lock(mutex_);
  return last_report_;
}

}  // namespace softbci
