#include "softbci/link.hpp"

#include <cmath>

#include "softbci/error.hpp"

namespace softbci {

std::string encode_frame(int a_psd) {
  if (a_psd < 0 || a_psd > 100) {
    throw ContractViolation("wire payload " + std::to_string(a_psd) + " outside 0..100");
  }
  return std::to_string(a_psd) + '\n';
}

std::string encode_reading(double a_psd) {
  if (!(a_psd >= 0.0 && a_psd <= 100.0)) {
    throw ContractViolation("wire reading outside [0, 100]");
  }
  return encode_frame(static_cast<int>(std::lround(a_psd)));
}

std::vector<int> FrameDecoder::decode_frame(std::string_view chunk) {
  std::vector<int> values;
  for (const char c : chunk) {
    if (c == '\n') {
      if (discarding_ || buffer_.empty()) {
        ++errors_;
      } else {
        const int value = std::stoi(buffer_);
        if (value <= 100) {
          values.push_back(value);
          ++decoded_;
        } else {
          ++errors_;
        }
      }
      buffer_.clear();
      discarding_ = false;
      continue;
    }
    if (discarding_) continue;
    if (c < '0' || c > '9' || buffer_.size() == kMaxPayloadDigits) {
      discarding_ = true;
      buffer_.clear();
      continue;
    }
    buffer_.push_back(c);
  }
  return values;
}

void FrameDecoder::reset() noexcept {
  buffer_.clear();
  discarding_ = false;
  errors_ = 0;
  decoded_ = 0;
}

FramePacer::FramePacer(double cadence_s) : cadence_(cadence_s) {
  if (!(cadence_s > 0.0) || !std::isfinite(cadence_s)) {
    throw ConfigError("pacing cadence must be positive");
  }
}

double FramePacer::next_tick() const noexcept {
  return static_cast<double>(next_index_) * cadence_;
}

void FramePacer::offer(const AlphaReading& reading) { pending_ = reading; }

std::optional<AlphaReading> FramePacer::poll(double now) {
  // Tolerate accumulated clock rounding when now lands on a tick.
  const double eps = 1e-9 * std::max(1.0, std::abs(now));
  if (now + eps < next_tick()) return std::nullopt;
  const auto index = static_cast<long long>(std::floor((now + eps) / cadence_));
  const double tick = static_cast<double>(index) * cadence_;
  next_index_ = index + 1;
  std::optional<AlphaReading> out;
  if (pending_ && pending_->t > tick - cadence_ - eps) out = pending_;
  pending_.reset();
  return out;
}

std::vector<AlphaReading> FramePacer::pace_frames(const std::vector<AlphaReading>& readings,
                                                  double cadence_s, double until) {
  FramePacer pacer(cadence_s);
  std::vector<AlphaReading> out;
  const auto flush_before = [&](double t) {
    while (pacer.next_tick() < t) {
      if (auto sent = pacer.poll(pacer.next_tick())) out.push_back(*sent);
    }
  };
  for (const auto& r : readings) {
    flush_before(r.t);
    pacer.offer(r);
    if (auto sent = pacer.poll(r.t)) out.push_back(*sent);
  }
  flush_before(until);
  if (auto sent = pacer.poll(until)) out.push_back(*sent);
  return out;
}

}  // namespace softbci
