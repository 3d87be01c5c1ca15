#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "softbci/dsp.hpp"

namespace softbci {

// Wire format of the BCI -> microcontroller channel: the normalized alpha
// power as an ASCII decimal integer 0..100 followed by a single LF. Intended
// for a 115200 baud 8N1 serial line; no checksum or acknowledgement.
inline constexpr int kSerialBaud = 115200;
inline constexpr std::size_t kMaxPayloadDigits = 3;

/// "0\n" .. "100\n". Throws ContractViolation outside 0..100.
std::string encode_frame(int a_psd);

/// Rounds a real-valued reading half away from zero, then encodes it.
std::string encode_reading(double a_psd);

/// Streaming decoder. Frames may be split across chunks. A frame with a
/// non-digit byte, more than three digits, no digits, or a value above 100 is
/// discarded and counted; decoding resumes after the next LF.
class FrameDecoder {
 public:
  std::vector<int> decode_frame(std::string_view chunk);

  std::size_t error_count() const noexcept { return errors_; }
  std::size_t frames_decoded() const noexcept { return decoded_; }
  void reset() noexcept;

 private:
  std::string buffer_;
  bool discarding_ = false;
  std::size_t errors_ = 0;
  std::size_t decoded_ = 0;
};

/// Latest-wins decimation of alpha readings to a fixed cadence. Cadence ticks
/// fall at k * cadence_s (k >= 1); at each tick the newest reading offered
/// since the previous tick is forwarded, older ones are dropped, and nothing
/// is sent when no fresh reading arrived.
class FramePacer {
 public:
  explicit FramePacer(double cadence_s);

  void offer(const AlphaReading& reading);

  /// Advances the cadence clock to `now`. Returns the reading to forward if a
  /// cadence tick fell in (previous now, now].
  std::optional<AlphaReading> poll(double now);

  /// Batch form: replays time-ordered readings through a pacer, firing every
  /// cadence tick up to `until`. A reading stamped exactly on a tick is
  /// forwarded at that tick.
  static std::vector<AlphaReading> pace_frames(const std::vector<AlphaReading>& readings,
                                               double cadence_s, double until);

  double cadence() const noexcept { return cadence_; }
  /// Time of the next cadence tick.
  double next_tick() const noexcept;

 private:
  double cadence_;
  long long next_index_ = 1;
  std::optional<AlphaReading> pending_;
};

}  // namespace softbci
