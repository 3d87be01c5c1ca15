#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "softbci/signal_source.hpp"

namespace softbci {

inline constexpr std::size_t kWindowLength = 500;
inline constexpr std::size_t kWindowHop = 250;
inline constexpr double kPeakSearchLowHz = 6.0;
inline constexpr double kPeakSearchHighHz = 20.0;
inline constexpr double kAlphaLowHz = 8.0;
inline constexpr double kAlphaHighHz = 13.0;

// ---------------------------------------------------------------------------
// Bandpass filtering

/// One second-order section, normalized so a0 == 1:
///   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct BandpassDesign {
  double low_cut = 1.0;    // Hz
  double high_cut = 40.0;  // Hz
  int order = 20;          // bandpass order, even; order/2 biquad sections
  double fs = kEegRateHz;

  void validate() const;
};

/// Digital Butterworth bandpass by the bilinear transform with frequency
/// prewarping. Each section carries one zero at z = 1 and one at z = -1 and is
/// scaled to unit gain at the prewarped geometric centre frequency.
std::vector<Biquad> design_butterworth_bandpass(const BandpassDesign& design);

/// Complex response of a section cascade at f_hz.
std::complex<double> frequency_response(std::span<const Biquad> sections, double f_hz, double fs);

/// Causal cascaded-biquad filter (transposed direct form II).
class BandpassFilter {
 public:
  explicit BandpassFilter(BandpassDesign design = {});

  /// Throws SignalIntegrityError on a non-finite input.
  double step(double x);
  EegSample filter_step(EegSample sample) { return {sample.t, step(sample.v)}; }
  void reset() noexcept;

  const BandpassDesign& design() const noexcept { return design_; }
  const std::vector<Biquad>& sections() const noexcept { return sections_; }
  std::complex<double> response(double f_hz) const {
    return frequency_response(sections_, f_hz, design_.fs);
  }

 private:
  BandpassDesign design_;
  std::vector<Biquad> sections_;
  std::vector<std::array<double, 2>> state_;
};

// ---------------------------------------------------------------------------
// Rolling windows

struct SampleWindow {
  std::size_t frame_idx = 0;
  double t_end = 0.0;  // time of the newest sample
  std::vector<double> samples;
};

/// Fixed-length rolling window with 1/2 overlap: the first window is emitted
/// after `length` samples, then one per `hop` samples.
class Windower {
 public:
  explicit Windower(std::size_t length = kWindowLength, std::size_t hop = kWindowHop);

  std::optional<SampleWindow> push_sample(const EegSample& sample);
  void reset() noexcept;

  std::size_t length() const noexcept { return length_; }
  std::size_t hop() const noexcept { return hop_; }

 private:
  std::size_t length_;
  std::size_t hop_;
  std::deque<double> buffer_;
  std::size_t pushed_ = 0;
  std::size_t frames_ = 0;
};

/// Offline reference windowing of a recorded stream.
std::vector<SampleWindow> window_offline(std::span<const EegSample> samples,
                                         std::size_t length = kWindowLength,
                                         std::size_t hop = kWindowHop);

// ---------------------------------------------------------------------------
// Spectrum

enum class WindowKind { Rectangular, Hann };

struct SpectrumFrame {
  std::size_t frame_idx = 0;
  double t_end = 0.0;
  std::vector<double> freq;  // Hz, spacing fs / n
  std::vector<double> psd;   // uV^2/Hz, one-sided

  double resolution() const noexcept { return freq.size() > 1 ? freq[1] - freq[0] : 0.0; }
};

/// One-sided periodogram: psd[k] = c * |X[k]|^2 / (fs * sum w^2), with c = 2
/// for interior bins and 1 for DC and Nyquist. sum(psd) * df equals
/// sum((w x)^2) / sum(w^2), i.e. the mean square for the rectangular window.
class PsdEstimator {
 public:
  explicit PsdEstimator(std::size_t length = kWindowLength, double fs = kEegRateHz,
                        WindowKind window = WindowKind::Rectangular);
  ~PsdEstimator();
  PsdEstimator(PsdEstimator&&) noexcept;
  PsdEstimator& operator=(PsdEstimator&&) noexcept;

  /// Throws ContractViolation when the frame length differs from `length`.
  SpectrumFrame compute_psd(std::span<const double> frame, std::size_t frame_idx = 0,
                            double t_end = 0.0);

  std::size_t length() const noexcept { return length_; }
  WindowKind window() const noexcept { return window_kind_; }

 private:
  struct Plan;
  std::size_t length_;
  double fs_;
  WindowKind window_kind_;
  std::vector<double> window_;
  double window_energy_ = 0.0;
  std::unique_ptr<Plan> plan_;
};

/// Convenience for a single 500-sample frame at 250 Hz.
SpectrumFrame compute_psd(std::span<const double> frame,
                          WindowKind window = WindowKind::Rectangular);

// ---------------------------------------------------------------------------
// Alpha detection and normalization

struct Calibration {
  double p_ref = 1.0;      // uV^2/Hz, normalization reference
  double threshold = 0.0;  // uV^2/Hz, detection threshold on the peak bin

  void validate() const;
  bool operator==(const Calibration&) const = default;
};

struct AlphaReading {
  double t = 0.0;
  double p_alpha = 0.0;  // band-mean PSD over 8-13 Hz, 0 when the gate fails
  double a_psd = 0.0;    // normalized, [0, 100]
  bool gated = false;
  double peak_hz = 0.0;   // argmax over 6-20 Hz
  double peak_psd = 0.0;
};

/// Mean PSD over bins with 8 <= f <= 13 Hz.
double alpha_band_mean(const SpectrumFrame& spectrum);

/// Argmax bin over 6 <= f <= 20 Hz; ties go to the lowest frequency.
std::size_t alpha_peak_bin(const SpectrumFrame& spectrum);

AlphaReading detect_alpha(const SpectrumFrame& spectrum, const Calibration& cal);

/// a_psd = 100 * min(1, p_alpha / p_ref), clamped to [0, 100].
double normalize(double p_alpha, const Calibration& cal);

/// Linear-interpolated percentile (q in [0, 100]) of a non-empty sample.
double percentile(std::vector<double> values, double q);

struct DspConfig {
  BandpassDesign filter;
  std::size_t window_length = kWindowLength;
  std::size_t hop = kWindowHop;
  WindowKind window = WindowKind::Rectangular;
};

struct CalibrationOptions {
  double percentile = 95.0;
  double threshold_ratio = 0.25;
  std::optional<double> p_ref_override;
  std::optional<double> threshold_override;
  DspConfig dsp;
};

/// Runs the whole chain over an eyes-closed recording (>= 4 s) and derives
/// p_ref from the gate-eligible band means; threshold = ratio * p_ref.
/// Throws CalibrationError when the recording is too short or contains no
/// alpha-gated frame.
Calibration calibrate(std::span<const EegSample> recording, const CalibrationOptions& options = {});

struct DspOutput {
  SpectrumFrame spectrum;
  AlphaReading reading;
};

/// filter -> window -> PSD -> gate/normalize, one sample at a time.
class AlphaDetector {
 public:
  AlphaDetector(DspConfig config, Calibration calibration);

  std::optional<DspOutput> push_sample(const EegSample& raw);

  const Calibration& calibration() const noexcept { return calibration_; }
  void set_calibration(const Calibration& cal);
  const DspConfig& config() const noexcept { return config_; }

 private:
  DspConfig config_;
  Calibration calibration_;
  BandpassFilter filter_;
  Windower windower_;
  PsdEstimator psd_;
};

}  // namespace softbci
