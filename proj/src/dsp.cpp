#include "softbci/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "softbci/error.hpp"

namespace softbci {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Butterworth bandpass

void BandpassDesign::validate() const {
  if (!(fs > 0.0)) throw ConfigError("filter sample rate must be positive");
  if (!(low_cut > 0.0 && low_cut < high_cut && high_cut < fs / 2.0)) {
    throw ConfigError("filter cutoffs must satisfy 0 < low_cut < high_cut < fs/2");
  }
  if (order < 2 || order % 2 != 0) throw ConfigError("filter order must be an even integer >= 2");
}

std::vector<Biquad> design_butterworth_bandpass(const BandpassDesign& design) {
  design.validate();
  const int n = design.order / 2;
  const double fs2 = 2.0 * design.fs;
  const double w1 = fs2 * std::tan(std::numbers::pi * design.low_cut / design.fs);
  const double w2 = fs2 * std::tan(std::numbers::pi * design.high_cut / design.fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  std::vector<cplx> upper;
  std::vector<double> real;
  for (int k = 0; k < n; ++k) {
    const cplx proto = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n));
    const cplx half = proto * (bw / 2.0);
    const cplx root = std::sqrt(half * half - w0sq);
    for (const cplx s : {half + root, half - root}) {
      const cplx z = (fs2 + s) / (fs2 - s);
      if (std::abs(z.imag()) <= 1e-12 * std::abs(z)) {
        real.push_back(z.real());
      } else if (z.imag() > 0.0) {
        upper.push_back(z);
      }
    }
  }
  std::sort(upper.begin(), upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
  std::sort(real.begin(), real.end());

  std::vector<Biquad> sections;
  for (const cplx& z : upper) {
    sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
    sections.push_back({1.0, 0.0, -1.0, -(real[i] + real[i + 1]), real[i] * real[i + 1]});
  }
  if (sections.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("filter design produced an unpaired pole");
  }

  const double centre_hz = design.fs / std::numbers::pi * std::atan(std::sqrt(w0sq) / fs2);
  for (auto& s : sections) {
    const double g = 1.0 / std::abs(frequency_response(std::span(&s, 1), centre_hz, design.fs));
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
  }
  return sections;
}

std::complex<double> frequency_response(std::span<const Biquad> sections, double f_hz, double fs) {
  const cplx zi = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs);
  const cplx zi2 = zi * zi;
  cplx h = 1.0;
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * zi + s.b2 * zi2) / (1.0 + s.a1 * zi + s.a2 * zi2);
  }
  return h;
}

BandpassFilter::BandpassFilter(BandpassDesign design)
    : design_(design), sections_(design_butterworth_bandpass(design)), state_(sections_.size()) {}

double BandpassFilter::step(double x) {
  if (!std::isfinite(x)) throw SignalIntegrityError("non-finite EEG sample rejected by bandpass filter");
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    const auto& s = sections_[i];
    auto& z = state_[i];
    const double y = s.b0 * x + z[0];
    z[0] = s.b1 * x - s.a1 * y + z[1];
    z[1] = s.b2 * x - s.a2 * y;
    x = y;
  }
  return x;
}

void BandpassFilter::reset() noexcept {
  for (auto& z : state_) z = {0.0, 0.0};
}

// ---------------------------------------------------------------------------
// Windowing

Windower::Windower(std::size_t length, std::size_t hop) : length_(length), hop_(hop) {
  if (length_ == 0 || hop_ == 0 || hop_ > length_) {
    throw ConfigError("window length and hop must satisfy 0 < hop <= length");
  }
}

std::optional<SampleWindow> Windower::push_sample(const EegSample& sample) {
  buffer_.push_back(sample.v);
  if (buffer_.size() > length_) buffer_.pop_front();
  ++pushed_;
  if (pushed_ < length_ || (pushed_ - length_) % hop_ != 0) return std::nullopt;
  return SampleWindow{frames_++, sample.t, std::vector<double>(buffer_.begin(), buffer_.end())};
}

void Windower::reset() noexcept {
  buffer_.clear();
  pushed_ = 0;
  frames_ = 0;
}

std::vector<SampleWindow> window_offline(std::span<const EegSample> samples, std::size_t length,
                                         std::size_t hop) {
  std::vector<SampleWindow> frames;
  for (std::size_t end = length; end <= samples.size(); end += hop) {
    SampleWindow w{frames.size(), samples[end - 1].t, {}};
    w.samples.reserve(length);
    for (std::size_t i = end - length; i < end; ++i) w.samples.push_back(samples[i].v);
    frames.push_back(std::move(w));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// PSD

namespace {

// FFTW's planner is not thread-safe; execution of a finished plan is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct PsdEstimator::Plan {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit Plan(std::size_t n) {
    std::lock_guard lock(fftw_planner_mutex());
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~Plan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(out);
    fftw_free(in);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
};

PsdEstimator::PsdEstimator(std::size_t length, double fs, WindowKind window)
    : length_(length), fs_(fs), window_kind_(window), window_(length, 1.0) {
  if (length_ < 2) throw ConfigError("PSD frame length must be at least 2");
  if (window_kind_ == WindowKind::Hann) {
    for (std::size_t i = 0; i < length_; ++i) {
      window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                        static_cast<double>(length_));
    }
  }
  for (double w : window_) window_energy_ += w * w;
  plan_ = std::make_unique<Plan>(length_);
}

PsdEstimator::~PsdEstimator() = default;
PsdEstimator::PsdEstimator(PsdEstimator&&) noexcept = default;
PsdEstimator& PsdEstimator::operator=(PsdEstimator&&) noexcept = default;

SpectrumFrame PsdEstimator::compute_psd(std::span<const double> frame, std::size_t frame_idx,
                                        double t_end) {
  if (frame.size() != length_) {
    throw ContractViolation("compute_psd expects " + std::to_string(length_) + " samples, got " +
                            std::to_string(frame.size()));
  }
  for (std::size_t i = 0; i < length_; ++i) plan_->in[i] = frame[i] * window_[i];
  fftw_execute(plan_->plan);

  const std::size_t bins = length_ / 2 + 1;
  const bool has_nyquist = length_ % 2 == 0;
  const double scale = 1.0 / (fs_ * window_energy_);
  SpectrumFrame out{frame_idx, t_end, std::vector<double>(bins), std::vector<double>(bins)};
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = plan_->out[k][0];
    const double im = plan_->out[k][1];
    const bool edge = k == 0 || (has_nyquist && k == bins - 1);
    out.freq[k] = static_cast<double>(k) * fs_ / static_cast<double>(length_);
    out.psd[k] = (edge ? 1.0 : 2.0) * scale * (re * re + im * im);
  }
  return out;
}

SpectrumFrame compute_psd(std::span<const double> frame, WindowKind window) {
  PsdEstimator estimator(kWindowLength, kEegRateHz, window);
  return estimator.compute_psd(frame);
}

// ---------------------------------------------------------------------------
// Alpha detection

void Calibration::validate() const {
  if (!(p_ref > 0.0) || !std::isfinite(p_ref)) throw ConfigError("p_ref must be positive");
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
    throw ConfigError("threshold must be non-negative");
  }
}

double alpha_band_mean(const SpectrumFrame& spectrum) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < spectrum.freq.size(); ++k) {
    const double f = spectrum.freq[k];
    if (f >= kAlphaLowHz && f <= kAlphaHighHz) {
      sum += spectrum.psd[k];
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

std::size_t alpha_peak_bin(const SpectrumFrame& spectrum) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < spectrum.freq.size(); ++k) {
    const double f = spectrum.freq[k];
    if (f < kPeakSearchLowHz || f > kPeakSearchHighHz) continue;
    if (!best || spectrum.psd[k] > spectrum.psd[*best]) best = k;
  }
  if (!best) throw ContractViolation("spectrum does not cover the 6-20 Hz peak search band");
  return *best;
}

double normalize(double p_alpha, const Calibration& cal) {
  if (!(cal.p_ref > 0.0)) throw ContractViolation("normalize requires p_ref > 0");
  if (!(p_alpha > 0.0)) return 0.0;
  return std::clamp(100.0 * std::min(1.0, p_alpha / cal.p_ref), 0.0, 100.0);
}

AlphaReading detect_alpha(const SpectrumFrame& spectrum, const Calibration& cal) {
  const std::size_t peak = alpha_peak_bin(spectrum);
  AlphaReading r;
  r.t = spectrum.t_end;
  r.peak_hz = spectrum.freq[peak];
  r.peak_psd = spectrum.psd[peak];
  const bool in_alpha = r.peak_hz >= kAlphaLowHz && r.peak_hz <= kAlphaHighHz;
  if (in_alpha && r.peak_psd >= cal.threshold) {
    r.p_alpha = alpha_band_mean(spectrum);
    r.a_psd = normalize(r.p_alpha, cal);
    r.gated = true;
  }
  return r;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractViolation("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw ContractViolation("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

Calibration calibrate(std::span<const EegSample> recording, const CalibrationOptions& options) {
  const std::size_t minimum = options.dsp.window_length + 2 * options.dsp.hop;
  if (recording.size() < minimum) {
    throw CalibrationError("calibration recording has " + std::to_string(recording.size()) +
                           " samples; at least " + std::to_string(minimum) + " (4 s) required");
  }
  if (!(options.threshold_ratio >= 0.0)) throw CalibrationError("threshold ratio must be >= 0");

  BandpassFilter filter(options.dsp.filter);
  Windower windower(options.dsp.window_length, options.dsp.hop);
  PsdEstimator psd(options.dsp.window_length, options.dsp.filter.fs, options.dsp.window);
  std::vector<double> eligible;
  for (const auto& s : recording) {
    if (auto w = windower.push_sample(filter.filter_step(s))) {
      const auto spectrum = psd.compute_psd(w->samples, w->frame_idx, w->t_end);
      const double f = spectrum.freq[alpha_peak_bin(spectrum)];
      if (f >= kAlphaLowHz && f <= kAlphaHighHz) eligible.push_back(alpha_band_mean(spectrum));
    }
  }

  Calibration cal;
  if (options.p_ref_override) {
    cal.p_ref = *options.p_ref_override;
  } else {
    if (eligible.empty()) {
      throw CalibrationError("calibration recording contains no frame with an 8-13 Hz peak");
    }
    cal.p_ref = percentile(std::move(eligible), options.percentile);
  }
  if (!(cal.p_ref > 0.0)) throw CalibrationError("calibration produced a non-positive p_ref");
  cal.threshold = options.threshold_override.value_or(options.threshold_ratio * cal.p_ref);
  cal.validate();
  return cal;
}

AlphaDetector::AlphaDetector(DspConfig config, Calibration calibration)
    : config_(config),
      calibration_(calibration),
      filter_(config.filter),
      windower_(config.window_length, config.hop),
      psd_(config.window_length, config.filter.fs, config.window) {
  calibration_.validate();
}

void AlphaDetector::set_calibration(const Calibration& cal) {
  cal.validate();
  calibration_ = cal;
}

std::optional<DspOutput> AlphaDetector::push_sample(const EegSample& raw) {
  auto window = windower_.push_sample(filter_.filter_step(raw));
  if (!window) return std::nullopt;
  DspOutput out{psd_.compute_psd(window->samples, window->frame_idx, window->t_end), {}};
  out.reading = detect_alpha(out.spectrum, calibration_);
  return out;
}

}  // namespace softbci
