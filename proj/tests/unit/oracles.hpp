#pragma once

// Independent reference computations used to check the library. Nothing here
// calls into the code under test.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace oracle {

/// O(n^2) DFT periodogram, one-sided, same scaling convention as a textbook
/// PSD: 2|X|^2/(fs sum w^2) for interior bins, 1x for DC and Nyquist.
std::vector<double> naive_periodogram(const std::vector<double>& x, double fs,
                                      const std::vector<double>& w);

/// Analytic magnitude of a digital Butterworth bandpass built by the bilinear
/// transform with prewarped edges:
///   |H|^2 = 1 / (1 + ((W^2 - W0^2) / (B W))^(2n)), W = tan(pi f / fs)
/// where n is the prototype lowpass order (bandpass order / 2).
double butterworth_bandpass_gain(double f, double low, double high, int bandpass_order, double fs);

/// Steady-state amplitude measured by least-squares fit of a sinusoid at f
/// to the tail of y.
double fitted_amplitude(const std::vector<double>& y, double f, double fs, std::size_t tail);

double mean_square(const std::vector<double>& x);

std::filesystem::path temp_dir(const std::string& name);

/// Reads a whole file as bytes.
std::string slurp(const std::filesystem::path& p);

std::size_t count_lines(const std::filesystem::path& p);

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column as doubles; throws std::out_of_range for an unknown name.
  std::vector<double> col(const std::string& name) const;
};

Csv read_csv(const std::filesystem::path& p);

}  // namespace oracle
