#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsp/matrix.hpp"
#include "fbsp/signal.hpp"

namespace fbsp {

/// Trainable parameters of the fbsp layer. Order and bandwidth are shared by
/// all filters; each filter has its own center frequency in cycles/sample.
struct FbspParams {
  double m = 0.0;
  double f_b = 1.0;
  std::vector<double> f_c;
  std::size_t n_fft = 0;

  /// Throws ValidationError unless m >= 0, f_b > 0, f_c strictly increasing
  /// within [0, 0.5] and n_fft >= 2.
  void validate() const;

  /// The STFT-equivalent state: m = 0, f_b = 1, f_c = k/N for k = 0..N/2.
  static FbspParams stft_init(std::size_t n_fft);

  bool operator==(const FbspParams&) const = default;
};

void to_json(nlohmann::json& j, const FbspParams& p);
void from_json(const nlohmann::json& j, FbspParams& p);

/// F x N complex filter bank. `params` is empty for a DFT bank.
/// `carrier_sign` is the sign of the carrier exponent: -1 for the DFT
/// convention exp(-2i pi f n), +1 for fbsp kernels.
struct KernelBank {
  ComplexMatrix weights;
  std::optional<FbspParams> params;
  double norm_scale = 1.0;
  int carrier_sign = +1;

  std::size_t filters() const { return weights.rows(); }
  std::size_t taps() const { return weights.cols(); }
  std::string descriptor() const;
};

/// Rows norm_scale * exp(-2i pi (k/N) n) with norm_scale = 1/sqrt(N).
/// One-sided (k = 0..N/2) unless two_sided, in which case k = 0..N-1.
KernelBank dft_kernel(std::size_t n_fft, bool two_sided = false);

/// K_k[n] = sqrt(f_b / N) * sinc(f_b * c / m)^m * exp(2i pi f_c[k] n), with
/// c = n - (N-1)/2 the centered tap. The envelope is 1 at m = 0 and uses the
/// principal branch when the sinc is negative and m is fractional.
KernelBank fbsp_kernel(const FbspParams& params);
KernelBank fbsp_kernel(FbspParams params, std::size_t n_fft);

/// sin(pi x) / (pi x), with sinc(0) = 1.
double sinc(double x);
/// sin(pi x) and cos(pi x) with exact argument reduction.
double sin_pi(double x);
double cos_pi(double x);

/// Envelope sinc(f_b c / m)^m at centered tap c.
cplx envelope(double m, double f_b, double centered_tap);

inline double centered_tap(std::size_t n, std::size_t n_fft) {
  return static_cast<double>(n) - 0.5 * static_cast<double>(n_fft - 1);
}

/// exp(sign * 2i pi f n) with the phase reduced modulo one cycle.
cplx carrier(double f, std::size_t n, int sign);

/// True when m is fractional and some tap's sinc argument lies within
/// `radius` of a nonzero integer, where the envelope's log diverges.
bool in_exclusion_zone(double m, double f_b, std::size_t n_fft,
                       double radius = 1e-6);

/// Smallest distance of any tap's sinc argument to a nonzero sinc zero.
/// Infinity when m == 0 or no tap reaches |x| >= 0.5.
double nearest_sinc_zero(double m, double f_b, std::size_t n_fft);

inline constexpr double kExclusionRadius = 1e-6;

struct FrequencyResponse {
  RealMatrix gains;                 // F x M, linear magnitude
  std::vector<double> probe_freqs;  // cycles/sample on [0, 0.5]
  std::vector<double> max_gain_curve;
};

/// gains[k][j] = |sum_n K_k[n] w[n] exp(-s 2i pi f_j n)| with s the bank's
/// carrier sign, for M probes uniform on [0, 0.5].
FrequencyResponse frequency_response(const KernelBank& bank,
                                     const WindowSpec& window,
                                     std::size_t probes);

/// CSV: probe_freq, filter_0..filter_{F-1}, max_gain.
std::string to_csv(const FrequencyResponse& response);

}  // namespace fbsp
