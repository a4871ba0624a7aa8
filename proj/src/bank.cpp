#include "fbsp/bank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fbsp/error.hpp"
#include "fbsp/io.hpp"

namespace fbsp {

void FbspParams::validate() const {
  if (!std::isfinite(m) || m < 0.0) throw ValidationError("m must be >= 0");
  if (!std::isfinite(f_b) || f_b <= 0.0) throw ValidationError("f_b must be > 0");
  if (n_fft < 2) throw ValidationError("n_fft must be >= 2");
  if (f_c.empty()) throw ValidationError("f_c must not be empty");
  for (std::size_t k = 0; k < f_c.size(); ++k) {
    if (!std::isfinite(f_c[k]) || f_c[k] < 0.0 || f_c[k] > 0.5) {
      throw ValidationError("f_c[" + std::to_string(k) +
                            "] outside [0, 0.5] cycles/sample");
    }
    if (k > 0 && !(f_c[k] > f_c[k - 1])) {
      throw ValidationError("f_c must be strictly increasing");
    }
  }
}

FbspParams FbspParams::stft_init(std::size_t n_fft) {
  if (n_fft < 2) throw ValidationError("n_fft must be >= 2");
  FbspParams p;
  p.n_fft = n_fft;
  p.f_c.resize(n_fft / 2 + 1);
  for (std::size_t k = 0; k < p.f_c.size(); ++k) {
    p.f_c[k] = static_cast<double>(k) / static_cast<double>(n_fft);
  }
  return p;
}

void to_json(nlohmann::json& j, const FbspParams& p) {
  j = nlohmann::json{{"m", p.m}, {"f_b", p.f_b}, {"f_c", p.f_c}, {"n_fft", p.n_fft}};
}

void from_json(const nlohmann::json& j, FbspParams& p) {
  reject_unknown_keys(j, {"m", "f_b", "f_c", "n_fft"}, "fbsp params");
  p = FbspParams{};
  p.n_fft = require<std::size_t>(j, "n_fft");
  p.m = j.value("m", 0.0);
  p.f_b = j.value("f_b", 1.0);
  if (j.contains("f_c")) {
    p.f_c = j.at("f_c").get<std::vector<double>>();
  } else {
    p.f_c = FbspParams::stft_init(p.n_fft).f_c;
  }
  p.validate();
}

std::string KernelBank::descriptor() const {
  std::ostringstream os;
  if (!params) {
    os << "dft(N=" << taps() << ", F=" << filters() << ")";
  } else {
    os << "fbsp(N=" << taps() << ", F=" << filters() << ", m="
       << format_real(params->m) << ", f_b=" << format_real(params->f_b) << ")";
  }
  return os.str();
}

double sin_pi(double x) {
  // Reduce to r in [-1, 1]; sin(pi x) = sin(pi r) since period is 2.
  const double r = x - 2.0 * std::round(0.5 * x);
  if (r == 1.0 || r == -1.0 || r == 0.0) return 0.0;
  return std::sin(std::numbers::pi * r);
}

double cos_pi(double x) {
  const double r = x - 2.0 * std::round(0.5 * x);
  if (r == 0.5 || r == -0.5) return 0.0;
  return std::cos(std::numbers::pi * r);
}

double sinc(double x) {
  const double px = std::numbers::pi * x;
  if (std::abs(x) < 1e-5) {
    const double p2 = px * px;
    return 1.0 - p2 / 6.0 + p2 * p2 / 120.0;
  }
  return sin_pi(x) / px;
}

cplx envelope(double m, double f_b, double c) {
  if (m == 0.0) return {1.0, 0.0};
  const double s = sinc(f_b * c / m);
  if (m == std::floor(m)) return {std::pow(s, m), 0.0};
  if (s == 0.0) return {0.0, 0.0};
  const double mag = std::pow(std::abs(s), m);
  return s > 0.0 ? cplx(mag, 0.0) : std::polar(mag, std::numbers::pi * m);
}

cplx carrier(double f, std::size_t n, int sign) {
  double t = f * static_cast<double>(n);
  t -= std::round(t);
  const double angle = sign * 2.0 * std::numbers::pi * t;
  return {std::cos(angle), std::sin(angle)};
}

double nearest_sinc_zero(double m, double f_b, std::size_t n_fft) {
  double best = std::numeric_limits<double>::infinity();
  if (m == 0.0) return best;
  for (std::size_t n = 0; n < n_fft; ++n) {
    const double x = f_b * centered_tap(n, n_fft) / m;
    const double nearest = std::round(x);
    if (nearest == 0.0) continue;
    best = std::min(best, std::abs(x - nearest));
  }
  return best;
}

bool in_exclusion_zone(double m, double f_b, std::size_t n_fft, double radius) {
  if (m == 0.0 || m == std::floor(m)) return false;
  return nearest_sinc_zero(m, f_b, n_fft) < radius;
}

KernelBank dft_kernel(std::size_t n_fft, bool two_sided) {
  if (n_fft < 2) throw ValidationError("DFT length must be >= 2");
  const std::size_t filters = two_sided ? n_fft : n_fft / 2 + 1;
  KernelBank bank;
  bank.norm_scale = 1.0 / std::sqrt(static_cast<double>(n_fft));
  bank.carrier_sign = -1;
  bank.weights = ComplexMatrix(filters, n_fft);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n_fft);
  for (std::size_t k = 0; k < filters; ++k) {
    for (std::size_t n = 0; n < n_fft; ++n) {
      // (k n mod N) keeps the phase argument exact.
      const double angle = -step * static_cast<double>((k * n) % n_fft);
      bank.weights(k, n) = bank.norm_scale * cplx(std::cos(angle), std::sin(angle));
    }
  }
  return bank;
}

KernelBank fbsp_kernel(const FbspParams& params) {
  params.validate();
  const std::size_t N = params.n_fft;
  KernelBank bank;
  bank.params = params;
  bank.norm_scale = 1.0 / std::sqrt(static_cast<double>(N));
  bank.carrier_sign = +1;
  bank.weights = ComplexMatrix(params.f_c.size(), N);

  const double amp = bank.norm_scale * std::sqrt(params.f_b);
  std::vector<cplx> env(N);
  for (std::size_t n = 0; n < N; ++n) {
    env[n] = amp * envelope(params.m, params.f_b, centered_tap(n, N));
  }
  for (std::size_t k = 0; k < params.f_c.size(); ++k) {
    auto row = bank.weights.row(k);
    for (std::size_t n = 0; n < N; ++n) {
      row[n] = env[n] * carrier(params.f_c[k], n, +1);
    }
  }
  return bank;
}

KernelBank fbsp_kernel(FbspParams params, std::size_t n_fft) {
  params.n_fft = n_fft;
  return fbsp_kernel(params);
}

FrequencyResponse frequency_response(const KernelBank& bank,
                                     const WindowSpec& window,
                                     std::size_t probes) {
  if (probes < 2) throw ValidationError("probe count must be >= 2");
  if (window.length != bank.taps()) {
    throw ValidationError("window length does not match bank taps");
  }
  const std::size_t N = bank.taps();
  const std::size_t F = bank.filters();
  const auto w = window.values();

  FrequencyResponse out;
  out.probe_freqs.resize(probes);
  for (std::size_t j = 0; j < probes; ++j) {
    out.probe_freqs[j] = 0.5 * static_cast<double>(j) / static_cast<double>(probes - 1);
  }

  // Windowed probe table, M x N.
  ComplexMatrix probe(probes, N);
  for (std::size_t j = 0; j < probes; ++j) {
    for (std::size_t n = 0; n < N; ++n) {
      probe(j, n) = w[n] * carrier(out.probe_freqs[j], n, -bank.carrier_sign);
    }
  }

  out.gains = RealMatrix(F, probes);
  out.max_gain_curve.assign(probes, 0.0);
  for (std::size_t k = 0; k < F; ++k) {
    const auto row = bank.weights.row(k);
    for (std::size_t j = 0; j < probes; ++j) {
      const auto p = probe.row(j);
      cplx acc{0.0, 0.0};
      for (std::size_t n = 0; n < N; ++n) acc += row[n] * p[n];
      const double g = std::abs(acc);
      out.gains(k, j) = g;
      out.max_gain_curve[j] = std::max(out.max_gain_curve[j], g);
    }
  }
  return out;
}

std::string to_csv(const FrequencyResponse& response) {
  std::ostringstream os;
  const std::size_t F = response.gains.rows();
  os << "probe_freq";
  for (std::size_t k = 0; k < F; ++k) os << ",filter_" << k;
  os << ",max_gain\n";
  for (std::size_t j = 0; j < response.probe_freqs.size(); ++j) {
    os << format_real(response.probe_freqs[j]);
    for (std::size_t k = 0; k < F; ++k) os << ',' << format_real(response.gains(k, j));
    os << ',' << format_real(response.max_gain_curve[j]) << '\n';
  }
  return os.str();
}

}  // namespace fbsp
