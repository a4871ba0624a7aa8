#include "fbsp/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fbsp/error.hpp"
#include "fbsp/io.hpp"

namespace fbsp {

namespace {

constexpr double kPi = std::numbers::pi;

// s^p on the principal branch, s real.
cplx principal_pow(double s, double p) {
  if (p == std::floor(p)) return {std::pow(s, p), 0.0};
  if (s == 0.0) return {0.0, 0.0};
  const double mag = std::pow(std::abs(s), p);
  return s > 0.0 ? cplx(mag, 0.0) : std::polar(mag, kPi * p);
}

void require_clear(const FbspParams& params) {
  if (in_exclusion_zone(params.m, params.f_b, params.n_fft)) {
    throw NumericalError(
        "parameters m=" + format_real(params.m) + ", f_b=" + format_real(params.f_b) +
        " put a tap within " + format_real(kExclusionRadius) +
        " of a sinc zero at fractional m; the m-derivative diverges there "
        "(nearest distance " +
        format_real(nearest_sinc_zero(params.m, params.f_b, params.n_fft)) + ")");
  }
}

double squared_norm(std::span<const cplx> row) {
  double acc = 0.0;
  for (const cplx& v : row) acc += std::norm(v);
  return acc;
}

}  // namespace

double fbsp_loss(const KernelBank& bank) {
  const std::size_t F = bank.filters();
  if (F == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < F; ++k) {
    const double d = squared_norm(bank.weights.row(k)) - 1.0;
    acc += d * d;
  }
  return acc / static_cast<double>(F);
}

EnvelopeJet envelope_jet(double m, double f_b, double c) {
  EnvelopeJet jet{{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  if (m == 0.0) return jet;

  const double x = f_b * c / m;
  const double s = sinc(x);
  jet.value = principal_pow(s, m);

  // E * g(x) with g(x) = pi x cot(pi x) - 1, written as s^(m-1) cos(pi x) - E
  // so integer orders stay finite at the sinc zeros.
  cplx e_g;
  if (std::abs(x) < 1e-4) {
    const double p2 = (kPi * x) * (kPi * x);
    e_g = jet.value * (-p2 / 3.0 - p2 * p2 / 45.0);
  } else {
    e_g = principal_pow(s, m - 1.0) * cos_pi(x) - jet.value;
  }

  cplx e_log{0.0, 0.0};
  if (s != 0.0) {
    const cplx log_s(std::log(std::abs(s)), s < 0.0 ? kPi : 0.0);
    e_log = jet.value * log_s;
  }

  jet.d_m = e_log - e_g;
  jet.d_fb = (m / f_b) * e_g;
  return jet;
}

ParamGradient loss_gradient(const FbspParams& params) {
  params.validate();
  require_clear(params);
  const std::size_t N = params.n_fft;
  const double inv_n = 1.0 / static_cast<double>(N);

  // Every row shares the envelope, so ||K_k||^2 = (f_b / N) sum |E_n|^2.
  double sum_e = 0.0, sum_dm = 0.0, sum_dfb = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const auto jet = envelope_jet(params.m, params.f_b, centered_tap(n, N));
    sum_e += std::norm(jet.value);
    sum_dm += 2.0 * std::real(std::conj(jet.value) * jet.d_m);
    sum_dfb += 2.0 * std::real(std::conj(jet.value) * jet.d_fb);
  }
  const double norm2 = params.f_b * inv_n * sum_e;
  const double dnorm_dm = params.f_b * inv_n * sum_dm;
  const double dnorm_dfb = inv_n * sum_e + params.f_b * inv_n * sum_dfb;

  ParamGradient g;
  g.d_m = 2.0 * (norm2 - 1.0) * dnorm_dm;
  g.d_fb = 2.0 * (norm2 - 1.0) * dnorm_dfb;
  g.d_fc.assign(params.f_c.size(), 0.0);
  return g;
}

ParamGradient kernel_jacobian_vector(const FbspParams& params,
                                     const ComplexMatrix& cotangent) {
  params.validate();
  const std::size_t N = params.n_fft;
  const std::size_t F = params.f_c.size();
  if (cotangent.rows() != F || cotangent.cols() != N) {
    throw ValidationError("cotangent shape does not match the kernel bank");
  }
  require_clear(params);

  const double amp = std::sqrt(params.f_b / static_cast<double>(N));
  std::vector<EnvelopeJet> jets(N);
  for (std::size_t n = 0; n < N; ++n) {
    jets[n] = envelope_jet(params.m, params.f_b, centered_tap(n, N));
  }

  ParamGradient g;
  g.d_fc.assign(F, 0.0);
  // H_n = sum_k conj(G_kn) C_kn collects the row-independent factors.
  std::vector<cplx> h(N, cplx{0.0, 0.0});
  for (std::size_t k = 0; k < F; ++k) {
    const auto G = cotangent.row(k);
    double d_fc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const cplx c = carrier(params.f_c[k], n, +1);
      const cplx gc = std::conj(G[n]) * c;
      h[n] += gc;
      // dK/df_c = 2i pi n K; Re(conj(G) * 2i pi n K) = -2 pi n Im(conj(G) K).
      d_fc += -2.0 * kPi * static_cast<double>(n) * std::imag(gc * amp * jets[n].value);
    }
    g.d_fc[k] = d_fc;
  }
  for (std::size_t n = 0; n < N; ++n) {
    g.d_m += std::real(h[n] * amp * jets[n].d_m);
    g.d_fb += std::real(h[n] * amp * (jets[n].value / (2.0 * params.f_b) + jets[n].d_fb));
  }
  return g;
}

ParamGradient finite_difference_oracle(const ParamFunction& f,
                                       const FbspParams& params, double step) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");

  // The stencil perturbs one slot of a private copy at a time.
  FbspParams work = params;
  auto derivative = [&](double& slot, double lo, double hi) {
    const double x0 = slot;
    auto f_at = [&](double x) {
      slot = x;
      return f(work);
    };
    double result;
    if (x0 - step >= lo && x0 + step <= hi) {
      result = (f_at(x0 + step) - f_at(x0 - step)) / (2.0 * step);
    } else if (x0 - step < lo) {
      result = (-3.0 * f_at(x0) + 4.0 * f_at(x0 + step) - f_at(x0 + 2.0 * step)) /
               (2.0 * step);
    } else {
      result = (3.0 * f_at(x0) - 4.0 * f_at(x0 - step) + f_at(x0 - 2.0 * step)) /
               (2.0 * step);
    }
    slot = x0;
    return result;
  };

  const double inf = std::numeric_limits<double>::infinity();
  ParamGradient g;
  g.d_m = derivative(work.m, 0.0, inf);
  g.d_fb = derivative(work.f_b, std::numeric_limits<double>::min(), inf);
  g.d_fc.resize(work.f_c.size());
  for (std::size_t k = 0; k < work.f_c.size(); ++k) {
    g.d_fc[k] = derivative(work.f_c[k], 0.0, 0.5);
  }
  return g;
}

bool finite_difference_valid(const FbspParams& params, double step) {
  const double m = params.m;
  if (m == 0.0 || m == std::floor(m)) return true;
  const std::size_t N = params.n_fft;
  for (std::size_t n = 0; n < N; ++n) {
    const double x = params.f_b * centered_tap(n, N) / m;
    const double nearest = std::round(x);
    if (nearest == 0.0) continue;
    const double shift = step * std::abs(x) * (1.0 / m + 1.0 / params.f_b);
    if (std::abs(x - nearest) < std::max(kExclusionRadius, 100.0 * shift)) {
      return false;
    }
  }
  return true;
}

void to_json(nlohmann::json& j, const GradCheckEntry& e) {
  j = nlohmann::json{{"param", e.param},
                     {"analytic", e.analytic},
                     {"numeric", e.numeric},
                     {"rel_error", e.rel_error},
                     {"status", e.pass ? (e.note.empty() ? "pass" : "skipped") : "fail"}};
  if (!e.note.empty()) j["note"] = e.note;
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

std::vector<GradCheckEntry> check_loss_gradient(const FbspParams& params,
                                                const GradCheckTolerance& tol) {
  const auto analytic = loss_gradient(params);
  const auto numeric = finite_difference_oracle(
      [](const FbspParams& p) { return fbsp_loss(fbsp_kernel(p)); }, params, tol.step);

  std::vector<GradCheckEntry> out;
  auto add = [&](std::string name, double a, double n) {
    GradCheckEntry e{std::move(name), a, n, relative_error(a, n), false, {}};
    e.pass = e.rel_error < tol.rel || std::abs(a - n) < tol.abs;
    out.push_back(std::move(e));
  };
  if (params.m == 0.0) {
    out.push_back({"m", analytic.d_m, std::nan(""), 0.0, true,
                   "m = 0 is the accumulation point of the envelope's sinc zeros; "
                   "the m-derivative does not exist there"});
  } else {
    add("m", analytic.d_m, numeric.d_m);
  }
  add("f_b", analytic.d_fb, numeric.d_fb);
  for (std::size_t k = 0; k < params.f_c.size(); ++k) {
    GradCheckEntry e{"f_c[" + std::to_string(k) + "]", analytic.d_fc[k], numeric.d_fc[k],
                     0.0, false, {}};
    e.rel_error = std::abs(e.analytic - e.numeric);
    e.pass = e.analytic == 0.0 && std::abs(e.numeric) < tol.abs;
    out.push_back(std::move(e));
  }
  return out;
}

GradientSuiteReport run_gradient_suite(std::uint64_t seed, std::size_t count,
                                       std::size_t n_fft,
                                       const GradCheckTolerance& tol) {
  GradientSuiteReport report;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> m_dist(0.0, 4.0);
  std::uniform_real_distribution<double> fb_dist(0.25, 4.0);
  while (report.draws.size() < count) {
    FbspParams p = FbspParams::stft_init(n_fft);
    p.m = m_dist(rng);
    p.f_b = fb_dist(rng);
    if (in_exclusion_zone(p.m, p.f_b, n_fft) || !finite_difference_valid(p, tol.step)) {
      ++report.rejected;
      continue;
    }
    auto entries = check_loss_gradient(p, tol);
    for (const auto& e : entries) report.pass = report.pass && e.pass;
    report.draws.emplace_back(std::move(p), std::move(entries));
  }
  return report;
}

}  // namespace fbsp
