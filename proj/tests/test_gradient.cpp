#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fbsp/error.hpp"
#include "fbsp/gradient.hpp"

using namespace fbsp;

namespace {

FbspParams at(double m, double f_b, std::size_t N = 64) {
  auto p = FbspParams::stft_init(N);
  p.m = m;
  p.f_b = f_b;
  return p;
}

double loss_of(const FbspParams& p) { return fbsp_loss(fbsp_kernel(p)); }

double total_norm(const FbspParams& p) {
  const auto bank = fbsp_kernel(p);
  double acc = 0;
  for (const auto& v : bank.weights.data()) acc += std::norm(v);
  return acc;
}

// Row norm from the scalar formula in long double, independent of the bank.
double row_norm_oracle(double m, double f_b, std::size_t N) {
  const long double pi = 3.141592653589793238462643383279502884L;
  long double acc = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const long double c = static_cast<long double>(n) - (N - 1) / 2.0L;
    const long double x = f_b * c / m;
    const long double s = x == 0 ? 1.0L : std::sin(pi * x) / (pi * x);
    acc += std::pow(std::fabs(s), 2.0L * m);
  }
  return static_cast<double>(acc * f_b / N);
}

void check_close(double analytic, double numeric, double rel = 1e-5, double abs = 1e-8) {
  CAPTURE(analytic);
  CAPTURE(numeric);
  CHECK((relative_error(analytic, numeric) < rel || std::abs(analytic - numeric) < abs));
}

}  // namespace

TEST_CASE("loss at initialization and for a scaled bank") {
  for (std::size_t N : {8, 64, 256}) {
    const auto bank = fbsp_kernel(FbspParams::stft_init(N));
    CHECK(fbsp_loss(bank) < 1e-12);
    auto scaled = bank;
    for (auto& v : scaled.weights.data()) v *= std::sqrt(2.0);
    CHECK(std::abs(fbsp_loss(scaled) - 1.0) < 1e-9);
  }
}

TEST_CASE("loss matches the row-norm oracle") {
  const double norm = row_norm_oracle(1.5, 0.7, 64);
  const double expected = (norm - 1) * (norm - 1);
  CHECK(loss_of(at(1.5, 0.7)) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss_of(at(1.5, 0.7)) >= 0.0);
}

TEST_CASE("analytic loss gradient against finite differences") {
  const auto p = at(2.0, 0.8);
  const auto g = loss_gradient(p);
  const auto fd = finite_difference_oracle(loss_of, p, 1e-6);
  check_close(g.d_m, fd.d_m);
  check_close(g.d_fb, fd.d_fb);
}

TEST_CASE("loss gradient at m=0") {
  const auto init = loss_gradient(at(0.0, 1.0));
  for (double v : init.d_fc) CHECK(v == 0.0);
  CHECK(init.d_fb == 0.0);

  // L = (f_b - 1)^2 from the sqrt(f_b) prefactor alone.
  const auto g = loss_gradient(at(0.0, 2.0));
  CHECK(g.d_fb == doctest::Approx(2.0).epsilon(1e-12));
  const auto fd = finite_difference_oracle(loss_of, at(0.0, 2.0), 1e-6);
  check_close(g.d_fb, fd.d_fb);
}

TEST_CASE("d_fc vanishes at random parameters") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = at(std::uniform_real_distribution<double>(0.5, 4)(rng),
                      std::uniform_real_distribution<double>(0.25, 4)(rng));
    if (in_exclusion_zone(p.m, p.f_b, p.n_fft)) continue;
    const auto g = loss_gradient(p);
    const auto fd = finite_difference_oracle(loss_of, p, 1e-6);
    for (std::size_t k = 0; k < g.d_fc.size(); ++k) {
      CHECK(g.d_fc[k] == 0.0);
      CHECK(std::abs(fd.d_fc[k]) < 1e-8);
    }
  }
}

TEST_CASE("exclusion zone is reported") {
  // m = 1.5, f_b = 3 puts taps exactly on sinc zeros.
  CHECK_THROWS_AS(loss_gradient(at(1.5, 3.0)), NumericalError);
  CHECK_THROWS_AS(kernel_jacobian_vector(at(1.5, 3.0), ComplexMatrix(33, 64)), NumericalError);
  CHECK_NOTHROW(loss_gradient(at(2.0, 4.0)));
}

TEST_CASE("pullback: zero cotangent") {
  const auto g = kernel_jacobian_vector(at(1.0, 1.2), ComplexMatrix(33, 64));
  CHECK(g.d_m == 0.0);
  CHECK(g.d_fb == 0.0);
  for (double v : g.d_fc) CHECK(v == 0.0);
}

TEST_CASE("pullback: self pairing gives the gradient of the total squared norm") {
  const auto p = at(1.3, 0.9);
  auto G = fbsp_kernel(p).weights;
  for (auto& v : G.data()) v *= 2.0;  // gradient of sum |K|^2 w.r.t. K
  const auto g = kernel_jacobian_vector(p, G);
  const auto fd = finite_difference_oracle(total_norm, p, 1e-6);
  check_close(g.d_m, fd.d_m);
  check_close(g.d_fb, fd.d_fb);
  for (std::size_t k = 0; k < g.d_fc.size(); ++k) {
    CHECK(std::abs(g.d_fc[k]) < 1e-9);
    CHECK(std::abs(fd.d_fc[k]) < 1e-8);
  }
}

TEST_CASE("pullback: random cotangent against finite differences") {
  for (auto [m, f_b] : {std::pair{1.0, 1.2}, std::pair{2.3, 0.7}, std::pair{0.0, 1.4}}) {
    const auto p = at(m, f_b);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    ComplexMatrix G(p.f_c.size(), p.n_fft);
    for (auto& v : G.data()) v = {gauss(rng), gauss(rng)};
    auto paired = [&](const FbspParams& q) {
      const auto K = fbsp_kernel(q).weights;
      double acc = 0;
      for (std::size_t i = 0; i < K.data().size(); ++i) {
        acc += std::real(std::conj(G.data()[i]) * K.data()[i]);
      }
      return acc;
    };
    const auto g = kernel_jacobian_vector(p, G);
    const auto fd = finite_difference_oracle(paired, p, 1e-6);
    CAPTURE(m);
    if (m > 0) check_close(g.d_m, fd.d_m);
    check_close(g.d_fb, fd.d_fb);
    for (std::size_t k = 0; k < g.d_fc.size(); ++k) check_close(g.d_fc[k], fd.d_fc[k]);
  }
}

TEST_CASE("finite-difference oracle basics") {
  const auto p = at(3.0, 1.0);
  const auto zero = finite_difference_oracle([](const FbspParams&) { return 4.2; }, p, 1e-4);
  CHECK(std::abs(zero.d_m) < 1e-12);
  CHECK(std::abs(zero.d_fb) < 1e-12);
  const auto quad =
      finite_difference_oracle([](const FbspParams& q) { return q.m * q.m; }, p, 1e-4);
  CHECK(quad.d_m == doctest::Approx(6.0).epsilon(1e-8));
  // One-sided stencil at the m = 0 boundary is still exact for quadratics.
  const auto edge = finite_difference_oracle(
      [](const FbspParams& q) { return (q.m + 1) * (q.m + 1); }, at(0.0, 1.0), 1e-4);
  CHECK(edge.d_m == doctest::Approx(2.0).epsilon(1e-8));
  CHECK_THROWS_AS(finite_difference_oracle(loss_of, p, 0.0), ValidationError);
}

TEST_CASE("gradient suite on random draws") {
  const auto report = run_gradient_suite(2024, 25, 64);
  CHECK(report.draws.size() == 25);
  for (const auto& [params, entries] : report.draws) {
    for (const auto& e : entries) {
      CAPTURE(params.m);
      CAPTURE(params.f_b);
      CAPTURE(e.param);
      CAPTURE(e.analytic);
      CAPTURE(e.numeric);
      CHECK(e.pass);
    }
  }
  CHECK(report.pass);
}

TEST_CASE("m-derivative at m=0 does not exist") {
  // The envelope behaves like 1 + 2m log m near m = 0, so one-sided secant
  // slopes of the loss grow without bound as the step shrinks.
  const auto base = at(0.0, 1.3);
  const double l0 = loss_of(base);
  double previous = 0;
  for (double h : {1e-2, 1e-3, 1e-4, 1e-5}) {
    auto p = base;
    p.m = h;
    const double slope = (loss_of(p) - l0) / h;
    CAPTURE(h);
    CAPTURE(slope);
    CHECK(std::abs(slope) > std::abs(previous));
    previous = slope;
  }
  // The analytic side reports 0 at the boundary.
  CHECK(loss_gradient(base).d_m == 0.0);
}
