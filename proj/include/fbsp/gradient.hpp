#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsp/bank.hpp"

namespace fbsp {

struct ParamGradient {
  double d_m = 0.0;
  double d_fb = 0.0;
  std::vector<double> d_fc;
};

/// (1/F) sum_k (||K_k||^2 - 1)^2 over all filters of the bank.
double fbsp_loss(const KernelBank& bank);

/// Envelope value and its partial derivatives at one centered tap.
/// At m == 0 the envelope is the constant 1; its m-derivative does not exist
/// there (zeros of the sinc accumulate at m -> 0) and is reported as 0.
struct EnvelopeJet {
  cplx value;
  cplx d_m;
  cplx d_fb;
};
EnvelopeJet envelope_jet(double m, double f_b, double centered_tap);

/// Analytic gradient of fbsp_loss(fbsp_kernel(params)). d_fc is exactly zero.
/// Throws NumericalError inside a sinc-zero exclusion zone at fractional m.
ParamGradient loss_gradient(const FbspParams& params);

/// Pullback of a cotangent G (F x N) through the kernel:
/// d_theta = Re sum conj(G) * dK/dtheta. G is the gradient of a real
/// objective with respect to the kernel (dl/dRe K + i dl/dIm K).
ParamGradient kernel_jacobian_vector(const FbspParams& params,
                                     const ComplexMatrix& cotangent);

using ParamFunction = std::function<double(const FbspParams&)>;

/// Central differences in m, f_b and each f_c. Where a central stencil would
/// leave the parameter domain (m < 0, f_c outside [0, 0.5]) the second-order
/// one-sided stencil is used instead.
ParamGradient finite_difference_oracle(const ParamFunction& f,
                                       const FbspParams& params, double step);

/// True when central differences with `step` are trustworthy at `params`:
/// every tap's sinc argument stays at least max(1e-6, 100 * shift) away from
/// a nonzero sinc zero, `shift` being how far the step moves that argument.
bool finite_difference_valid(const FbspParams& params, double step);

struct GradCheckEntry {
  std::string param;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool pass = false;
  std::string note;
};

void to_json(nlohmann::json& j, const GradCheckEntry& e);

struct GradCheckTolerance {
  double step = 1e-6;
  double rel = 1e-5;
  double abs = 1e-8;
};

/// |a - b| / max(|a|, |b|), zero when both are zero.
double relative_error(double a, double b);

/// Compares loss_gradient against finite differences at one point.
/// d_fc entries pass only if the analytic value is exactly 0 and the
/// numeric estimate is below tol.abs. d_m at m == 0 is reported as skipped.
std::vector<GradCheckEntry> check_loss_gradient(const FbspParams& params,
                                                const GradCheckTolerance& tol = {});

struct GradientSuiteReport {
  std::vector<std::pair<FbspParams, std::vector<GradCheckEntry>>> draws;
  std::size_t rejected = 0;
  bool pass = true;
};

/// Draws (m in [0, 4], f_b in [0.25, 4], f_c on the one-sided DFT grid) until
/// `count` draws outside the exclusion zones have been checked.
GradientSuiteReport run_gradient_suite(std::uint64_t seed, std::size_t count,
                                       std::size_t n_fft,
                                       const GradCheckTolerance& tol = {});

}  // namespace fbsp
