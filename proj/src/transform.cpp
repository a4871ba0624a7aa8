#include "fbsp/transform.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fbsp/error.hpp"
#include "fbsp/io.hpp"

namespace fbsp {

ComplexMatrix analyze_frames(const RealMatrix& frames, const KernelBank& bank) {
  if (frames.cols() != bank.taps()) {
    throw ValidationError("bank has " + std::to_string(bank.taps()) +
                          " taps but frames have length " +
                          std::to_string(frames.cols()));
  }
  const std::size_t F = bank.filters();
  const std::size_t T = frames.rows();
  const std::size_t N = bank.taps();
  ComplexMatrix X(F, T);
  for (std::size_t k = 0; k < F; ++k) {
    const auto kernel = bank.weights.row(k);
    for (std::size_t t = 0; t < T; ++t) {
      const auto f = frames.row(t);
      double re = 0.0, im = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        re += f[n] * kernel[n].real();
        im += f[n] * kernel[n].imag();
      }
      X(k, t) = {re, im};
    }
  }
  return X;
}

ComplexMatrix analyze(const Waveform& signal, const KernelBank& bank,
                      const FrameGrid& grid, const WindowSpec& window) {
  if (bank.taps() != grid.frame_length) {
    throw ValidationError("bank tap count " + std::to_string(bank.taps()) +
                          " does not match frame length " +
                          std::to_string(grid.frame_length));
  }
  return analyze_frames(frame(signal, grid, window), bank);
}

Spectrogram log_power(const ComplexMatrix& X, double eps, FrameGrid grid,
                      std::string bank_descriptor) {
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  Spectrogram spec;
  spec.grid = grid;
  spec.eps = eps;
  spec.bank_descriptor = std::move(bank_descriptor);
  spec.values = RealMatrix(X.rows(), X.cols());
  spec.power = RealMatrix(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.data().size(); ++i) {
    const double p = std::norm(X.data()[i]);
    spec.power.data()[i] = p;
    spec.values.data()[i] = std::log(p + eps);
  }
  return spec;
}

double bank_energy_ratio(const Spectrogram& clean, const Spectrogram& noisy) {
  if (clean.power.rows() != noisy.power.rows() ||
      clean.power.cols() != noisy.power.cols()) {
    throw ValidationError("spectrogram shapes differ");
  }
  double signal = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < clean.power.data().size(); ++i) {
    signal += clean.power.data()[i];
    residual += std::abs(noisy.power.data()[i] - clean.power.data()[i]);
  }
  if (residual == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / residual);
}

std::string to_csv(const Spectrogram& spec) {
  std::ostringstream os;
  for (std::size_t k = 0; k < spec.values.rows(); ++k) {
    const auto row = spec.values.row(k);
    for (std::size_t t = 0; t < row.size(); ++t) {
      if (t) os << ',';
      os << format_real(row[t]);
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json metadata(const Spectrogram& spec) {
  return {{"filters", spec.values.rows()},
          {"frames", spec.values.cols()},
          {"frame_length", spec.grid.frame_length},
          {"hop", spec.grid.hop},
          {"eps", spec.eps},
          {"bank", spec.bank_descriptor}};
}

}  // namespace fbsp
