#pragma once

#include <string>

#include <json.hpp>

#include "fbsp/bank.hpp"
#include "fbsp/signal.hpp"

namespace fbsp {

inline constexpr double kLogPowerFloor = 1e-10;

struct Spectrogram {
  RealMatrix values;  // F x T, log(|X|^2 + eps)
  RealMatrix power;   // F x T, |X|^2
  FrameGrid grid;
  double eps = kLogPowerFloor;
  std::string bank_descriptor;
};

/// X[k][t] = sum_n x[t*hop + n] w[n] K_k[n]. Returns F x T.
ComplexMatrix analyze(const Waveform& signal, const KernelBank& bank,
                      const FrameGrid& grid, const WindowSpec& window);

/// Same product on already-windowed frames (T x N).
ComplexMatrix analyze_frames(const RealMatrix& frames, const KernelBank& bank);

Spectrogram log_power(const ComplexMatrix& X, double eps = kLogPowerFloor,
                      FrameGrid grid = {}, std::string bank_descriptor = {});

/// Spectrogram-domain SNR in dB on linear power:
/// 10 log10(sum P_clean / sum |P_noisy - P_clean|). +inf for equal inputs.
double bank_energy_ratio(const Spectrogram& clean, const Spectrogram& noisy);

/// Rows are filters, columns are frames.
std::string to_csv(const Spectrogram& spec);
nlohmann::json metadata(const Spectrogram& spec);

}  // namespace fbsp
