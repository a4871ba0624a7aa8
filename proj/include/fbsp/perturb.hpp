#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "fbsp/signal.hpp"

namespace fbsp {

struct TrainedModel;
struct LabeledClip;

/// Adds zero-mean Gaussian noise with variance P_signal / 10^(snr_db/10),
/// P_signal being the mean squared sample of the whole clip. snr_db = +inf
/// returns the input unchanged. No clipping is applied.
Waveform add_awgn(const Waveform& signal, double snr_db, std::uint64_t seed);

/// One biquad (or first-order when b2 = a2 = 0), a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

struct ButterworthFilter {
  std::vector<Biquad> sections;
  int order = 0;
  double cutoff = 0.0;  // Hz
  int sample_rate = 0;  // Hz

  /// |H(e^{i w})| at a frequency in Hz.
  double magnitude(double freq_hz) const;
  /// Poles of every section (z-plane).
  std::vector<std::complex<double>> poles() const;
};

/// Analog Butterworth prototype, bilinear transform with cutoff pre-warping,
/// cascaded sections each normalized to unit DC gain.
ButterworthFilter design_butterworth_lowpass(int order, double cutoff_hz,
                                             int sample_rate);

/// Causal, zero-initial-state cascade. Output length equals input length.
Waveform apply_filter(const ButterworthFilter& filter, const Waveform& signal);

enum class PerturbKind { awgn, lowpass };

std::string to_string(PerturbKind kind);
PerturbKind perturb_kind_from_string(const std::string& name);

struct SweepResult {
  PerturbKind kind = PerturbKind::awgn;
  std::vector<double> axis;
  std::vector<double> accuracy;
  std::vector<double> spectro_snr;
  std::string bank_label;
};

inline constexpr int kSweepFilterOrder = 5;

/// Perturbs every clip at every axis point (seed derived from
/// (seed, axis index, clip index)), classifies with the frozen model and
/// records accuracy and spectrogram-domain SNR. Lowpass cutoffs at or above
/// Nyquist pass the clip through unchanged.
SweepResult robustness_sweep(PerturbKind kind, const std::vector<double>& axis,
                             const TrainedModel& model,
                             const std::vector<LabeledClip>& clips,
                             std::uint64_t seed, std::string bank_label);

/// CSV: axis_value, accuracy, spectro_snr_db, bank_label.
std::string to_csv(const SweepResult& result);

/// Default axes: SNR {inf, 30, 25, 20, 15, 10, 5, 0} dB; cutoffs
/// {Nyquist, 16k, 8k, 4k, 2k, 1k} Hz scaled by sample_rate / 44100.
std::vector<double> default_snr_axis();
std::vector<double> default_cutoff_axis(int sample_rate);

}  // namespace fbsp
