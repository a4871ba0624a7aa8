#include "fbsp/perturb.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "fbsp/error.hpp"
#include "fbsp/io.hpp"
#include "fbsp/rng.hpp"
#include "fbsp/trainer.hpp"
#include "fbsp/transform.hpp"

namespace fbsp {

Waveform add_awgn(const Waveform& signal, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return signal;
  if (!std::isfinite(snr_db)) throw ValidationError("snr_db must be finite or +inf");
  const double p_signal = mean_power(signal.samples());
  if (p_signal == 0.0) {
    throw ValidationError("signal has zero power; SNR is undefined");
  }
  const double sigma = std::sqrt(p_signal / std::pow(10.0, snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> out(signal.samples().begin(), signal.samples().end());
  for (double& s : out) s += noise(rng);
  return Waveform(std::move(out), signal.sample_rate());
}

double ButterworthFilter::magnitude(double freq_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h{1.0, 0.0};
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return std::abs(h);
}

std::vector<std::complex<double>> ButterworthFilter::poles() const {
  std::vector<std::complex<double>> out;
  for (const auto& s : sections) {
    if (s.a2 == 0.0) {
      out.emplace_back(-s.a1, 0.0);
      continue;
    }
    // z^2 + a1 z + a2 = 0
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
    out.push_back((-s.a1 + disc) / 2.0);
    out.push_back((-s.a1 - disc) / 2.0);
  }
  return out;
}

ButterworthFilter design_butterworth_lowpass(int order, double cutoff_hz,
                                             int sample_rate) {
  if (order < 1) throw ValidationError("filter order must be >= 1");
  if (sample_rate <= 0) throw ValidationError("sample_rate must be positive");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= sample_rate / 2.0) {
    throw ValidationError("cutoff " + format_real(cutoff_hz) +
                          " Hz must lie strictly between 0 and Nyquist");
  }
  ButterworthFilter filter;
  filter.order = order;
  filter.cutoff = cutoff_hz;
  filter.sample_rate = sample_rate;

  // Pre-warped analog cutoff with the bilinear map s = (z - 1) / (z + 1).
  const double warped = std::tan(std::numbers::pi * cutoff_hz / sample_rate);
  auto to_z = [&](std::complex<double> p) {
    const std::complex<double> s = warped * p;
    return (1.0 + s) / (1.0 - s);
  };

  // Upper-half-plane prototype poles pair with their conjugates.
  for (int k = 0; k < order / 2; ++k) {
    const double theta =
        std::numbers::pi * (2.0 * k + order + 1.0) / (2.0 * order);
    const auto z = to_z(std::polar(1.0, theta));
    Biquad s;
    s.a1 = -2.0 * z.real();
    s.a2 = std::norm(z);
    const double gain = (1.0 + s.a1 + s.a2) / 4.0;
    s.b0 = gain;
    s.b1 = 2.0 * gain;
    s.b2 = gain;
    filter.sections.push_back(s);
  }
  if (order % 2 == 1) {
    const auto z = to_z({-1.0, 0.0});
    Biquad s;
    s.a1 = -z.real();
    const double gain = (1.0 + s.a1) / 2.0;
    s.b0 = gain;
    s.b1 = gain;
    filter.sections.push_back(s);
  }
  return filter;
}

Waveform apply_filter(const ButterworthFilter& filter, const Waveform& signal) {
  if (filter.sample_rate != signal.sample_rate()) {
    throw ValidationError("filter designed for " + std::to_string(filter.sample_rate) +
                          " Hz applied to a " + std::to_string(signal.sample_rate()) +
                          " Hz signal");
  }
  std::vector<double> y(signal.samples().begin(), signal.samples().end());
  for (const auto& s : filter.sections) {
    // Transposed direct form II.
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return Waveform(std::move(y), signal.sample_rate());
}

std::string to_string(PerturbKind kind) {
  return kind == PerturbKind::awgn ? "awgn" : "lowpass";
}

PerturbKind perturb_kind_from_string(const std::string& name) {
  if (name == "awgn") return PerturbKind::awgn;
  if (name == "lowpass") return PerturbKind::lowpass;
  throw ValidationError("unknown perturbation '" + name + "'");
}

SweepResult robustness_sweep(PerturbKind kind, const std::vector<double>& axis,
                             const TrainedModel& model,
                             const std::vector<LabeledClip>& clips,
                             std::uint64_t seed, std::string bank_label) {
  if (axis.empty()) throw ValidationError("sweep axis is empty");
  if (clips.empty()) throw ValidationError("sweep needs at least one clip");
  SweepResult result;
  result.kind = kind;
  result.axis = axis;
  result.bank_label = std::move(bank_label);

  const KernelBank bank = fbsp_kernel(model.params);
  std::vector<Spectrogram> clean;
  clean.reserve(clips.size());
  for (const auto& clip : clips) clean.push_back(model.features.spectrogram(clip.wave, bank));

  for (std::size_t i = 0; i < axis.size(); ++i) {
    std::size_t correct = 0;
    double signal_power = 0.0, residual = 0.0;
    for (std::size_t j = 0; j < clips.size(); ++j) {
      const Waveform& x = clips[j].wave;
      Waveform perturbed;
      if (kind == PerturbKind::awgn) {
        perturbed = add_awgn(x, axis[i], derive_seed(seed, {i, j}));
      } else if (axis[i] >= x.sample_rate() / 2.0) {
        perturbed = x;
      } else {
        perturbed = apply_filter(
            design_butterworth_lowpass(kSweepFilterOrder, axis[i], x.sample_rate()), x);
      }
      const Spectrogram noisy = model.features.spectrogram(perturbed, bank);
      if (model.classify(model.features.pool(noisy)) == clips[j].label) ++correct;
      for (std::size_t e = 0; e < noisy.power.data().size(); ++e) {
        signal_power += clean[j].power.data()[e];
        residual += std::abs(noisy.power.data()[e] - clean[j].power.data()[e]);
      }
    }
    result.accuracy.push_back(static_cast<double>(correct) / clips.size());
    result.spectro_snr.push_back(residual == 0.0
                                     ? std::numeric_limits<double>::infinity()
                                     : 10.0 * std::log10(signal_power / residual));
  }
  return result;
}

std::string to_csv(const SweepResult& result) {
  std::ostringstream os;
  os << "axis_value,accuracy,spectro_snr_db,bank_label\n";
  for (std::size_t i = 0; i < result.axis.size(); ++i) {
    os << format_real(result.axis[i]) << ',' << format_real(result.accuracy[i]) << ','
       << format_real(result.spectro_snr[i]) << ',' << result.bank_label << '\n';
  }
  return os.str();
}

std::vector<double> default_snr_axis() {
  return {std::numeric_limits<double>::infinity(), 30, 25, 20, 15, 10, 5, 0};
}

std::vector<double> default_cutoff_axis(int sample_rate) {
  const double scale = sample_rate / 44100.0;
  std::vector<double> axis{sample_rate / 2.0};
  for (double c : {16000.0, 8000.0, 4000.0, 2000.0, 1000.0}) axis.push_back(c * scale);
  return axis;
}

}  // namespace fbsp
