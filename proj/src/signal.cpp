#include "fbsp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fbsp/error.hpp"

namespace fbsp {

Waveform::Waveform(std::vector<double> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (sample_rate_ <= 0) {
    throw ValidationError("sample_rate must be positive");
  }
  for (double s : samples_) {
    if (!std::isfinite(s)) {
      throw ValidationError("waveform contains a non-finite sample");
    }
  }
}

void FrameGrid::validate() const {
  if (frame_length == 0) throw ValidationError("frame_length must be positive");
  if (hop == 0 || hop > frame_length) {
    throw ValidationError("hop must satisfy 0 < hop <= frame_length");
  }
}

std::size_t FrameGrid::num_frames(std::size_t signal_length) const {
  if (signal_length < frame_length) return 0;
  return (signal_length - frame_length) / hop + 1;
}

std::vector<double> WindowSpec::values() const {
  if (length == 0) throw ValidationError("window length must be positive");
  std::vector<double> w(length, 1.0);
  if (kind == WindowKind::hann) {
    const double step = 2.0 * std::numbers::pi / static_cast<double>(length);
    for (std::size_t n = 0; n < length; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(step * static_cast<double>(n));
    }
  }
  return w;
}

std::string to_string(WindowKind kind) {
  return kind == WindowKind::hann ? "hann" : "rectangular";
}

WindowKind window_kind_from_string(const std::string& name) {
  if (name == "hann") return WindowKind::hann;
  if (name == "rectangular") return WindowKind::rectangular;
  throw ValidationError("unknown window kind '" + name + "'");
}

std::string to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::sine: return "sine";
    case SignalKind::chirp: return "chirp";
    case SignalKind::band_noise: return "band_noise";
    case SignalKind::silence: return "silence";
  }
  return "?";
}

SignalKind signal_kind_from_string(const std::string& name) {
  if (name == "sine") return SignalKind::sine;
  if (name == "chirp") return SignalKind::chirp;
  if (name == "band_noise") return SignalKind::band_noise;
  if (name == "silence") return SignalKind::silence;
  throw ValidationError("unknown signal kind '" + name + "'");
}

Waveform generate(const GeneratorConfig& config, double duration,
                  int sample_rate, std::uint64_t seed) {
  if (!(duration > 0.0)) throw ValidationError("duration must be positive");
  if (sample_rate <= 0) throw ValidationError("sample_rate must be positive");
  if (!(config.amplitude >= 0.0 && config.amplitude <= 1.0)) {
    throw ValidationError("amplitude must lie in [0, 1]");
  }
  const double nyquist = sample_rate / 2.0;
  const auto check_freq = [&](double f, const char* what) {
    if (!(f >= 0.0) || f >= nyquist) {
      throw ValidationError(std::string(what) + " " + std::to_string(f) +
                            " Hz is not below the Nyquist frequency " +
                            std::to_string(nyquist) + " Hz");
    }
  };

  const auto count =
      static_cast<std::size_t>(std::llround(duration * sample_rate));
  std::vector<double> out(count, 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double fs = static_cast<double>(sample_rate);

  switch (config.kind) {
    case SignalKind::silence:
      break;
    case SignalKind::sine:
      check_freq(config.frequency, "frequency");
      for (std::size_t n = 0; n < count; ++n) {
        out[n] = config.amplitude *
                 std::sin(two_pi * config.frequency * static_cast<double>(n) / fs);
      }
      break;
    case SignalKind::chirp: {
      check_freq(config.frequency, "frequency");
      check_freq(config.frequency_end, "frequency_end");
      const double rate = (config.frequency_end - config.frequency) / duration;
      for (std::size_t n = 0; n < count; ++n) {
        const double t = static_cast<double>(n) / fs;
        out[n] = config.amplitude *
                 std::sin(two_pi * (config.frequency * t + 0.5 * rate * t * t));
      }
      break;
    }
    case SignalKind::band_noise: {
      check_freq(config.frequency, "frequency");
      check_freq(config.frequency_end, "frequency_end");
      if (config.frequency_end < config.frequency) {
        throw ValidationError("band_noise needs frequency <= frequency_end");
      }
      if (config.partials == 0) throw ValidationError("partials must be positive");
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::vector<double> freqs(config.partials), phases(config.partials);
      for (std::size_t p = 0; p < config.partials; ++p) {
        freqs[p] = config.frequency +
                   (config.frequency_end - config.frequency) * unit(rng);
        phases[p] = two_pi * unit(rng);
      }
      for (std::size_t n = 0; n < count; ++n) {
        const double t = static_cast<double>(n) / fs;
        double acc = 0.0;
        for (std::size_t p = 0; p < config.partials; ++p) {
          acc += std::sin(two_pi * freqs[p] * t + phases[p]);
        }
        out[n] = acc;
      }
      double peak = 0.0;
      for (double s : out) peak = std::max(peak, std::abs(s));
      if (peak > 0.0) {
        for (double& s : out) s *= config.amplitude / peak;
      }
      break;
    }
  }
  return Waveform(std::move(out), sample_rate);
}

RealMatrix frame(const Waveform& signal, const FrameGrid& grid,
                 const WindowSpec& window) {
  grid.validate();
  if (window.length != grid.frame_length) {
    throw ValidationError("window length does not match frame length");
  }
  auto x = signal.samples();
  std::vector<double> padded;
  if (x.size() < grid.frame_length) {
    if (grid.padding == Padding::none) {
      throw ValidationError("signal has " + std::to_string(x.size()) +
                            " samples, shorter than frame length " +
                            std::to_string(grid.frame_length));
    }
    padded.assign(x.begin(), x.end());
    padded.resize(grid.frame_length, 0.0);
    x = padded;
  }
  const auto w = window.values();
  const std::size_t frames = grid.num_frames(x.size());
  RealMatrix out(frames, grid.frame_length);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t offset = t * grid.hop;
    auto row = out.row(t);
    for (std::size_t n = 0; n < grid.frame_length; ++n) {
      row[n] = x[offset + n] * w[n];
    }
  }
  return out;
}

double energy(std::span<const double> samples) {
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc;
}

double mean_power(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  return energy(samples) / static_cast<double>(samples.size());
}

}  // namespace fbsp
