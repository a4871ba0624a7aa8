#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fbsp/matrix.hpp"

namespace fbsp {

/// Mono sample buffer. Samples are finite and the sample rate is positive;
/// both are checked on construction.
class Waveform {
 public:
  Waveform() = default;
  Waveform(std::vector<double> samples, int sample_rate);

  std::span<const double> samples() const { return samples_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t size() const { return samples_.size(); }
  double duration() const {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }

  bool operator==(const Waveform&) const = default;

 private:
  std::vector<double> samples_;
  int sample_rate_ = 1;
};

enum class Padding { none, zero_to_frame };

struct FrameGrid {
  std::size_t frame_length = 1024;
  std::size_t hop = 256;
  Padding padding = Padding::none;

  void validate() const;
  /// floor((len - N) / hop) + 1 when len >= N, else 0. Padding is applied
  /// by frame() before this count is taken.
  std::size_t num_frames(std::size_t signal_length) const;
};

enum class WindowKind { rectangular, hann };

struct WindowSpec {
  WindowKind kind = WindowKind::hann;
  std::size_t length = 1024;

  /// Periodic Hann: w[n] = 0.5 - 0.5 cos(2 pi n / N).
  std::vector<double> values() const;
};

std::string to_string(WindowKind kind);
WindowKind window_kind_from_string(const std::string& name);

enum class SignalKind { sine, chirp, band_noise, silence };

std::string to_string(SignalKind kind);
SignalKind signal_kind_from_string(const std::string& name);

/// Parameters for the synthetic generators. Frequencies in Hz.
/// sine: frequency. chirp: linear sweep frequency -> frequency_end.
/// band_noise: random-phase partials spread over [frequency, frequency_end].
struct GeneratorConfig {
  SignalKind kind = SignalKind::sine;
  double frequency = 440.0;
  double frequency_end = 880.0;
  double amplitude = 0.5;
  std::size_t partials = 64;
};

Waveform generate(const GeneratorConfig& config, double duration,
                  int sample_rate, std::uint64_t seed);

/// Windowed frames, T x N. Frame t, tap n is x[t*hop + n] * w[n].
RealMatrix frame(const Waveform& signal, const FrameGrid& grid,
                 const WindowSpec& window);

/// Sum of squares.
double energy(std::span<const double> samples);
/// Mean of squares.
double mean_power(std::span<const double> samples);

}  // namespace fbsp
