#pragma once

#include <cstddef>
#include <cstdint>

#include <json.hpp>

#include "fbsp/signal.hpp"

namespace fbsp {

/// Resamples by linear interpolation: output length round(len / factor),
/// sample j taken at input position j * factor. The sample rate is kept, so
/// pitch shifts together with duration.
Waveform time_scale(const Waveform& signal, double factor);

Waveform time_invert(const Waveform& signal);

enum class FitMode { random, center };

/// Crops or zero-pads to exactly round(target * sample_rate) samples.
Waveform fit_duration(const Waveform& signal, double target_seconds, FitMode mode,
                      std::uint64_t seed);

/// Crop offset (longer input) or left padding (shorter input) used by
/// fit_duration.
struct FitPlan {
  std::size_t crop_offset = 0;
  std::size_t pad_left = 0;
  std::size_t target = 0;
};
FitPlan plan_fit(std::size_t length, std::size_t target, FitMode mode,
                 std::uint64_t seed);

struct AugmentConfig {
  double scale_exponent_lo = -1.5;
  double scale_exponent_hi = 1.5;
  double invert_prob = 0.5;
  double target_duration = 5.0;
  std::uint64_t seed = 0;
  bool eval_mode = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

/// Random choices of one pipeline run. factor = 2^u, u ~ U[lo, hi].
struct AugmentDraw {
  double factor = 1.0;
  bool invert = false;
  std::uint64_t fit_seed = 0;
};

AugmentDraw draw_augment(const AugmentConfig& config);

/// scale -> invert -> fit_duration. In eval mode: center fit only.
Waveform augment_pipeline(const Waveform& signal, const AugmentConfig& config);

}  // namespace fbsp
