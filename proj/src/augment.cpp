#include "fbsp/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fbsp/error.hpp"
#include "fbsp/io.hpp"
#include "fbsp/rng.hpp"

namespace fbsp {

Waveform time_scale(const Waveform& signal, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ValidationError("time-scale factor must be positive");
  }
  const auto x = signal.samples();
  const auto length = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) / factor));
  if (length == 0) {
    throw ValidationError("time-scale factor " + format_real(factor) +
                          " leaves no samples");
  }
  std::vector<double> out(length);
  const std::size_t last = x.size() - 1;
  for (std::size_t j = 0; j < length; ++j) {
    const double pos = static_cast<double>(j) * factor;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i >= last) {
      out[j] = x[last];
    } else if (frac == 0.0) {
      out[j] = x[i];
    } else {
      out[j] = x[i] + frac * (x[i + 1] - x[i]);
    }
  }
  return Waveform(std::move(out), signal.sample_rate());
}

Waveform time_invert(const Waveform& signal) {
  std::vector<double> out(signal.samples().rbegin(), signal.samples().rend());
  return Waveform(std::move(out), signal.sample_rate());
}

FitPlan plan_fit(std::size_t length, std::size_t target, FitMode mode,
                 std::uint64_t seed) {
  FitPlan plan;
  plan.target = target;
  if (length == target) return plan;
  const std::size_t slack = length > target ? length - target : target - length;
  std::size_t offset = slack / 2;
  if (mode == FitMode::random) {
    std::mt19937_64 rng(seed);
    offset = std::uniform_int_distribution<std::size_t>(0, slack)(rng);
  }
  if (length > target) {
    plan.crop_offset = offset;
  } else {
    plan.pad_left = offset;
  }
  return plan;
}

Waveform fit_duration(const Waveform& signal, double target_seconds, FitMode mode,
                      std::uint64_t seed) {
  if (!(target_seconds > 0.0)) throw ValidationError("target duration must be positive");
  const auto target = static_cast<std::size_t>(
      std::llround(target_seconds * signal.sample_rate()));
  const auto x = signal.samples();
  const FitPlan plan = plan_fit(x.size(), target, mode, seed);
  std::vector<double> out(target, 0.0);
  if (x.size() >= target) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(plan.crop_offset), target,
                out.begin());
  } else {
    std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(plan.pad_left));
  }
  return Waveform(std::move(out), signal.sample_rate());
}

void AugmentConfig::validate() const {
  if (!(scale_exponent_lo <= scale_exponent_hi)) {
    throw ValidationError("scale exponent range must satisfy lo <= hi");
  }
  if (!(invert_prob >= 0.0 && invert_prob <= 1.0)) {
    throw ValidationError("invert_prob must lie in [0, 1]");
  }
  if (!(target_duration > 0.0)) throw ValidationError("target_duration must be positive");
}

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = nlohmann::json{{"scale_exponent_range", {c.scale_exponent_lo, c.scale_exponent_hi}},
                     {"invert_prob", c.invert_prob},
                     {"target_duration", c.target_duration},
                     {"seed", c.seed},
                     {"eval_mode", c.eval_mode}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  reject_unknown_keys(j, {"scale_exponent_range", "invert_prob", "target_duration", "seed",
                          "eval_mode"},
                      "augment");
  c = AugmentConfig{};
  if (j.contains("scale_exponent_range")) {
    const auto r = j.at("scale_exponent_range").get<std::vector<double>>();
    if (r.size() != 2) throw ValidationError("scale_exponent_range needs [lo, hi]");
    c.scale_exponent_lo = r[0];
    c.scale_exponent_hi = r[1];
  }
  c.invert_prob = j.value("invert_prob", c.invert_prob);
  c.target_duration = j.value("target_duration", c.target_duration);
  c.seed = j.value("seed", c.seed);
  c.eval_mode = j.value("eval_mode", c.eval_mode);
  c.validate();
}

AugmentDraw draw_augment(const AugmentConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  AugmentDraw draw;
  const double u = std::uniform_real_distribution<double>(config.scale_exponent_lo,
                                                          config.scale_exponent_hi)(rng);
  draw.factor = std::exp2(u);
  draw.invert = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.invert_prob;
  draw.fit_seed = derive_seed(config.seed, {1});
  return draw;
}

Waveform augment_pipeline(const Waveform& signal, const AugmentConfig& config) {
  config.validate();
  if (config.eval_mode) {
    return fit_duration(signal, config.target_duration, FitMode::center, 0);
  }
  const AugmentDraw draw = draw_augment(config);
  Waveform out = time_scale(signal, draw.factor);
  if (draw.invert) out = time_invert(out);
  return fit_duration(out, config.target_duration, FitMode::random, draw.fit_seed);
}

}  // namespace fbsp
