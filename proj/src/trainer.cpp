#include "fbsp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fbsp/error.hpp"
#include "fbsp/io.hpp"
#include "fbsp/perturb.hpp"
#include "fbsp/rng.hpp"

namespace fbsp {

namespace {

constexpr int kMaxStepHalvings = 20;
constexpr double kMinBandwidth = 1e-6;

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(logits[c] - top);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

// Gradient as [m, f_b, f_c...].
std::vector<double> flatten(const ParamGradient& g) {
  std::vector<double> v{g.d_m, g.d_fb};
  v.insert(v.end(), g.d_fc.begin(), g.d_fc.end());
  return v;
}

// Applies a step and projects onto m >= 0 and f_c in [0, 0.5]; nullopt when
// the result is still outside the trainable domain.
std::optional<FbspParams> propose(const FbspParams& base, std::span<const double> step,
                                  double scale) {
  FbspParams p = base;
  p.m = std::max(0.0, p.m - scale * step[0]);
  p.f_b -= scale * step[1];
  for (std::size_t k = 0; k < p.f_c.size(); ++k) {
    p.f_c[k] = std::clamp(p.f_c[k] - scale * step[2 + k], 0.0, 0.5);
  }
  if (!(p.f_b > kMinBandwidth)) return std::nullopt;
  for (std::size_t k = 1; k < p.f_c.size(); ++k) {
    if (!(p.f_c[k] > p.f_c[k - 1])) return std::nullopt;
  }
  if (in_exclusion_zone(p.m, p.f_b, p.n_fft)) return std::nullopt;
  return p;
}

}  // namespace

TaskConfig TaskConfig::three_class() {
  TaskConfig c;
  GeneratorConfig tone{SignalKind::sine, 600.0, 600.0, 0.5, 64};
  GeneratorConfig chirp{SignalKind::chirp, 300.0, 1500.0, 0.5, 64};
  GeneratorConfig noise{SignalKind::band_noise, 2000.0, 3200.0, 0.5, 64};
  c.classes = {{"tone", tone, 0.05}, {"chirp", chirp, 0.05}, {"noise", noise, 0.05}};
  return c;
}

void to_json(nlohmann::json& j, const TaskConfig& c) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& spec : c.classes) {
    classes.push_back({{"name", spec.name},
                       {"kind", to_string(spec.generator.kind)},
                       {"frequency", spec.generator.frequency},
                       {"frequency_end", spec.generator.frequency_end},
                       {"amplitude", spec.generator.amplitude},
                       {"partials", spec.generator.partials},
                       {"jitter", spec.jitter}});
  }
  j = nlohmann::json{{"classes", classes},
                     {"samples_per_class", c.samples_per_class},
                     {"duration", c.duration},
                     {"sample_rate", c.sample_rate},
                     {"seed", c.seed}};
  if (c.snr_range) {
    j["snr_range"] = {c.snr_range->first, c.snr_range->second};
  } else {
    j["snr_range"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, TaskConfig& c) {
  reject_unknown_keys(j, {"classes", "samples_per_class", "duration", "sample_rate",
                          "snr_range", "seed"},
                      "task");
  c = TaskConfig::three_class();
  if (j.contains("classes")) {
    c.classes.clear();
    for (const auto& item : j.at("classes")) {
      reject_unknown_keys(item, {"name", "kind", "frequency", "frequency_end", "amplitude",
                                 "partials", "jitter"},
                          "task.classes[]");
      ClassSpec spec;
      spec.name = require<std::string>(item, "name");
      spec.generator.kind = signal_kind_from_string(require<std::string>(item, "kind"));
      spec.generator.frequency = item.value("frequency", spec.generator.frequency);
      spec.generator.frequency_end = item.value("frequency_end", spec.generator.frequency_end);
      spec.generator.amplitude = item.value("amplitude", spec.generator.amplitude);
      spec.generator.partials = item.value("partials", spec.generator.partials);
      spec.jitter = item.value("jitter", spec.jitter);
      c.classes.push_back(spec);
    }
  }
  c.samples_per_class = j.value("samples_per_class", c.samples_per_class);
  c.duration = j.value("duration", c.duration);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.seed = j.value("seed", c.seed);
  if (j.contains("snr_range")) {
    if (j.at("snr_range").is_null()) {
      c.snr_range.reset();
    } else {
      const auto r = j.at("snr_range").get<std::vector<double>>();
      if (r.size() != 2 || r[0] > r[1]) throw ValidationError("snr_range needs [lo, hi]");
      c.snr_range = std::make_pair(r[0], r[1]);
    }
  }
}

Corpus make_task(const TaskConfig& config) {
  if (config.classes.size() < 2) throw ValidationError("the task needs at least 2 classes");
  if (config.samples_per_class == 0) throw ValidationError("samples_per_class must be > 0");
  const double nyquist = config.sample_rate / 2.0;
  for (const auto& spec : config.classes) {
    const auto& g = spec.generator;
    double top = g.frequency;
    if (g.kind != SignalKind::sine) top = std::max(top, g.frequency_end);
    if (g.kind != SignalKind::silence && top * (1.0 + spec.jitter) >= nyquist) {
      throw ValidationError("class '" + spec.name + "' reaches " +
                            format_real(top * (1.0 + spec.jitter)) +
                            " Hz, not below the Nyquist frequency " + format_real(nyquist));
    }
  }

  Corpus corpus;
  std::vector<LabeledClip> all;
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    const auto& spec = config.classes[c];
    corpus.class_names.push_back(spec.name);
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      const std::uint64_t seed = derive_seed(config.seed, {c, i});
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      GeneratorConfig g = spec.generator;
      const double jitter = 1.0 + spec.jitter * unit(rng);
      g.frequency *= jitter;
      g.frequency_end *= jitter;
      g.amplitude = std::uniform_real_distribution<double>(0.3, 0.9)(rng);
      Waveform wave = generate(g, config.duration, config.sample_rate, seed);
      if (config.snr_range && mean_power(wave.samples()) > 0.0) {
        const double snr = std::uniform_real_distribution<double>(
            config.snr_range->first, config.snr_range->second)(rng);
        wave = add_awgn(wave, snr, derive_seed(seed, {1}));
      }
      all.push_back({std::move(wave), static_cast<int>(c)});
    }
  }

  std::mt19937_64 rng(derive_seed(config.seed, {0x5EEDull}));
  std::shuffle(all.begin(), all.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * all.size()));
  corpus.train.assign(std::make_move_iterator(all.begin()),
                      std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)));
  corpus.validation.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)),
                           std::make_move_iterator(all.end()));
  return corpus;
}

Spectrogram FeatureConfig::spectrogram(const Waveform& signal, const KernelBank& bank) const {
  return log_power(analyze(signal, bank, grid, window), eps, grid, bank.descriptor());
}

std::vector<double> FeatureConfig::pool(const Spectrogram& spec) const {
  const std::size_t F = spec.values.rows();
  const std::size_t T = spec.values.cols();
  std::vector<double> out(F, 0.0);
  for (std::size_t k = 0; k < F; ++k) {
    double acc = 0.0;
    for (double v : spec.values.row(k)) acc += v;
    out[k] = T ? acc / static_cast<double>(T) : 0.0;
  }
  return out;
}

std::vector<double> FeatureConfig::features(const Waveform& signal,
                                            const KernelBank& bank) const {
  return pool(spectrogram(signal, bank));
}

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = nlohmann::json{{"frame_length", c.grid.frame_length},
                     {"hop", c.grid.hop},
                     {"pad", c.grid.padding == Padding::zero_to_frame},
                     {"window", to_string(c.window.kind)},
                     {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  reject_unknown_keys(j, {"frame_length", "hop", "pad", "window", "eps"}, "features");
  c = FeatureConfig{};
  c.grid.frame_length = j.value("frame_length", c.grid.frame_length);
  c.grid.hop = j.value("hop", c.grid.hop);
  c.grid.padding = j.value("pad", true) ? Padding::zero_to_frame : Padding::none;
  c.window.kind = window_kind_from_string(j.value("window", std::string("hann")));
  c.window.length = c.grid.frame_length;
  c.eps = j.value("eps", c.eps);
  c.grid.validate();
  if (!(c.eps > 0.0)) throw ValidationError("eps must be positive");
}

std::vector<double> LinearHead::logits(std::span<const double> features) const {
  std::vector<double> out(bias);
  for (std::size_t c = 0; c < weights.rows(); ++c) {
    const auto w = weights.row(c);
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      acc += w[k] * (features[k] - mean[k]) / scale[k];
    }
    out[c] += acc;
  }
  return out;
}

void to_json(nlohmann::json& j, const LinearHead& h) {
  std::vector<std::vector<double>> rows;
  for (std::size_t c = 0; c < h.weights.rows(); ++c) {
    rows.emplace_back(h.weights.row(c).begin(), h.weights.row(c).end());
  }
  j = nlohmann::json{{"weights", rows}, {"bias", h.bias}, {"mean", h.mean}, {"scale", h.scale}};
}

void from_json(const nlohmann::json& j, LinearHead& h) {
  reject_unknown_keys(j, {"weights", "bias", "mean", "scale"}, "head");
  const auto rows = require<std::vector<std::vector<double>>>(j, "weights");
  h.bias = require<std::vector<double>>(j, "bias");
  h.mean = require<std::vector<double>>(j, "mean");
  h.scale = require<std::vector<double>>(j, "scale");
  const std::size_t F = h.mean.size();
  if (rows.size() != h.bias.size() || h.scale.size() != F) {
    throw ValidationError("head shapes are inconsistent");
  }
  h.weights = RealMatrix(rows.size(), F);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    if (rows[c].size() != F) throw ValidationError("head weight row has wrong length");
    std::copy(rows[c].begin(), rows[c].end(), h.weights.row(c).begin());
  }
}

int TrainedModel::classify(std::span<const double> pooled) const {
  const auto z = head.logits(pooled);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

int TrainedModel::predict(const Waveform& signal) const {
  return classify(features.features(signal, fbsp_kernel(params)));
}

double accuracy(const TrainedModel& model, std::span<const LabeledClip> clips) {
  if (clips.empty()) return 0.0;
  const KernelBank bank = fbsp_kernel(model.params);
  std::size_t correct = 0;
  for (const auto& clip : clips) {
    if (model.classify(model.features.features(clip.wave, bank)) == clip.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(clips.size());
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ValidationError("lr_decay must lie in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(lambda_fbsp >= 0.0)) throw ValidationError("lambda_fbsp must be >= 0");
  if (freeze_epochs < 0) throw ValidationError("freeze_epochs must be >= 0");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (augment) augment->validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"lr", c.lr},
                     {"lr_decay", c.lr_decay},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"lambda_fbsp", c.lambda_fbsp},
                     {"freeze_epochs", c.freeze_epochs},
                     {"seed", c.seed},
                     {"batch_size", c.batch_size}};
  j["augment"] = c.augment ? nlohmann::json(*c.augment) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown_keys(j, {"epochs", "lr", "lr_decay", "momentum", "weight_decay", "lambda_fbsp",
                          "freeze_epochs", "seed", "batch_size", "augment"},
                      "train");
  c = TrainConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lambda_fbsp = j.value("lambda_fbsp", c.lambda_fbsp);
  c.freeze_epochs = j.value("freeze_epochs", c.freeze_epochs);
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("augment") && !j.at("augment").is_null()) {
    c.augment = j.at("augment").get<AugmentConfig>();
  }
  c.validate();
}

std::string to_csv(const TrainLog& log) {
  std::ostringstream os;
  os << "epoch,total_loss,task_loss,fbsp_loss,accuracy,m,f_b\n";
  for (const auto& r : log.epochs) {
    os << r.epoch << ',' << format_real(r.total_loss) << ',' << format_real(r.task_loss) << ','
       << format_real(r.fbsp_loss) << ',' << format_real(r.accuracy) << ','
       << format_real(r.m) << ',' << format_real(r.f_b) << '\n';
  }
  return os.str();
}

PipelineGradient pipeline_gradient(const TrainedModel& model,
                                   std::span<const LabeledClip> batch,
                                   double lambda_fbsp, bool with_param_gradient) {
  if (batch.empty()) throw ValidationError("empty batch");
  const KernelBank bank = fbsp_kernel(model.params);
  const auto& head = model.head;
  const std::size_t F = bank.filters();
  const std::size_t N = bank.taps();
  const std::size_t C = head.weights.rows();
  if (head.weights.cols() != F) throw ValidationError("head width does not match the bank");
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  PipelineGradient out;
  out.d_weights = RealMatrix(C, F);
  out.d_bias.assign(C, 0.0);
  ComplexMatrix kernel_cotangent;
  if (with_param_gradient) kernel_cotangent = ComplexMatrix(F, N);

  std::vector<double> z(F), d_feature(F);
  for (const auto& clip : batch) {
    const RealMatrix frames = frame(clip.wave, model.features.grid, model.features.window);
    const ComplexMatrix X = analyze_frames(frames, bank);
    const std::size_t T = X.cols();
    if (T == 0) throw ValidationError("clip produces no frames");

    std::vector<double> pooled(F, 0.0);
    for (std::size_t k = 0; k < F; ++k) {
      double acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += std::log(std::norm(X(k, t)) + model.features.eps);
      pooled[k] = acc / static_cast<double>(T);
      z[k] = (pooled[k] - head.mean[k]) / head.scale[k];
    }
    const auto logits = head.logits(pooled);
    const auto p = softmax(logits);
    const auto label = static_cast<std::size_t>(clip.label);
    out.task_loss += -std::log(std::max(p[label], std::numeric_limits<double>::min())) * inv_b;

    std::fill(d_feature.begin(), d_feature.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const double d_logit = (p[c] - (c == label ? 1.0 : 0.0)) * inv_b;
      out.d_bias[c] += d_logit;
      const auto w = head.weights.row(c);
      auto dw = out.d_weights.row(c);
      for (std::size_t k = 0; k < F; ++k) {
        dw[k] += d_logit * z[k];
        d_feature[k] += d_logit * w[k];
      }
    }
    if (!with_param_gradient) continue;

    // dl/dX = 2 X dl/dP with P = |X|^2, then pulled back through the frames.
    for (std::size_t k = 0; k < F; ++k) {
      const double d_pool = d_feature[k] / head.scale[k] / static_cast<double>(T);
      auto G = kernel_cotangent.row(k);
      for (std::size_t t = 0; t < T; ++t) {
        const cplx x = X(k, t);
        const cplx g_x = 2.0 * d_pool / (std::norm(x) + model.features.eps) * x;
        const auto fr = frames.row(t);
        for (std::size_t n = 0; n < N; ++n) G[n] += g_x * fr[n];
      }
    }
  }

  out.fbsp_loss = fbsp_loss(bank);
  out.total_loss = out.task_loss + lambda_fbsp * out.fbsp_loss;
  if (with_param_gradient) {
    out.params = kernel_jacobian_vector(model.params, kernel_cotangent);
    if (lambda_fbsp != 0.0) {
      const auto reg = loss_gradient(model.params);
      out.params.d_m += lambda_fbsp * reg.d_m;
      out.params.d_fb += lambda_fbsp * reg.d_fb;
      for (std::size_t k = 0; k < F; ++k) out.params.d_fc[k] += lambda_fbsp * reg.d_fc[k];
    }
  } else {
    out.params.d_fc.assign(F, 0.0);
  }
  return out;
}

void fit_standardizer(LinearHead& head, const FeatureConfig& features,
                      const KernelBank& bank, std::span<const LabeledClip> clips) {
  const std::size_t F = bank.filters();
  head.mean.assign(F, 0.0);
  head.scale.assign(F, 1.0);
  if (clips.empty()) return;
  std::vector<std::vector<double>> all;
  all.reserve(clips.size());
  for (const auto& clip : clips) all.push_back(features.features(clip.wave, bank));
  const double count = static_cast<double>(all.size());
  for (std::size_t k = 0; k < F; ++k) {
    double mean = 0.0;
    for (const auto& f : all) mean += f[k];
    mean /= count;
    double var = 0.0;
    for (const auto& f : all) var += (f[k] - mean) * (f[k] - mean);
    head.mean[k] = mean;
    head.scale[k] = std::max(std::sqrt(var / count), 1e-6);
  }
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, const FbspParams& init,
                  const FeatureConfig& features) {
  config.validate();
  init.validate();
  if (corpus.train.empty()) throw ValidationError("training set is empty");
  if (features.grid.frame_length != init.n_fft) {
    throw ValidationError("frame length must equal the fbsp transform length");
  }

  TrainResult result;
  TrainedModel& model = result.model;
  model.params = init;
  model.features = features;
  const std::size_t classes = corpus.class_names.empty()
                                  ? static_cast<std::size_t>(std::max_element(
                                        corpus.train.begin(), corpus.train.end(),
                                        [](const auto& a, const auto& b) { return a.label < b.label; })
                                        ->label) + 1
                                  : corpus.class_names.size();
  const std::size_t F = init.f_c.size();
  model.head.weights = RealMatrix(classes, F);
  model.head.bias.assign(classes, 0.0);
  fit_standardizer(model.head, features, fbsp_kernel(init), corpus.train);

  const std::size_t P = 2 + F;
  std::vector<double> v_weights(classes * F, 0.0), v_bias(classes, 0.0), v_params(P, 0.0);
  const double mu = config.momentum;

  // Nesterov: v <- mu v + g; step = g + mu v.
  auto nesterov = [mu](double g, double& v) {
    v = mu * v + g;
    return g + mu * v;
  };

  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& evaluation = corpus.validation.empty() ? corpus.train : corpus.validation;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr * std::pow(config.lr_decay, epoch - 1);
    const bool unfrozen = epoch > config.freeze_epochs;
    std::mt19937_64 rng(derive_seed(config.seed, {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0, task = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<LabeledClip> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        LabeledClip clip = corpus.train[order[i]];
        if (config.augment) {
          AugmentConfig aug = *config.augment;
          aug.seed = derive_seed(aug.seed, {static_cast<std::uint64_t>(epoch), order[i]});
          clip.wave = augment_pipeline(clip.wave, aug);
        }
        batch.push_back(std::move(clip));
      }

      const auto grad = pipeline_gradient(model, batch, config.lambda_fbsp, unfrozen);
      if (!std::isfinite(grad.total_loss)) {
        result.diverged = true;
        result.message = "non-finite loss at epoch " + std::to_string(epoch);
        return result;
      }
      total += grad.total_loss;
      task += grad.task_loss;
      ++batches;

      for (std::size_t c = 0; c < classes; ++c) {
        auto w = model.head.weights.row(c);
        const auto dw = grad.d_weights.row(c);
        for (std::size_t k = 0; k < F; ++k) {
          const double g = dw[k] + config.weight_decay * w[k];
          w[k] -= lr * nesterov(g, v_weights[c * F + k]);
        }
        model.head.bias[c] -= lr * nesterov(grad.d_bias[c], v_bias[c]);
      }

      if (unfrozen) {
        const auto g = flatten(grad.params);
        std::vector<double> step(P);
        for (std::size_t i = 0; i < P; ++i) step[i] = nesterov(g[i], v_params[i]);
        double scale = lr;
        bool accepted = false;
        for (int halving = 0; halving <= kMaxStepHalvings; ++halving, scale *= 0.5) {
          if (auto next = propose(model.params, step, scale)) {
            model.params = std::move(*next);
            accepted = true;
            if (halving > 0) ++result.halved_updates;
            break;
          }
        }
        if (!accepted) {
          // The velocity points out of the domain; keeping it would only
          // make every later proposal worse.
          ++result.skipped_updates;
          std::fill(v_params.begin(), v_params.end(), 0.0);
        }
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.total_loss = total / static_cast<double>(batches);
    record.task_loss = task / static_cast<double>(batches);
    record.fbsp_loss = fbsp_loss(fbsp_kernel(model.params));
    record.accuracy = accuracy(model, evaluation);
    record.m = model.params.m;
    record.f_b = model.params.f_b;
    const auto values = {record.total_loss, record.task_loss, record.fbsp_loss, record.m, record.f_b};
    if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
      result.diverged = true;
      result.message = "non-finite state after epoch " + std::to_string(epoch);
      return result;
    }
    result.log.epochs.push_back(record);
  }
  return result;
}

}  // namespace fbsp
