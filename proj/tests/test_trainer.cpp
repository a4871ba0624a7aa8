#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fbsp/error.hpp"
#include "fbsp/trainer.hpp"

using namespace fbsp;

namespace {

TaskConfig small_task(std::size_t per_class) {
  auto task = TaskConfig::three_class();
  task.samples_per_class = per_class;
  return task;
}

TrainConfig demo_config() {
  TrainConfig c;
  c.lr = 1e-2;
  return c;
}

// Model with a random head and standardizer fitted on `clips` under the bank
// of `params`.
TrainedModel random_model(const FbspParams& params, std::span<const LabeledClip> clips,
                          std::size_t classes, std::uint64_t seed) {
  TrainedModel model;
  model.params = params;
  const std::size_t F = params.f_c.size();
  model.head.weights = RealMatrix(classes, F);
  model.head.bias.assign(classes, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < F; ++k) model.head.weights(c, k) = g(rng);
    model.head.bias[c] = g(rng);
  }
  fit_standardizer(model.head, model.features, fbsp_kernel(params), clips);
  return model;
}

double total_loss(const TrainedModel& model, std::span<const LabeledClip> batch, double lambda) {
  return pipeline_gradient(model, batch, lambda, false).total_loss;
}

double relative(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("make_task: sizes, split and balance") {
  const auto corpus = make_task(TaskConfig::three_class());
  CHECK(corpus.train.size() == 120);
  CHECK(corpus.validation.size() == 30);
  CHECK(corpus.class_names == std::vector<std::string>{"tone", "chirp", "noise"});
  std::vector<int> counts(3, 0);
  for (const auto& c : corpus.train) ++counts[c.label];
  for (const auto& c : corpus.validation) ++counts[c.label];
  CHECK(counts == std::vector<int>{50, 50, 50});
  for (const auto& c : corpus.train) CHECK(c.wave.size() == 2000);
}

TEST_CASE("make_task: deterministic in the seed") {
  const auto task = small_task(10);
  const auto a = make_task(task);
  const auto b = make_task(task);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].wave == b.train[i].wave);
    CHECK(a.train[i].label == b.train[i].label);
  }
  auto other = task;
  other.seed = 1;
  CHECK_FALSE(make_task(other).train[0].wave == a.train[0].wave);
}

TEST_CASE("make_task: invalid specs") {
  auto task = TaskConfig::three_class();
  task.classes[2].generator.frequency_end = 4100;
  CHECK_THROWS_AS(make_task(task), ValidationError);
  task = TaskConfig::three_class();
  task.classes.resize(1);
  CHECK_THROWS_AS(make_task(task), ValidationError);
}

TEST_CASE("task and train config json round trip") {
  auto task = TaskConfig::three_class();
  task.snr_range.reset();
  nlohmann::json j = task;
  const auto back = j.get<TaskConfig>();
  CHECK_FALSE(back.snr_range.has_value());
  CHECK(back.classes.size() == 3);
  CHECK(nlohmann::json(back) == j);

  auto config = demo_config();
  config.augment = AugmentConfig{};
  nlohmann::json t = config;
  CHECK(nlohmann::json(t.get<TrainConfig>()) == t);
  t["learning_rate"] = 1;
  CHECK_THROWS_AS(t.get<TrainConfig>(), ValidationError);
}

TEST_CASE("clean two-class task is learnable with the fixed STFT") {
  TaskConfig task;
  task.classes = {{"low", {SignalKind::sine, 400.0, 400.0, 0.5, 64}, 0.05},
                  {"high", {SignalKind::sine, 1800.0, 1800.0, 0.5, 64}, 0.05}};
  task.snr_range.reset();
  const auto corpus = make_task(task);
  auto config = demo_config();
  config.epochs = 10;
  config.freeze_epochs = config.epochs;
  const auto result = train(config, corpus, FbspParams::stft_init(256));
  CHECK(accuracy(result.model, corpus.validation) >= 0.95);
}

TEST_CASE("fully frozen layer returns the init params and init-bank features") {
  const auto corpus = make_task(small_task(12));
  auto config = demo_config();
  config.epochs = 4;
  config.freeze_epochs = 4;
  const auto init = FbspParams::stft_init(256);
  const auto result = train(config, corpus, init);
  CHECK(result.model.params.m == init.m);
  CHECK(result.model.params.f_b == init.f_b);
  CHECK(result.model.params.f_c == init.f_c);
  const FeatureConfig features;
  const auto bank = fbsp_kernel(init);
  for (const auto& clip : corpus.validation) {
    CHECK(result.model.features.features(clip.wave, fbsp_kernel(result.model.params)) ==
          features.features(clip.wave, bank));
  }
  // And the init bank reproduces the STFT features to rounding.
  const auto dft = dft_kernel(256);
  for (const auto& clip : corpus.validation) {
    const auto a = features.features(clip.wave, bank);
    const auto b = features.features(clip.wave, dft);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-9);
  }
}

TEST_CASE("pipeline gradient matches finite differences at init") {
  auto task = small_task(5);
  const auto corpus = make_task(task);
  const std::vector<LabeledClip> clips(corpus.train.begin(), corpus.train.begin() + 8);
  const auto init = FbspParams::stft_init(256);
  const auto model = random_model(init, clips, 3, 4);
  const double lambda = 1.0;
  const auto g = pipeline_gradient(model, clips, lambda);

  const double h = 1e-6;
  auto shifted = model;
  shifted.params.f_b = init.f_b + h;
  const double up = total_loss(shifted, clips, lambda);
  shifted.params.f_b = init.f_b - h;
  const double down = total_loss(shifted, clips, lambda);
  const double fd_fb = (up - down) / (2 * h);
  MESSAGE("d_fb analytic " << g.params.d_fb << " fd " << fd_fb);
  CHECK(relative(g.params.d_fb, fd_fb) < 1e-4);

  for (std::size_t k : {5u, 19u, 40u, 90u}) {
    shifted = model;
    shifted.params.f_c[k] += h;
    const double a = total_loss(shifted, clips, lambda);
    shifted.params.f_c[k] -= 2 * h;
    const double b = total_loss(shifted, clips, lambda);
    const double fd = (a - b) / (2 * h);
    CHECK(relative(g.params.d_fc[k], fd) < 1e-4);
  }
  CHECK(g.params.d_m == 0.0);
}

TEST_CASE("pipeline gradient in m at an interior point") {
  const auto corpus = make_task(small_task(5));
  const std::vector<LabeledClip> clips(corpus.train.begin(), corpus.train.begin() + 8);
  auto params = FbspParams::stft_init(256);
  params.m = 1.5;
  params.f_b = 0.77;
  REQUIRE_FALSE(in_exclusion_zone(params.m, params.f_b, params.n_fft));
  const auto model = random_model(params, clips, 3, 5);
  const auto g = pipeline_gradient(model, clips, 1.0);
  const double h = 1e-6;
  auto shifted = model;
  shifted.params.m = params.m + h;
  const double up = total_loss(shifted, clips, 1.0);
  shifted.params.m = params.m - h;
  const double down = total_loss(shifted, clips, 1.0);
  CHECK(relative(g.params.d_m, (up - down) / (2 * h)) < 1e-4);
  shifted = model;
  shifted.params.f_b = params.f_b + h;
  const double bu = total_loss(shifted, clips, 1.0);
  shifted.params.f_b = params.f_b - h;
  const double bd = total_loss(shifted, clips, 1.0);
  CHECK(relative(g.params.d_fb, (bu - bd) / (2 * h)) < 1e-4);
}

TEST_CASE("unregularized training moves the layer and lowers the loss") {
  const auto corpus = make_task(TaskConfig::three_class());
  auto config = demo_config();
  config.lambda_fbsp = 0.0;
  const auto result = train(config, corpus, FbspParams::stft_init(256));
  REQUIRE_FALSE(result.diverged);
  REQUIRE(result.log.epochs.size() == 30);
  const auto& log = result.log.epochs;
  CHECK(result.model.params.f_b != 1.0);
  CHECK(result.model.params.f_c != FbspParams::stft_init(256).f_c);
  CHECK(log.back().task_loss < log[2].task_loss);
  CHECK(log.back().total_loss < log.front().total_loss);
  // m has no derivative at 0, so it stays at its initial value.
  CHECK(result.model.params.m == 0.0);
  MESSAGE("f_b " << result.model.params.f_b << ", halved " << result.halved_updates
                 << ", skipped " << result.skipped_updates);
  for (const auto& e : log) {
    CHECK(std::isfinite(e.total_loss));
    CHECK(e.accuracy >= 0.0);
  }
}

TEST_CASE("strong norm regularizer keeps the bank normalized") {
  const auto corpus = make_task(TaskConfig::three_class());
  auto config = demo_config();
  config.lambda_fbsp = 10.0;
  const auto result = train(config, corpus, FbspParams::stft_init(256));
  REQUIRE_FALSE(result.diverged);
  CHECK(result.log.epochs.back().fbsp_loss < 1e-3);
}

TEST_CASE("training from a non-trivial order adapts m") {
  const auto corpus = make_task(small_task(20));
  auto config = demo_config();
  config.epochs = 8;
  auto init = FbspParams::stft_init(256);
  init.m = 1.5;
  init.f_b = 0.77;
  const auto result = train(config, corpus, init);
  REQUIRE_FALSE(result.diverged);
  CHECK(result.model.params.m != 1.5);
  CHECK_FALSE(in_exclusion_zone(result.model.params.m, result.model.params.f_b, 256));
}

TEST_CASE("training is bit-reproducible and decreases over seeds") {
  const auto corpus = make_task(small_task(20));
  auto config = demo_config();
  config.epochs = 10;
  const auto a = train(config, corpus, FbspParams::stft_init(256));
  const auto b = train(config, corpus, FbspParams::stft_init(256));
  CHECK(a.log == b.log);
  CHECK(to_csv(a.log) == to_csv(b.log));
  CHECK(a.model.params.f_c == b.model.params.f_c);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    config.seed = seed;
    const auto r = train(config, corpus, FbspParams::stft_init(256));
    REQUIRE_FALSE(r.diverged);
    CHECK(r.log.epochs.back().total_loss < r.log.epochs.front().total_loss);
  }
}

TEST_CASE("training with augmentation runs and stays deterministic") {
  const auto corpus = make_task(small_task(10));
  auto config = demo_config();
  config.epochs = 4;
  AugmentConfig aug;
  aug.target_duration = 0.25;
  aug.scale_exponent_lo = -0.5;
  aug.scale_exponent_hi = 0.5;
  config.augment = aug;
  const auto a = train(config, corpus, FbspParams::stft_init(256));
  const auto b = train(config, corpus, FbspParams::stft_init(256));
  CHECK_FALSE(a.diverged);
  CHECK(a.log == b.log);
}

TEST_CASE("divergence stops training with the last finite log") {
  const auto corpus = make_task(small_task(10));
  auto config = demo_config();
  config.lr = 1e200;
  config.epochs = 10;
  const auto result = train(config, corpus, FbspParams::stft_init(256));
  CHECK(result.diverged);
  CHECK_FALSE(result.message.empty());
  CHECK(result.log.epochs.size() < 10);
  for (const auto& e : result.log.epochs) CHECK(std::isfinite(e.total_loss));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.lr_decay = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("train log csv") {
  TrainLog log;
  log.epochs.push_back({1, 0.5, 0.25, 0.0, 1.0, 0.0, 1.0});
  CHECK(to_csv(log) == "epoch,total_loss,task_loss,fbsp_loss,accuracy,m,f_b\n1,0.5,0.25,0,1,0,1\n");
}
