#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fbsp/augment.hpp"
#include "fbsp/bank.hpp"
#include "fbsp/gradient.hpp"
#include "fbsp/signal.hpp"
#include "fbsp/transform.hpp"

namespace fbsp {

struct LabeledClip {
  Waveform wave;
  int label = 0;
};

struct Corpus {
  std::vector<LabeledClip> train;
  std::vector<LabeledClip> validation;
  std::vector<std::string> class_names;
};

/// One class of the synthetic task. Frequencies of every clip are jittered
/// by a factor in [1 - jitter, 1 + jitter].
struct ClassSpec {
  std::string name;
  GeneratorConfig generator;
  double jitter = 0.05;
};

struct TaskConfig {
  std::vector<ClassSpec> classes;
  std::size_t samples_per_class = 50;
  double duration = 0.25;
  int sample_rate = 8000;
  /// Per-clip SNR drawn uniformly from [lo, hi] dB; empty means clean clips.
  std::optional<std::pair<double, double>> snr_range = std::make_pair(10.0, 30.0);
  std::uint64_t seed = 0;

  /// Tone / chirp / band-noise classes at 8 kHz.
  static TaskConfig three_class();
};

void to_json(nlohmann::json& j, const TaskConfig& c);
void from_json(const nlohmann::json& j, TaskConfig& c);

/// Class-balanced corpus, 80/20 train/validation split after a seeded shuffle.
Corpus make_task(const TaskConfig& config);

/// Analysis front-end shared by training and evaluation.
struct FeatureConfig {
  FrameGrid grid{256, 128, Padding::zero_to_frame};
  WindowSpec window{WindowKind::hann, 256};
  double eps = kLogPowerFloor;

  Spectrogram spectrogram(const Waveform& signal, const KernelBank& bank) const;
  /// Time average of the log-power spectrogram (one value per filter).
  std::vector<double> pool(const Spectrogram& spec) const;
  std::vector<double> features(const Waveform& signal, const KernelBank& bank) const;
};

void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);

/// Softmax-linear classifier on standardized features
/// z_k = (feature_k - mean_k) / scale_k.
struct LinearHead {
  RealMatrix weights;  // C x F
  std::vector<double> bias;
  std::vector<double> mean;
  std::vector<double> scale;

  std::vector<double> logits(std::span<const double> features) const;
};

void to_json(nlohmann::json& j, const LinearHead& h);
void from_json(const nlohmann::json& j, LinearHead& h);

struct TrainedModel {
  FbspParams params;
  LinearHead head;
  FeatureConfig features;

  int classify(std::span<const double> pooled) const;
  int predict(const Waveform& signal) const;
};

double accuracy(const TrainedModel& model, std::span<const LabeledClip> clips);

struct TrainConfig {
  int epochs = 30;
  double lr = 2.5e-4;
  double lr_decay = 0.985;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lambda_fbsp = 1.0;
  int freeze_epochs = 3;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  /// Applied on the fly to training clips when present.
  std::optional<AugmentConfig> augment;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;
  double total_loss = 0.0;
  double task_loss = 0.0;
  double fbsp_loss = 0.0;
  double accuracy = 0.0;
  double m = 0.0;
  double f_b = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  bool operator==(const TrainLog&) const = default;
};

std::string to_csv(const TrainLog& log);

struct TrainResult {
  TrainedModel model;
  TrainLog log;
  bool diverged = false;
  std::string message;
  /// fbsp updates that needed step halving / were dropped after the last halving.
  std::size_t halved_updates = 0;
  std::size_t skipped_updates = 0;
};

/// Loss and gradients of mean cross-entropy + lambda * fbsp_loss over a batch.
struct PipelineGradient {
  double total_loss = 0.0;
  double task_loss = 0.0;
  double fbsp_loss = 0.0;
  ParamGradient params;
  RealMatrix d_weights;
  std::vector<double> d_bias;
};

PipelineGradient pipeline_gradient(const TrainedModel& model,
                                   std::span<const LabeledClip> batch,
                                   double lambda_fbsp, bool with_param_gradient = true);

/// Standardization statistics of pooled features over `clips` under `bank`.
void fit_standardizer(LinearHead& head, const FeatureConfig& features,
                      const KernelBank& bank, std::span<const LabeledClip> clips);

/// Nesterov-momentum gradient descent on cross-entropy + lambda * fbsp_loss.
/// fbsp parameters are frozen for the first freeze_epochs epochs and the
/// learning rate decays by lr_decay per epoch. Stops at the first non-finite
/// loss, returning the log up to the last finite epoch with diverged set.
TrainResult train(const TrainConfig& config, const Corpus& corpus,
                  const FbspParams& init, const FeatureConfig& features = {});

}  // namespace fbsp
