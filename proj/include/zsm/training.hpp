#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsm/checkpoint.hpp"
#include "zsm/data_pipeline.hpp"
#include "zsm/losses.hpp"
#include "zsm/model.hpp"

namespace zsm {

/// Cosine annealing from lr_max (step 0) to lr_min (step == total); steps past
/// the end stay at lr_min.
double cosine_lr(std::uint64_t step, std::uint64_t total, double lr_max, double lr_min);

struct TrainConfig {
  int total_steps = 2000;
  int batch_size = 4;
  double lr_max = 4e-4;
  double lr_min = 1e-7;
  /// Unset means: defaults for clean data, guidance losses off (1, 0, 0) for
  /// noisy or compressed inputs.
  std::optional<LossWeights> weights;
  DegradationSpec degradation;
  std::uint64_t seed = 0;
  int checkpoint_interval = 500;  // 0 disables periodic checkpoints
  int hr_patch = 128;
  bool augment = true;
  double grad_clip_norm = 10.0;  // 0 disables clipping

  void validate() const;
  [[nodiscard]] LossWeights effective_weights() const;

  [[nodiscard]] std::vector<std::pair<std::string, std::string>> to_pairs() const;
  /// Sets one field by key; returns false for an unknown key.
  bool set(const std::string& key, const std::string& value);
};

/// Thrown when a loss term becomes NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::string term, std::uint64_t step, double value);
  [[nodiscard]] const std::string& term() const { return term_; }
  [[nodiscard]] std::uint64_t step() const { return step_; }

 private:
  std::string term_;
  std::uint64_t step_;
};

struct StepMetrics {
  std::uint64_t step = 0;  // 1-based index of the optimizer step
  double lr = 0;
  double l_rec = 0;
  double l_i1 = 0;
  double l_i2 = 0;
  double total = 0;
};

std::string metrics_csv_header();
std::string to_csv_line(const StepMetrics& m);

/// Adam with bias correction, (0.9, 0.999), eps 1e-8, no weight decay.
class Adam {
 public:
  explicit Adam(const ParamStore<float>& params);

  void step(ParamStore<float>& params, double lr);
  [[nodiscard]] std::uint64_t steps_taken() const { return t_; }

  [[nodiscard]] std::vector<NamedBlob> export_state() const;
  void import_state(const std::vector<NamedBlob>& blobs, std::uint64_t steps_taken);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<float>> m_, v_;
  std::uint64_t t_ = 0;
};

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(ParamStore<float>& params, double max_norm);

/// Clips in memory. Each must have at least 7 frames of at least hr_patch.
struct TrainingSet {
  std::vector<FrameSequence> clips;
};

TrainingSet load_training_set(const std::filesystem::path& root);

/// A batch of B samples stacked along N: 4 LR inputs (possibly degraded),
/// 7 HR targets and 7 clean LR targets.
struct Batch {
  std::vector<Tensor<float>> lr_inputs, hr_targets, lr_targets;
};

/// Deterministic in (seed, step): resuming reproduces the same batches.
Batch sample_batch(const TrainingSet& data, const TrainConfig& cfg, std::uint64_t step,
                   int scale);

struct LossBreakdown {
  Var<float> total;
  double l_rec = 0, l_i1 = 0, l_i2 = 0;
};

/// Forward pass plus the weighted objective for one batch. Guidance terms with
/// zero weight are evaluated without gradient (for logging only).
LossBreakdown compute_loss(const ZsmModel<float>& model, const Batch& batch,
                           const LossWeights& weights);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + metrics.csv
  std::optional<Checkpoint> resume;
  /// Stop after this many optimizer steps in this call (the schedule still
  /// spans total_steps). Unset runs to total_steps.
  std::optional<int> max_steps;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;  // includes optimizer state
  std::vector<StepMetrics> history;
};

/// Runs the optimization loop. Throws NonFiniteLoss on a NaN/inf term.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const TrainingSet& data,
                  const TrainOptions& opts = {});

}  // namespace zsm
