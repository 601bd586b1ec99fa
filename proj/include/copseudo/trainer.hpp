#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "copseudo/augment.hpp"
#include "copseudo/data.hpp"
#include "copseudo/fusion.hpp"
#include "copseudo/kv_config.hpp"
#include "copseudo/losses.hpp"
#include "copseudo/metrics.hpp"
#include "copseudo/predictor.hpp"

namespace copseudo {

struct OptimizerConfig {
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // lr * cos(7*pi*t / (16*T)); off by default.
  bool cosine_schedule = false;
};

struct ModelSeeds {
  std::uint64_t init = 0;
  std::uint64_t data_order = 0;
  std::uint64_t augment_weak = 0;
  std::uint64_t augment_strong = 0;
};

struct SeedSet {
  std::vector<ModelSeeds> models;
  std::uint64_t unlabeled_order = 0;
  std::uint64_t unlabeled_weak = 0;
  std::uint64_t fusion = 0;

  // Model i's seeds depend only on (master, i), so model 1 of an n-model run
  // and of a single-model run start identically.
  static SeedSet derive(std::uint64_t master, std::size_t num_models);
};

struct TrainConfig {
  std::size_t num_models = 2;
  std::uint64_t steps = 2000;
  std::uint64_t eval_every = 100;
  // Writes the resolved config and the initial evaluation row only.
  bool dry_run = false;
  FusionConfig fusion;
  ObjectiveConfig objective{1.0, true, 4.0, 16};
  OptimizerConfig optimizer;
  AugmentConfig augment;
  std::vector<int> hidden{32};
  Activation activation = Activation::relu;
  SeedSet seeds;
  // Dump weak-view predictions of the unlabeled batch every k steps (0: never).
  std::uint64_t predictions_every = 0;
  bool write_checkpoints = true;
  // Extra keys recorded verbatim in config.resolved (data paths, master seed).
  KeyValues extra_keys;

  // Throws ConfigError listing every problem at once.
  void validate() const;
  KeyValues to_key_values() const;
};

struct ModelState {
  ModelParams params;
  OptState opt;
  AugmentStream weak;
  AugmentStream strong;
};

struct LabeledBatch {
  Batch features;
  std::vector<int> labels;
};

struct UnlabeledBatch {
  std::vector<std::int64_t> items;
  Batch features;
  // Evaluation-only true labels; used for pseudo-label accuracy, never for training.
  std::vector<int> hidden_labels;
};

struct StepMetrics {
  std::uint64_t step = 0;
  std::vector<double> train_loss;
  double mask_ratio = 0.0;
  double pseudo_acc = 1.0;
  std::size_t pseudo_present = 0;
  std::size_t pseudo_correct = 0;
  std::array<std::size_t, kSourceColumns> source_counts{};
};

// Streams shared across models within a run.
struct SharedStreams {
  AugmentStream unlabeled_weak;
  std::uint64_t fusion_seed = 0;
};

/// One lock-step update of every model. Predictions for fusion come from the
/// current parameters on one weak view of the unlabeled batch shared by all
/// models; each model's unlabeled loss uses its own strong view. Every model
/// is updated only after all decisions are made.
/// If `predictions` is non-null it receives the weak-view predictions.
StepMetrics train_step(std::vector<ModelState>& models, std::span<const LabeledBatch> labeled,
                       const UnlabeledBatch& unlabeled, const TrainConfig& cfg,
                       SharedStreams& shared, std::uint64_t step,
                       PredictionTrace* predictions = nullptr);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

Evaluation evaluate(const ModelParams& params, const MaskedDataset& test);

// Fraction of present pseudo-labels equal to the hidden label; 1.0 when none.
double pseudo_label_accuracy(std::span<const FusionDecision> decisions,
                             std::span<const int> hidden_true_labels);

struct TrainResult {
  RunMetrics metrics;
  std::vector<ModelParams> models;
};

/// Runs the full loop and writes into `run_dir`: config.resolved, metrics.csv,
/// metrics.dat, ckpt-model{i}-step{s} and optional predictions-step{s}.csv.
TrainResult train(const TrainConfig& cfg, const MaskedDataset& ds, const MaskedDataset& test,
                  const std::filesystem::path& run_dir);

}  // namespace copseudo
