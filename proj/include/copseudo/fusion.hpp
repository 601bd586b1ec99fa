#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "copseudo/prob.hpp"
#include "copseudo/rng.hpp"

namespace copseudo {

enum class SourceKind { both_confident_agree, conflict_coin_flip, own_confident, consensus, none };

/// Why an item did or did not get a pseudo-label.
/// `detail` is the 1-based model for conflict_coin_flip (winner; 0 when the
/// conflict was dropped) and own_confident, and the level k for consensus.
struct FusionSource {
  SourceKind kind = SourceKind::none;
  int detail = 0;

  // "both", "conflict:m", "own:i", "consensus:k", "none"
  std::string to_string() const;
  static FusionSource parse(const std::string& text);

  friend bool operator==(const FusionSource&, const FusionSource&) = default;
};

struct FusionConfig {
  double tau = 0.95;
  // Lower thresholds tau_2 >= ... >= tau_n; one entry per consensus level.
  std::vector<double> tau_cascade{0.75};
  double w = 0.75;
  std::size_t num_models = 2;
  // Case A' (two confident models disagree) yields no pseudo-label.
  bool conflict_drop = false;
  // Each model keeps only its own confident predictions (plain FixMatch).
  bool single_model_mode = false;

  void validate() const;
  // {0.75} for two models, {0.85, 0.75} for three; none for larger n.
  static std::vector<double> default_cascade(std::size_t num_models);
};

struct FusionDecision {
  std::optional<int> pseudo_label;
  std::vector<double> masks;
  FusionSource source;
  // Training target per model; differs from pseudo_label only in
  // single-model mode where every model trains on its own prediction.
  std::vector<std::optional<int>> targets;

  bool reliable() const noexcept { return pseudo_label.has_value(); }

  friend bool operator==(const FusionDecision&, const FusionDecision&) = default;
};

/// Two-model branch table:
///   A  both p > tau, same class    -> label, masks (w, w)
///   A' both p > tau, classes differ -> coin flip on the first stream draw
///                                      (uniform < 0.5 picks model 1), masks (w, w)
///   B  exactly one p_i > tau        -> c_i, mask_i = w, other = 1
///   C  both p > tau_2, same class   -> label, masks (1, 1)
///   D  otherwise                    -> no label, masks (0, 0)
/// All comparisons are strict.
FusionDecision fuse_pair(const ProbVector& q1, const ProbVector& q2, const FusionConfig& cfg,
                         Rng& stream);

/// n-model threshold cascade. Level 1: any model with p > tau. Level k >= 2:
/// at least k models with p > tau_k sharing an argmax. The smallest level with
/// a candidate wins; distinct candidate labels at that level are picked
/// uniformly from the stream. Own-confident models get mask w, every other
/// model gets 1 whenever a label is present.
FusionDecision fuse_cascade(std::span<const ProbVector> qs, const FusionConfig& cfg, Rng& stream);

// Dispatches on cfg.num_models and cfg.single_model_mode.
FusionDecision fuse(std::span<const ProbVector> qs, const FusionConfig& cfg, Rng& stream);

// Sub-stream for item `item` of training step `step`.
Rng fusion_item_stream(std::uint64_t fusion_seed, std::uint64_t step, std::uint64_t item);
std::uint64_t fusion_step_seed(std::uint64_t fusion_seed, std::uint64_t step);

// Item-wise ProbVectors from several models: preds[model][item].
using ModelPredictions = std::vector<std::vector<ProbVector>>;

struct DebiasSubset {
  std::vector<std::size_t> selected;
  // Max pairwise L-infinity distance per item, for every item.
  std::vector<double> agreement;
};

// Distances within this of epsilon count as equal to it.
inline constexpr double kDebiasBoundaryTolerance = 1e-12;

// Selects items where all models share the argmax and the max pairwise
// L-infinity distance is <= epsilon.
DebiasSubset select_debias_subset(const ModelPredictions& preds, double epsilon);

double mask_ratio(std::span<const FusionDecision> decisions);

// Prediction trace: CSV `item,model,p0..p{C-1}`, models 1-based.
struct PredictionTrace {
  std::vector<std::int64_t> items;
  // per item, per model
  std::vector<std::vector<ProbVector>> probs;

  std::size_t num_models() const { return probs.empty() ? 0 : probs.front().size(); }
};

PredictionTrace read_prediction_trace(const std::filesystem::path& path);
void write_prediction_trace(const PredictionTrace& trace, const std::filesystem::path& path);

// Decision trace: CSV `item,pseudo_label,source,mask_1..mask_n`.
void write_decision_trace(std::span<const std::int64_t> items,
                          std::span<const FusionDecision> decisions, std::size_t num_models,
                          std::ostream& out);

// Re-runs fusion over a trace with item sub-streams of `seed`.
std::vector<FusionDecision> fuse_trace(const PredictionTrace& trace, const FusionConfig& cfg,
                                       std::uint64_t seed);

}  // namespace copseudo
