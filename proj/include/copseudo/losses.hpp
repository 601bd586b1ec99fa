#pragma once

#include <optional>
#include <span>
#include <vector>

#include "copseudo/fusion.hpp"
#include "copseudo/prob.hpp"

namespace copseudo {

struct ObjectiveConfig {
  double lambda = 1.0;
  // Each objective adds the unlabeled losses of all models, not just its own.
  bool shared_unlabeled = true;
  double mu = 7.0;
  std::size_t batch_size = 64;

  // mu * B, validated to be a positive integer.
  std::size_t unlabeled_batch_size() const;
  void validate() const;
};

// Mean cross-entropy (1/B) * sum_b -log probs_b[labels_b].
double supervised_loss(std::span<const ProbVector> probs, std::span<const int> labels);

// (1/|batch|) * sum_b mask_b[model] * -log probs_strong_b[target_b].
double unlabeled_loss(std::span<const ProbVector> probs_strong,
                      std::span<const FusionDecision> decisions, std::size_t model_index);

// l_s + lambda * l_u[model], or l_s + lambda * sum_j l_u[j] when shared.
double total_objective(double supervised, std::span<const double> unlabeled_per_model,
                       std::size_t model_index, const ObjectiveConfig& cfg);

// Per-item terms for the class-aware propensity / imputation baselines.
// Fields that do not apply to an item may stay empty.
struct CadrItem {
  bool missing = false;                      // r
  std::optional<double> supervised_loss;     // l_s(x, y), observed items
  std::optional<double> propensity;          // p, observed items
  std::optional<double> unsupervised_loss;   // l_u(x, q), missing items
  std::optional<double> confidence;          // con(q), missing items
  std::optional<double> threshold;           // tau(x), missing items
};

using CadrInputs = std::vector<CadrItem>;

// (1/N) * sum_i (1 - r_i) * l_s_i / p_i
double cap_loss(std::span<const CadrItem> items);
// (1/N) * sum_i [ r_i * l_u_i * 1{con_i > tau_i} + (1 - r_i) * l_s_i ]
double cai_loss(std::span<const CadrItem> items);

// Squared L2 distance between a prediction and a target distribution.
double l2_loss(const ProbVector& prediction, std::span<const double> target);

/// Heuristic per-class propensity: observed count of class c divided by the
/// expected class size N * prior_c, clamped to [1/N, 1]. A diagnostic
/// heuristic, not a fitted propensity model. Empty prior means uniform.
std::vector<double> estimate_class_propensity(std::span<const int> observed_labels,
                                              std::size_t total_items, int num_classes,
                                              std::span<const double> prior = {});

}  // namespace copseudo
