#include "copseudo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "copseudo/errors.hpp"

namespace copseudo {

std::size_t ObjectiveConfig::unlabeled_batch_size() const {
  const double ub = mu * static_cast<double>(batch_size);
  return static_cast<std::size_t>(std::llround(ub));
}

void ObjectiveConfig::validate() const {
  std::string err;
  if (!(lambda >= 0.0)) err += " lambda must be >= 0;";
  if (!(mu > 0.0)) err += " mu must be > 0;";
  if (batch_size == 0) err += " batch size must be positive;";
  const double ub = mu * static_cast<double>(batch_size);
  if (mu > 0.0 && (ub < 1.0 || std::abs(ub - std::round(ub)) > 1e-9)) {
    err += " mu*B must be a positive integer;";
  }
  if (!err.empty()) throw ConfigError("invalid objective config:" + err);
}

double supervised_loss(std::span<const ProbVector> probs, std::span<const int> labels) {
  if (probs.empty()) throw ConfigError("empty batch");
  if (probs.size() != labels.size()) throw ConfigError("probs and labels differ in length");
  double sum = 0.0;
  for (std::size_t b = 0; b < probs.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= probs[b].size()) {
      throw ConfigError("label out of range");
    }
    sum -= std::log(probs[b][labels[b]]);
  }
  return sum / static_cast<double>(probs.size());
}

double unlabeled_loss(std::span<const ProbVector> probs_strong,
                      std::span<const FusionDecision> decisions, std::size_t model_index) {
  if (probs_strong.size() != decisions.size()) throw ConfigError("probs and decisions differ in length");
  if (probs_strong.empty()) throw ConfigError("empty batch");
  double sum = 0.0;
  for (std::size_t b = 0; b < decisions.size(); ++b) {
    const auto& d = decisions[b];
    if (model_index >= d.masks.size()) throw ConfigError("model index out of range");
    const double mask = d.masks[model_index];
    const auto& target = model_index < d.targets.size() ? d.targets[model_index] : d.pseudo_label;
    if (mask == 0.0 || !target) continue;
    sum += mask * -std::log(probs_strong[b][*target]);
  }
  return sum / static_cast<double>(decisions.size());
}

double total_objective(double supervised, std::span<const double> unlabeled_per_model,
                       std::size_t model_index, const ObjectiveConfig& cfg) {
  if (model_index >= unlabeled_per_model.size()) throw ConfigError("model index out of range");
  if (!cfg.shared_unlabeled) return supervised + cfg.lambda * unlabeled_per_model[model_index];
  double sum = 0.0;
  for (double l : unlabeled_per_model) sum += l;
  return supervised + cfg.lambda * sum;
}

double cap_loss(std::span<const CadrItem> items) {
  if (items.empty()) throw ConfigError("cap_loss of an empty set");
  double sum = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (it.missing) continue;
    if (!it.supervised_loss || !it.propensity) {
      throw ConfigError("item " + std::to_string(i) + ": observed item needs l_s and propensity");
    }
    if (!(*it.propensity > 0.0)) {
      throw ConfigError("item " + std::to_string(i) + ": propensity must be > 0");
    }
    sum += *it.supervised_loss / *it.propensity;
  }
  return sum / static_cast<double>(items.size());
}

double cai_loss(std::span<const CadrItem> items) {
  if (items.empty()) throw ConfigError("cai_loss of an empty set");
  double sum = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (it.missing) {
      if (!it.unsupervised_loss || !it.confidence || !it.threshold) {
        throw ConfigError("item " + std::to_string(i) + ": missing item needs l_u, con and tau");
      }
      if (*it.confidence > *it.threshold) sum += *it.unsupervised_loss;
    } else {
      if (!it.supervised_loss) throw ConfigError("item " + std::to_string(i) + ": observed item needs l_s");
      sum += *it.supervised_loss;
    }
  }
  return sum / static_cast<double>(items.size());
}

double l2_loss(const ProbVector& prediction, std::span<const double> target) {
  if (target.size() != prediction.size()) throw ConfigError("l2_loss length mismatch");
  double sum = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    const double d = prediction[c] - target[c];
    sum += d * d;
  }
  return sum;
}

std::vector<double> estimate_class_propensity(std::span<const int> observed_labels,
                                              std::size_t total_items, int num_classes,
                                              std::span<const double> prior) {
  if (num_classes < 1 || total_items == 0) throw ConfigError("propensity needs classes and items");
  if (!prior.empty() && prior.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("prior needs one entry per class");
  }
  std::vector<double> counts(num_classes, 0.0);
  for (int y : observed_labels) {
    if (y < 0 || y >= num_classes) throw ConfigError("label out of range");
    counts[y] += 1.0;
  }
  std::vector<double> out(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    const double pc = prior.empty() ? 1.0 / num_classes : prior[c];
    const double expected = static_cast<double>(total_items) * pc;
    // Floor at 1/N so unseen classes keep a defined inverse weight.
    const double p = expected > 0.0 ? counts[c] / expected : 1.0;
    out[c] = std::clamp(p, 1.0 / static_cast<double>(total_items), 1.0);
  }
  return out;
}

}  // namespace copseudo
