#include "copseudo/trainer.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "copseudo/errors.hpp"
#include "copseudo/rng.hpp"

namespace copseudo {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + num(xs[k]);
  return s;
}

std::string join(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + std::to_string(xs[k]);
  return s;
}

// Endless shuffled pass over a fixed index set; reshuffles at each wrap.
class IndexCycler {
 public:
  IndexCycler(std::vector<std::size_t> indices, std::uint64_t seed)
      : order_(std::move(indices)), rng_(seed) {
    shuffle();
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) shuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

Batch gather_features(const MaskedDataset& ds, std::span<const std::size_t> rows) {
  Batch b(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.dim()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto f = ds.features(rows[r]);
    for (std::size_t c = 0; c < f.size(); ++c) b(r, c) = f[c];
  }
  return b;
}

template <typename Fn>
Batch augment_rows(const Batch& xs, Fn&& fn) {
  Batch out(xs.rows(), xs.cols());
  std::vector<double> row(static_cast<std::size_t>(xs.cols()));
  for (Eigen::Index r = 0; r < xs.rows(); ++r) {
    for (Eigen::Index c = 0; c < xs.cols(); ++c) row[c] = xs(r, c);
    const std::vector<double> aug = fn(std::span<const double>(row));
    for (Eigen::Index c = 0; c < xs.cols(); ++c) out(r, c) = aug[c];
  }
  return out;
}

std::size_t source_column(SourceKind kind) {
  switch (kind) {
    case SourceKind::both_confident_agree: return src_both;
    case SourceKind::conflict_coin_flip: return src_conflict;
    case SourceKind::own_confident: return src_own;
    case SourceKind::consensus: return src_consensus;
    case SourceKind::none: return src_none;
  }
  return src_none;
}

double scheduled_lr(const OptimizerConfig& opt, std::uint64_t step, std::uint64_t total) {
  if (!opt.cosine_schedule || total == 0) return opt.learning_rate;
  return opt.learning_rate *
         std::cos(7.0 * std::numbers::pi * static_cast<double>(step) / (16.0 * static_cast<double>(total)));
}

}  // namespace

SeedSet SeedSet::derive(std::uint64_t master, std::size_t num_models) {
  SeedSet s;
  for (std::size_t i = 0; i < num_models; ++i) {
    const std::uint64_t base = derive_seed(master, 1000 + i);
    s.models.push_back({derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3),
                        derive_seed(base, 4)});
  }
  s.unlabeled_order = derive_seed(master, 1);
  s.unlabeled_weak = derive_seed(master, 2);
  s.fusion = derive_seed(master, 3);
  return s;
}

void TrainConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.emplace_back(e.what());
    }
  };
  if (num_models < 1) errors.emplace_back("models must be >= 1");
  if (num_models == 1 && !fusion.single_model_mode) {
    errors.emplace_back("a single model requires single_model_mode");
  }
  if (fusion.num_models != num_models) errors.emplace_back("fusion model count differs from models");
  if (steps < 1) errors.emplace_back("steps must be >= 1");
  if (eval_every < 1) errors.emplace_back("eval_every must be >= 1");
  if (seeds.models.size() != num_models) errors.emplace_back("one seed set per model required");
  if (!(optimizer.learning_rate > 0.0)) errors.emplace_back("lr must be > 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) errors.emplace_back("momentum must be in [0,1)");
  if (!(optimizer.weight_decay >= 0.0)) errors.emplace_back("weight_decay must be >= 0");
  for (int h : hidden) {
    if (h <= 0) errors.emplace_back("hidden layer sizes must be positive");
  }
  check([&] { fusion.validate(); });
  check([&] { objective.validate(); });
  check([&] { augment.validate(); });
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv = extra_keys;
  kv["models"] = std::to_string(num_models);
  kv["steps"] = std::to_string(steps);
  kv["eval_every"] = std::to_string(eval_every);
  kv["dry_run"] = dry_run ? "true" : "false";
  kv["tau"] = num(fusion.tau);
  kv["tau_cascade"] = join(fusion.tau_cascade);
  kv["w"] = num(fusion.w);
  kv["conflict_drop"] = fusion.conflict_drop ? "true" : "false";
  kv["single_model_mode"] = fusion.single_model_mode ? "true" : "false";
  kv["lambda"] = num(objective.lambda);
  kv["shared_unlabeled"] = objective.shared_unlabeled ? "true" : "false";
  kv["mu"] = num(objective.mu);
  kv["batch_size"] = std::to_string(objective.batch_size);
  kv["lr"] = num(optimizer.learning_rate);
  kv["momentum"] = num(optimizer.momentum);
  kv["weight_decay"] = num(optimizer.weight_decay);
  kv["cosine_lr"] = optimizer.cosine_schedule ? "true" : "false";
  kv["hidden"] = join(hidden);
  kv["activation"] = activation == Activation::relu ? "relu" : "tanh";
  kv["aug.sigma_weak"] = num(augment.sigma_weak);
  kv["aug.sigma_strong"] = num(augment.sigma_strong);
  kv["aug.vector_drop_prob"] = num(augment.vector_drop_prob);
  kv["aug.image_shift_weak"] = std::to_string(augment.image_shift_weak);
  kv["aug.image_shift_strong"] = std::to_string(augment.image_shift_strong);
  kv["predictions_every"] = std::to_string(predictions_every);
  kv["checkpoints"] = write_checkpoints ? "true" : "false";
  kv["seed.unlabeled_order"] = std::to_string(seeds.unlabeled_order);
  kv["seed.unlabeled_weak"] = std::to_string(seeds.unlabeled_weak);
  kv["seed.fusion"] = std::to_string(seeds.fusion);
  for (std::size_t i = 0; i < seeds.models.size(); ++i) {
    const std::string p = "seed.model" + std::to_string(i + 1) + ".";
    kv[p + "init"] = std::to_string(seeds.models[i].init);
    kv[p + "data_order"] = std::to_string(seeds.models[i].data_order);
    kv[p + "augment_weak"] = std::to_string(seeds.models[i].augment_weak);
    kv[p + "augment_strong"] = std::to_string(seeds.models[i].augment_strong);
  }
  return kv;
}

StepMetrics train_step(std::vector<ModelState>& models, std::span<const LabeledBatch> labeled,
                       const UnlabeledBatch& unlabeled, const TrainConfig& cfg,
                       SharedStreams& shared, std::uint64_t step, PredictionTrace* predictions) {
  const std::size_t n = models.size();
  const std::size_t batch = cfg.objective.batch_size;
  const std::size_t ubatch = cfg.objective.unlabeled_batch_size();
  if (labeled.size() != n) throw ConfigError("one labeled batch per model required");
  for (const auto& lb : labeled) {
    if (static_cast<std::size_t>(lb.features.rows()) != batch || lb.labels.size() != batch) {
      throw ConfigError("labeled batch size must equal B=" + std::to_string(batch));
    }
  }
  if (static_cast<std::size_t>(unlabeled.features.rows()) != ubatch || unlabeled.items.size() != ubatch) {
    throw ConfigError("unlabeled batch size must equal mu*B=" + std::to_string(ubatch));
  }
  const AugmentConfig& aug = cfg.augment;

  std::vector<LossAndGrad> sup(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Batch xs = augment_rows(labeled[i].features, [&](std::span<const double> x) {
      return weak_augment(x, models[i].weak, aug);
    });
    const std::vector<double> ones(batch, 1.0);
    sup[i] = loss_and_grad(models[i].params, xs, labeled[i].labels, ones);
  }

  const Batch weak_view = augment_rows(unlabeled.features, [&](std::span<const double> x) {
    return weak_augment(x, shared.unlabeled_weak, aug);
  });
  std::vector<std::vector<ProbVector>> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = predict_proba(models[i].params, weak_view);

  std::vector<FusionDecision> decisions;
  decisions.reserve(ubatch);
  std::vector<ProbVector> item_preds(n);
  for (std::size_t b = 0; b < ubatch; ++b) {
    for (std::size_t i = 0; i < n; ++i) item_preds[i] = q[i][b];
    Rng stream = fusion_item_stream(shared.fusion_seed, step, static_cast<std::uint64_t>(unlabeled.items[b]));
    decisions.push_back(fuse(item_preds, cfg.fusion, stream));
  }
  if (predictions) {
    predictions->items = unlabeled.items;
    predictions->probs.assign(ubatch, {});
    for (std::size_t b = 0; b < ubatch; ++b)
      for (std::size_t i = 0; i < n; ++i) predictions->probs[b].push_back(q[i][b]);
  }

  std::vector<LossAndGrad> unsup(n);
  std::vector<double> unsup_loss(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Batch xs = augment_rows(unlabeled.features, [&](std::span<const double> x) {
      return strong_augment(x, models[i].strong, aug);
    });
    std::vector<int> targets(ubatch, 0);
    std::vector<double> weights(ubatch, 0.0);
    for (std::size_t b = 0; b < ubatch; ++b) {
      if (const auto& t = decisions[b].targets[i]) {
        targets[b] = *t;
        weights[b] = decisions[b].masks[i];
      }
    }
    unsup[i] = loss_and_grad(models[i].params, xs, targets, weights);
    unsup_loss[i] = unsup[i].loss;
  }

  StepMetrics m;
  m.step = step;
  // With shared unlabeled losses every objective contains l_u of every model,
  // so model i accumulates d(l_u_i) once from each of the n objectives.
  const double unsup_scale =
      cfg.objective.lambda * (cfg.objective.shared_unlabeled ? static_cast<double>(n) : 1.0);
  std::vector<Gradients> grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.train_loss.push_back(total_objective(sup[i].loss, unsup_loss, i, cfg.objective));
    grads[i] = std::move(sup[i].grad);
    for (std::size_t k = 0; k < grads[i].size(); ++k) grads[i][k] += unsup_scale * unsup[i].grad[k];
  }

  const double lr = scheduled_lr(cfg.optimizer, step - 1, cfg.steps);
  for (std::size_t i = 0; i < n; ++i) {
    models[i].opt.learning_rate = lr;
    sgd_step(models[i].params, grads[i], models[i].opt);
  }

  m.mask_ratio = mask_ratio(decisions);
  for (const auto& d : decisions) ++m.source_counts[source_column(d.source.kind)];
  if (!unlabeled.hidden_labels.empty()) {
    for (std::size_t b = 0; b < ubatch; ++b) {
      if (!decisions[b].pseudo_label) continue;
      ++m.pseudo_present;
      if (*decisions[b].pseudo_label == unlabeled.hidden_labels[b]) ++m.pseudo_correct;
    }
    m.pseudo_acc = pseudo_label_accuracy(decisions, unlabeled.hidden_labels);
  }
  return m;
}

Evaluation evaluate(const ModelParams& params, const MaskedDataset& test) {
  if (test.size() == 0) throw ConfigError("empty test set");
  if (test.num_missing() != 0) throw ConfigError("test set must be fully observed");
  constexpr std::size_t kChunk = 1024;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const std::size_t end = std::min(test.size(), start + kChunk);
    std::vector<std::size_t> rows(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto probs = predict_proba(params, gather_features(test, rows));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const int y = EvaluationAccess::true_label(test, rows[r]);
      if (probs[r].argmax() == y) ++correct;
      loss -= std::log(probs[r][y]);
    }
  }
  const auto total = static_cast<double>(test.size());
  return {static_cast<double>(correct) / total, loss / total};
}

double pseudo_label_accuracy(std::span<const FusionDecision> decisions,
                             std::span<const int> hidden_true_labels) {
  if (decisions.size() != hidden_true_labels.size()) {
    throw ConfigError("decisions and hidden labels differ in length");
  }
  std::size_t present = 0, correct = 0;
  for (std::size_t b = 0; b < decisions.size(); ++b) {
    if (!decisions[b].pseudo_label) continue;
    ++present;
    if (*decisions[b].pseudo_label == hidden_true_labels[b]) ++correct;
  }
  return present == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(present);
}

TrainResult train(const TrainConfig& cfg, const MaskedDataset& ds, const MaskedDataset& test,
                  const std::filesystem::path& run_dir) {
  cfg.validate();
  const std::size_t n = cfg.num_models;
  const std::size_t batch = cfg.objective.batch_size;
  const std::size_t ubatch = cfg.objective.unlabeled_batch_size();
  if (ds.num_observed() == 0) throw ConfigError("training set has no observed labels");
  if (ds.num_missing() == 0) throw ConfigError("training set has no unlabeled items");
  if (batch > ds.num_observed()) {
    throw ConfigError("batch size B=" + std::to_string(batch) + " exceeds labeled count L=" +
                      std::to_string(ds.num_observed()));
  }
  if (test.size() == 0) throw ConfigError("empty test set");
  if (test.dim() != ds.dim() || test.num_classes() != ds.num_classes()) {
    throw ConfigError("test set shape differs from training set");
  }

  std::filesystem::create_directories(run_dir);
  write_key_values(cfg.to_key_values(), run_dir / "config.resolved");

  const Architecture arch =
      make_mlp(static_cast<int>(ds.dim()), cfg.hidden, ds.num_classes(), cfg.activation);
  std::vector<ModelState> models;
  models.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = cfg.seeds.models[i];
    ModelParams params = init_model(arch, s.init);
    OptState opt = make_opt_state(params, cfg.optimizer.learning_rate, cfg.optimizer.momentum,
                                  cfg.optimizer.weight_decay);
    models.push_back({std::move(params), std::move(opt),
                      AugmentStream(AugmentKind::weak, ds.modality(), s.augment_weak),
                      AugmentStream(AugmentKind::strong, ds.modality(), s.augment_strong)});
  }
  SharedStreams shared{AugmentStream(AugmentKind::weak, ds.modality(), cfg.seeds.unlabeled_weak),
                       cfg.seeds.fusion};

  const auto evaluate_all = [&](MetricsRow& row) {
    row.test_acc = 0.0;
    row.test_loss = 0.0;
    for (const auto& m : models) {
      const Evaluation e = evaluate(m.params, test);
      row.test_acc += e.accuracy / static_cast<double>(n);
      row.test_loss += e.loss / static_cast<double>(n);
    }
  };

  TrainResult result{RunMetrics(n), {}};
  {
    MetricsRow row;
    row.step = 0;
    evaluate_all(row);
    row.train_loss.assign(n, kNotAvailable);
    row.sources.fill(kNotAvailable);
    result.metrics.append(std::move(row));
  }

  if (!cfg.dry_run) {
    std::vector<IndexCycler> labeled_order;
    for (std::size_t i = 0; i < n; ++i) {
      labeled_order.emplace_back(ds.observed_indices(), cfg.seeds.models[i].data_order);
    }
    IndexCycler unlabeled_order(ds.missing_indices(), cfg.seeds.unlabeled_order);

    std::vector<double> loss_sum(n, 0.0);
    double mask_sum = 0.0;
    std::size_t present = 0, correct = 0, window = 0;
    std::array<double, kSourceColumns> source_sum{};

    for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
      std::vector<LabeledBatch> labeled(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto rows = labeled_order[i].next(batch);
        labeled[i].features = gather_features(ds, rows);
        for (std::size_t r : rows) labeled[i].labels.push_back(ds.observed_label(r));
      }
      UnlabeledBatch unlabeled;
      const auto urows = unlabeled_order.next(ubatch);
      unlabeled.features = gather_features(ds, urows);
      for (std::size_t r : urows) {
        unlabeled.items.push_back(ds.index(r));
        unlabeled.hidden_labels.push_back(EvaluationAccess::true_label(ds, r));
      }

      const bool dump = cfg.predictions_every > 0 && step % cfg.predictions_every == 0;
      PredictionTrace trace;
      const StepMetrics sm = train_step(models, labeled, unlabeled, cfg, shared, step, dump ? &trace : nullptr);
      if (dump) write_prediction_trace(trace, run_dir / ("predictions-step" + std::to_string(step) + ".csv"));

      for (std::size_t i = 0; i < n; ++i) loss_sum[i] += sm.train_loss[i];
      mask_sum += sm.mask_ratio;
      present += sm.pseudo_present;
      correct += sm.pseudo_correct;
      for (std::size_t s = 0; s < kSourceColumns; ++s) source_sum[s] += static_cast<double>(sm.source_counts[s]);
      ++window;

      if (step % cfg.eval_every == 0 || step == cfg.steps) {
        MetricsRow row;
        row.step = step;
        evaluate_all(row);
        const auto w = static_cast<double>(window);
        for (std::size_t i = 0; i < n; ++i) row.train_loss.push_back(loss_sum[i] / w);
        row.mask_ratio = mask_sum / w;
        row.pseudo_acc = present == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(present);
        for (std::size_t s = 0; s < kSourceColumns; ++s) row.sources[s] = source_sum[s] / w;
        result.metrics.append(std::move(row));

        loss_sum.assign(n, 0.0);
        mask_sum = 0.0;
        present = correct = window = 0;
        source_sum.fill(0.0);
      }
    }
    if (cfg.write_checkpoints) {
      for (std::size_t i = 0; i < n; ++i) {
        write_checkpoint(models[i].params, run_dir / ("ckpt-model" + std::to_string(i + 1) + "-step" +
                                                      std::to_string(cfg.steps)));
      }
    }
  }

  emit_csv(result.metrics, run_dir / "metrics.csv");
  emit_plot_columns(result.metrics, run_dir / "metrics.dat");
  for (auto& m : models) result.models.push_back(std::move(m.params));
  return result;
}

}  // namespace copseudo
