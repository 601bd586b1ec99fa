#include "copseudo/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "copseudo/errors.hpp"

namespace copseudo {

std::string FusionSource::to_string() const {
  switch (kind) {
    case SourceKind::both_confident_agree: return "both";
    case SourceKind::conflict_coin_flip: return "conflict:" + std::to_string(detail);
    case SourceKind::own_confident: return "own:" + std::to_string(detail);
    case SourceKind::consensus: return "consensus:" + std::to_string(detail);
    case SourceKind::none: return "none";
  }
  return "none";
}

FusionSource FusionSource::parse(const std::string& text) {
  if (text == "both") return {SourceKind::both_confident_agree, 0};
  if (text == "none") return {SourceKind::none, 0};
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    int detail = 0;
    const auto tail = std::string_view(text).substr(colon + 1);
    const auto res = std::from_chars(tail.data(), tail.data() + tail.size(), detail);
    if (res.ec == std::errc() && res.ptr == tail.data() + tail.size()) {
      if (head == "conflict") return {SourceKind::conflict_coin_flip, detail};
      if (head == "own") return {SourceKind::own_confident, detail};
      if (head == "consensus") return {SourceKind::consensus, detail};
    }
  }
  throw ConfigError("unknown fusion source '" + text + "'");
}

void FusionConfig::validate() const {
  std::string err;
  if (!(tau > 0.0 && tau <= 1.0)) err += " tau must be in (0,1];";
  if (!(w >= 0.0) || !std::isfinite(w)) err += " w must be >= 0;";
  if (num_models < 1 || (num_models < 2 && !single_model_mode)) {
    err += " at least 2 models required unless single_model_mode;";
  }
  if (!single_model_mode && num_models >= 2 && tau_cascade.size() != num_models - 1) {
    err += " tau cascade needs " + std::to_string(num_models - 1) + " thresholds, got " +
           std::to_string(tau_cascade.size()) + ";";
  }
  double prev = tau;
  for (std::size_t k = 0; k < tau_cascade.size(); ++k) {
    const double t = tau_cascade[k];
    if (!(t > 0.0)) err += " cascade thresholds must be > 0;";
    if (k == 0 ? !(t < prev) : !(t <= prev)) {
      err += k == 0 ? " tau_2 must be < tau;" : " tau cascade must be non-increasing;";
    }
    prev = t;
  }
  if (!err.empty()) throw ConfigError("invalid fusion config:" + err);
}

std::vector<double> FusionConfig::default_cascade(std::size_t num_models) {
  if (num_models == 2) return {0.75};
  if (num_models == 3) return {0.85, 0.75};
  return {};
}

namespace {

void check_inputs(std::span<const ProbVector> qs, const FusionConfig& cfg) {
  if (qs.size() != cfg.num_models) {
    throw ConfigError("expected " + std::to_string(cfg.num_models) + " prediction vectors, got " +
                      std::to_string(qs.size()));
  }
  for (const auto& q : qs) {
    if (q.size() == 0 || q.size() != qs.front().size()) {
      throw ConfigError("prediction vectors must be non-empty and of equal length");
    }
  }
}

// Index into `count` choices from one uniform draw.
std::size_t pick_uniform(Rng& stream, std::size_t count) {
  const auto k = static_cast<std::size_t>(stream.uniform() * static_cast<double>(count));
  return std::min(k, count - 1);
}

FusionDecision empty_decision(std::size_t n) {
  FusionDecision d;
  d.masks.assign(n, 0.0);
  d.targets.assign(n, std::nullopt);
  return d;
}

// Every model with a positive mask trains toward the pseudo-label.
void fill_targets(FusionDecision& d) {
  for (std::size_t i = 0; i < d.masks.size(); ++i) {
    d.targets[i] = d.masks[i] > 0.0 ? d.pseudo_label : std::nullopt;
  }
}

FusionDecision fuse_single_model(std::span<const ProbVector> qs, const FusionConfig& cfg) {
  FusionDecision d = empty_decision(qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (qs[i].max() > cfg.tau) {
      d.masks[i] = cfg.w;
      d.targets[i] = qs[i].argmax();
      if (!d.pseudo_label) {
        d.pseudo_label = qs[i].argmax();
        d.source = {SourceKind::own_confident, static_cast<int>(i) + 1};
      }
    }
  }
  return d;
}

}  // namespace

FusionDecision fuse_pair(const ProbVector& q1, const ProbVector& q2, const FusionConfig& cfg,
                         Rng& stream) {
  const ProbVector qs[2] = {q1, q2};
  check_inputs(qs, cfg);
  if (cfg.single_model_mode) return fuse_single_model(qs, cfg);
  if (cfg.tau_cascade.empty()) throw ConfigError("fuse_pair needs a lower threshold tau_2");

  const double p1 = q1.max(), p2 = q2.max();
  const int c1 = q1.argmax(), c2 = q2.argmax();
  const double tau = cfg.tau, tau2 = cfg.tau_cascade.front();
  const bool conf1 = p1 > tau, conf2 = p2 > tau;

  FusionDecision d = empty_decision(2);
  if (conf1 && conf2) {
    d.masks = {cfg.w, cfg.w};
    if (c1 == c2) {
      d.pseudo_label = c1;
      d.source = {SourceKind::both_confident_agree, 0};
    } else if (cfg.conflict_drop) {
      d.masks = {0.0, 0.0};
      d.source = {SourceKind::conflict_coin_flip, 0};
    } else {
      const int winner = stream.uniform() < 0.5 ? 1 : 2;
      d.pseudo_label = winner == 1 ? c1 : c2;
      d.source = {SourceKind::conflict_coin_flip, winner};
    }
  } else if (conf1 || conf2) {
    const int own = conf1 ? 1 : 2;
    d.pseudo_label = conf1 ? c1 : c2;
    d.masks = conf1 ? std::vector<double>{cfg.w, 1.0} : std::vector<double>{1.0, cfg.w};
    d.source = {SourceKind::own_confident, own};
  } else if (p1 > tau2 && p2 > tau2 && c1 == c2) {
    d.pseudo_label = c1;
    d.masks = {1.0, 1.0};
    d.source = {SourceKind::consensus, 2};
  }
  fill_targets(d);
  return d;
}

FusionDecision fuse_cascade(std::span<const ProbVector> qs, const FusionConfig& cfg, Rng& stream) {
  check_inputs(qs, cfg);
  if (cfg.single_model_mode) return fuse_single_model(qs, cfg);
  const std::size_t n = qs.size();
  if (cfg.tau_cascade.size() != n - 1) throw ConfigError("tau cascade length must be n-1");

  FusionDecision d = empty_decision(n);

  // Level 1: own-confident models.
  std::vector<int> labels;         // distinct candidate labels, by first model
  std::vector<int> first_model;    // 1-based
  std::size_t confident = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (qs[i].max() > cfg.tau) {
      ++confident;
      const int c = qs[i].argmax();
      if (std::find(labels.begin(), labels.end(), c) == labels.end()) {
        labels.push_back(c);
        first_model.push_back(static_cast<int>(i) + 1);
      }
    }
  }
  if (confident > 0) {
    for (std::size_t i = 0; i < n; ++i) d.masks[i] = qs[i].max() > cfg.tau ? cfg.w : 1.0;
    if (labels.size() == 1) {
      d.pseudo_label = labels.front();
      d.source = confident >= 2 ? FusionSource{SourceKind::both_confident_agree, 0}
                                : FusionSource{SourceKind::own_confident, first_model.front()};
    } else if (cfg.conflict_drop) {
      d.masks.assign(n, 0.0);
      d.source = {SourceKind::conflict_coin_flip, 0};
    } else {
      const std::size_t k = pick_uniform(stream, labels.size());
      d.pseudo_label = labels[k];
      d.source = {SourceKind::conflict_coin_flip, first_model[k]};
    }
    fill_targets(d);
    return d;
  }

  // Levels 2..n: k models above tau_k agreeing on a class.
  for (std::size_t level = 2; level <= n; ++level) {
    const double threshold = cfg.tau_cascade[level - 2];
    std::map<int, std::size_t> votes;
    std::vector<int> order;
    for (std::size_t i = 0; i < n; ++i) {
      if (qs[i].max() > threshold) {
        const int c = qs[i].argmax();
        if (votes[c]++ == 0) order.push_back(c);
      }
    }
    std::vector<int> candidates;
    for (int c : order)
      if (votes[c] >= level) candidates.push_back(c);
    if (candidates.empty()) continue;
    d.pseudo_label = candidates.size() == 1 ? candidates.front()
                                            : candidates[pick_uniform(stream, candidates.size())];
    d.masks.assign(n, 1.0);
    d.source = {SourceKind::consensus, static_cast<int>(level)};
    fill_targets(d);
    return d;
  }
  return d;
}

FusionDecision fuse(std::span<const ProbVector> qs, const FusionConfig& cfg, Rng& stream) {
  if (cfg.single_model_mode) {
    check_inputs(qs, cfg);
    return fuse_single_model(qs, cfg);
  }
  if (qs.size() == 2) return fuse_pair(qs[0], qs[1], cfg, stream);
  return fuse_cascade(qs, cfg, stream);
}

std::uint64_t fusion_step_seed(std::uint64_t fusion_seed, std::uint64_t step) {
  return derive_seed(fusion_seed, step);
}

Rng fusion_item_stream(std::uint64_t fusion_seed, std::uint64_t step, std::uint64_t item) {
  return Rng(fusion_step_seed(fusion_seed, step)).split(item);
}

DebiasSubset select_debias_subset(const ModelPredictions& preds, double epsilon) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (preds.empty()) throw ConfigError("no model predictions");
  const std::size_t items = preds.front().size();
  for (const auto& m : preds) {
    if (m.size() != items) throw ConfigError("ragged prediction sets: models disagree on item count");
  }
  DebiasSubset out;
  out.agreement.resize(items, 0.0);
  for (std::size_t t = 0; t < items; ++t) {
    bool same_argmax = true;
    double dist = 0.0;
    for (std::size_t a = 0; a < preds.size(); ++a) {
      const ProbVector& qa = preds[a][t];
      if (qa.size() != preds.front()[t].size()) throw ConfigError("ragged prediction sets: class count");
      if (qa.argmax() != preds.front()[t].argmax()) same_argmax = false;
      for (std::size_t b = a + 1; b < preds.size(); ++b) {
        const ProbVector& qb = preds[b][t];
        for (std::size_t c = 0; c < qa.size(); ++c) dist = std::max(dist, std::abs(qa[c] - qb[c]));
      }
    }
    out.agreement[t] = dist;
    if (same_argmax && dist <= epsilon + kDebiasBoundaryTolerance) out.selected.push_back(t);
  }
  return out;
}

double mask_ratio(std::span<const FusionDecision> decisions) {
  if (decisions.empty()) throw ConfigError("mask_ratio of an empty decision list");
  const auto present = std::count_if(decisions.begin(), decisions.end(),
                                     [](const FusionDecision& d) { return d.reliable(); });
  return static_cast<double>(present) / static_cast<double>(decisions.size());
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto comma = line.find(',');
    out.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) return out;
    line.remove_prefix(comma + 1);
  }
}

template <typename T>
T field_number(std::string_view f, std::size_t line_no, const std::string& file) {
  T value{};
  const auto res = std::from_chars(f.data(), f.data() + f.size(), value);
  if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
    throw DataError(file + ":" + std::to_string(line_no) + ": bad number '" + std::string(f) + "'");
  }
  return value;
}

}  // namespace

PredictionTrace read_prediction_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  const std::string file = path.string();
  std::string line;
  std::size_t line_no = 0;
  std::size_t classes = 0;
  PredictionTrace trace;
  std::map<std::int64_t, std::size_t> slot;
  std::vector<std::map<int, ProbVector>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (line_no == 1 && fields.front() == "item") {
      if (fields.size() < 4 || fields[1] != "model") {
        throw DataError(file + ":1: header must be item,model,p0..p{C-1}");
      }
      classes = fields.size() - 2;
      continue;
    }
    if (fields.size() < 4 || (classes != 0 && fields.size() != classes + 2)) {
      throw DataError(file + ":" + std::to_string(line_no) + ": wrong number of fields");
    }
    classes = fields.size() - 2;
    const auto item = field_number<std::int64_t>(fields[0], line_no, file);
    const auto model = field_number<int>(fields[1], line_no, file);
    if (model < 1) throw DataError(file + ":" + std::to_string(line_no) + ": model ids are 1-based");
    std::vector<double> p;
    for (std::size_t c = 0; c < classes; ++c) p.push_back(field_number<double>(fields[2 + c], line_no, file));
    auto [it, inserted] = slot.try_emplace(item, rows.size());
    if (inserted) {
      rows.emplace_back();
      trace.items.push_back(item);
    }
    try {
      if (!rows[it->second].try_emplace(model, ProbVector(std::move(p))).second) {
        throw DataError(file + ":" + std::to_string(line_no) + ": duplicate (item, model)");
      }
    } catch (const ConfigError& e) {
      throw DataError(file + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (rows.empty()) throw DataError(file + ": no items");
  const std::size_t n = rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != n || rows[r].rbegin()->first != static_cast<int>(n)) {
      throw DataError(file + ": item " + std::to_string(trace.items[r]) +
                      " does not have predictions from models 1.." + std::to_string(n));
    }
    std::vector<ProbVector> per_model;
    for (auto& [m, q] : rows[r]) per_model.push_back(q);
    trace.probs.push_back(std::move(per_model));
  }
  return trace;
}

void write_prediction_trace(const PredictionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (trace.probs.empty()) return;
  const std::size_t classes = trace.probs.front().front().size();
  out << "item,model";
  for (std::size_t c = 0; c < classes; ++c) out << ",p" << c;
  out << '\n';
  for (std::size_t r = 0; r < trace.items.size(); ++r) {
    for (std::size_t m = 0; m < trace.probs[r].size(); ++m) {
      out << trace.items[r] << ',' << (m + 1);
      for (double p : trace.probs[r][m].values()) out << ',' << format_double(p);
      out << '\n';
    }
  }
}

void write_decision_trace(std::span<const std::int64_t> items,
                          std::span<const FusionDecision> decisions, std::size_t num_models,
                          std::ostream& out) {
  out << "item,pseudo_label,source";
  for (std::size_t m = 1; m <= num_models; ++m) out << ",mask_" << m;
  out << '\n';
  for (std::size_t r = 0; r < decisions.size(); ++r) {
    const auto& d = decisions[r];
    out << items[r] << ',';
    if (d.pseudo_label) out << *d.pseudo_label;
    out << ',' << d.source.to_string();
    for (double m : d.masks) out << ',' << format_double(m);
    out << '\n';
  }
}

std::vector<FusionDecision> fuse_trace(const PredictionTrace& trace, const FusionConfig& cfg,
                                       std::uint64_t seed) {
  if (trace.items.empty()) throw DataError("no items");
  cfg.validate();
  const Rng root(seed);
  std::vector<FusionDecision> out;
  out.reserve(trace.items.size());
  for (std::size_t r = 0; r < trace.items.size(); ++r) {
    Rng stream = root.split(static_cast<std::uint64_t>(trace.items[r]));
    out.push_back(fuse(trace.probs[r], cfg, stream));
  }
  return out;
}

}  // namespace copseudo
