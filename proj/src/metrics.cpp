#include "copseudo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "copseudo/errors.hpp"

namespace copseudo {

namespace {

bool valid_ratio(double v) { return std::isnan(v) || (v >= 0.0 && v <= 1.0); }

// Splits one CSV record, honoring double-quoted fields.
std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  return out;
}

double parse_metric(const std::string& s, std::size_t line_no) {
  if (s == "nan") return kNotAvailable;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError("metrics line " + std::to_string(line_no) + ": bad value '" + s + "'");
  }
  return v;
}

// Largest non-NaN value, or NaN if none.
template <typename Get>
double best_of(const std::vector<const MetricsRow*>& rows, Get get) {
  double best = kNotAvailable;
  for (const auto* r : rows) {
    const double v = get(*r);
    if (!std::isnan(v) && (std::isnan(best) || v > best)) best = v;
  }
  return best;
}

}  // namespace

void RunMetrics::append(MetricsRow row) {
  if (!rows_.empty() && row.step <= rows_.back().step) {
    throw std::logic_error("metrics steps must be strictly increasing");
  }
  if (row.train_loss.size() != num_models_) {
    throw std::logic_error("metrics row has wrong number of train losses");
  }
  if (!valid_ratio(row.test_acc) || !valid_ratio(row.mask_ratio) || !valid_ratio(row.pseudo_acc)) {
    throw std::logic_error("metrics ratio outside [0,1]");
  }
  rows_.push_back(std::move(row));
}

std::string metrics_header(std::size_t num_models) {
  std::string h = "step,test_acc,test_loss";
  for (std::size_t m = 1; m <= num_models; ++m) h += ",train_loss_m" + std::to_string(m);
  h += ",mask_ratio,pseudo_acc,src_both,src_conflict,src_own,src_consensus,src_none";
  return h;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void emit_csv(const RunMetrics& metrics, const std::filesystem::path& path) {
  if (metrics.empty()) throw std::runtime_error("no rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << metrics_header(metrics.num_models()) << '\n';
  for (const auto& r : metrics.rows()) {
    out << r.step << ',' << format_metric(r.test_acc) << ',' << format_metric(r.test_loss);
    for (double l : r.train_loss) out << ',' << format_metric(l);
    out << ',' << format_metric(r.mask_ratio) << ',' << format_metric(r.pseudo_acc);
    for (double s : r.sources) out << ',' << format_metric(s);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RunMetrics read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing metrics file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty metrics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = parse_csv_line(line);
  std::size_t models = 0;
  for (const auto& h : header)
    if (h.rfind("train_loss_m", 0) == 0) ++models;
  if (models == 0 || line != metrics_header(models)) {
    throw DataError(path.string() + ": unexpected metrics header");
  }
  RunMetrics metrics(models);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": wrong field count");
    }
    MetricsRow r;
    r.step = static_cast<std::uint64_t>(parse_metric(f[0], line_no));
    r.test_acc = parse_metric(f[1], line_no);
    r.test_loss = parse_metric(f[2], line_no);
    for (std::size_t m = 0; m < models; ++m) r.train_loss.push_back(parse_metric(f[3 + m], line_no));
    r.mask_ratio = parse_metric(f[3 + models], line_no);
    r.pseudo_acc = parse_metric(f[4 + models], line_no);
    for (std::size_t s = 0; s < kSourceColumns; ++s) r.sources[s] = parse_metric(f[5 + models + s], line_no);
    try {
      metrics.append(std::move(r));
    } catch (const std::logic_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return metrics;
}

void emit_plot_columns(const RunMetrics& metrics, const std::filesystem::path& path) {
  if (metrics.empty()) throw std::runtime_error("no rows");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::string header = metrics_header(metrics.num_models());
  std::replace(header.begin(), header.end(), ',', ' ');
  out << "# " << header << '\n';
  for (const auto& r : metrics.rows()) {
    out << r.step << ' ' << format_metric(r.test_acc) << ' ' << format_metric(r.test_loss);
    for (double l : r.train_loss) out << ' ' << format_metric(l);
    out << ' ' << format_metric(r.mask_ratio) << ' ' << format_metric(r.pseudo_acc);
    for (double s : r.sources) out << ' ' << format_metric(s);
    out << '\n';
  }
}

RunComparison compare_runs(const RunMetrics& baseline, const RunMetrics& treatment) {
  std::map<std::uint64_t, const MetricsRow*> base_by_step;
  for (const auto& r : baseline.rows()) base_by_step[r.step] = &r;
  std::vector<const MetricsRow*> base_common, treat_common;
  for (const auto& r : treatment.rows()) {
    if (auto it = base_by_step.find(r.step); it != base_by_step.end()) {
      base_common.push_back(it->second);
      treat_common.push_back(&r);
    }
  }
  if (base_common.empty()) throw DataError("runs share no common steps");

  RunComparison out;
  out.common_steps = base_common.size();
  out.final_step = base_common.back()->step;
  out.final_acc_delta = treat_common.back()->test_acc - base_common.back()->test_acc;
  out.final_mask_delta = treat_common.back()->mask_ratio - base_common.back()->mask_ratio;
  const auto acc = [](const MetricsRow& r) { return r.test_acc; };
  const auto mask = [](const MetricsRow& r) { return r.mask_ratio; };
  out.best_acc_delta = best_of(treat_common, acc) - best_of(base_common, acc);
  out.best_mask_delta = best_of(treat_common, mask) - best_of(base_common, mask);
  return out;
}

}  // namespace copseudo
