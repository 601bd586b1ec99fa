#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace copseudo {

inline constexpr double kNotAvailable = std::numeric_limits<double>::quiet_NaN();

// Source histogram columns, in CSV order.
enum SourceColumn { src_both = 0, src_conflict, src_own, src_consensus, src_none, kSourceColumns };

/// One evaluation row. Training-derived fields are NaN on the initial row
/// written before any step has run.
struct MetricsRow {
  std::uint64_t step = 0;
  double test_acc = 0.0;
  double test_loss = 0.0;
  std::vector<double> train_loss;  // one per model
  double mask_ratio = kNotAvailable;
  double pseudo_acc = kNotAvailable;
  std::array<double, kSourceColumns> sources{};
};

class RunMetrics {
 public:
  explicit RunMetrics(std::size_t num_models = 1) : num_models_(num_models) {}

  std::size_t num_models() const noexcept { return num_models_; }
  const std::vector<MetricsRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }

  // Steps must be strictly increasing; ratios in [0,1] or NaN.
  void append(MetricsRow row);

 private:
  std::size_t num_models_;
  std::vector<MetricsRow> rows_;
};

std::string metrics_header(std::size_t num_models);
// RFC-4180 quoting for fields containing a comma, quote or newline.
std::string csv_field(const std::string& text);
// 9 significant digits; NaN prints as "nan".
std::string format_metric(double v);

void emit_csv(const RunMetrics& metrics, const std::filesystem::path& path);
RunMetrics read_metrics_csv(const std::filesystem::path& path);
// Whitespace-separated columns with a '#' header, for gnuplot.
void emit_plot_columns(const RunMetrics& metrics, const std::filesystem::path& path);

struct RunComparison {
  std::uint64_t final_step = 0;
  std::size_t common_steps = 0;
  double final_acc_delta = 0.0;
  double final_mask_delta = 0.0;
  double best_acc_delta = 0.0;
  double best_mask_delta = 0.0;
};

/// Aligns both runs on their common steps. Final deltas are taken at the last
/// common step; best deltas compare each run's best value over those steps.
/// All deltas are treatment - baseline.
RunComparison compare_runs(const RunMetrics& baseline, const RunMetrics& treatment);

}  // namespace copseudo
