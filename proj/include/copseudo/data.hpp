#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace copseudo {

enum class Modality { vector, image };

// CIFAR-10 geometry: 3 channel planes of 32x32, row-major.
inline constexpr int kImageChannels = 3;
inline constexpr int kImageSide = 32;
inline constexpr std::size_t kImagePixels = kImageChannels * kImageSide * kImageSide;
inline constexpr std::size_t kCifarRecordBytes = 1 + kImagePixels;
inline constexpr int kCifarClasses = 10;

struct Sample {
  std::vector<double> features;
  int true_label = 0;
  std::int64_t index = 0;
};

/// Samples with a per-sample missing-label indicator.
///
/// `missing[i] == 1` means the label of sample i is unobserved. Training code
/// reads labels only through `observed_label`, which throws `TaintError` on a
/// missing item; evaluation code goes through `EvaluationAccess`.
/// Feature storage is shared between copies and never mutated.
class MaskedDataset {
 public:
  MaskedDataset() = default;
  MaskedDataset(const std::vector<Sample>& samples, std::vector<std::uint8_t> missing,
                int num_classes, Modality modality);

  static MaskedDataset all_observed(const std::vector<Sample>& samples, int num_classes,
                                    Modality modality);

  std::size_t size() const noexcept { return missing_.size(); }
  std::size_t dim() const noexcept { return store_ ? store_->dim : 0; }
  int num_classes() const noexcept { return num_classes_; }
  Modality modality() const noexcept { return modality_; }

  std::span<const float> features(std::size_t i) const;
  std::vector<double> feature_vector(std::size_t i) const;
  std::int64_t index(std::size_t i) const { return store_->ids.at(i); }

  bool is_missing(std::size_t i) const { return missing_.at(i) != 0; }
  const std::vector<std::uint8_t>& missing() const noexcept { return missing_; }
  // Throws TaintError when the label of item i is missing.
  int observed_label(std::size_t i) const;

  std::size_t num_observed() const noexcept;
  std::size_t num_missing() const noexcept { return size() - num_observed(); }
  std::vector<std::size_t> observed_indices() const;
  std::vector<std::size_t> missing_indices() const;

  // Same samples, different mask.
  MaskedDataset with_missing(std::vector<std::uint8_t> missing) const;

 private:
  friend struct EvaluationAccess;

  struct Store {
    std::size_t dim = 0;
    std::vector<float> features;
    std::vector<int> labels;
    std::vector<std::int64_t> ids;
  };

  std::shared_ptr<const Store> store_;
  std::vector<std::uint8_t> missing_;
  int num_classes_ = 0;
  Modality modality_ = Modality::vector;
};

// Taint-exempt label access for evaluation and pseudo-label scoring only.
struct EvaluationAccess {
  static int true_label(const MaskedDataset& ds, std::size_t i);
  static std::vector<int> true_labels(const MaskedDataset& ds);
};

struct SyntheticSpec {
  int num_classes = 4;
  int dim = 2;
  int samples_per_class = 250;
  double class_separation = 3.0;
  double noise_sigma = 0.5;

  void validate() const;
};

// Class c is an isotropic Gaussian around a point at angle 2*pi*c/C on a circle
// of radius `class_separation` in the first two dimensions. Samples are
// ordered class-major.
MaskedDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct Mcar {
  std::size_t num_labeled = 0;
};
struct Mnar {
  std::vector<double> retention_prob_per_class;
};

struct MissingnessSpec {
  std::variant<Mcar, Mnar> protocol;
  std::uint64_t seed = 0;
};

// Long-tail retention profile p_c = p0 * gamma^c.
Mnar geometric_retention(int num_classes, double p0, double gamma);
// p_0 = head, every other class = tail.
Mnar head_tail_retention(int num_classes, double head, double tail);

MaskedDataset apply_missingness(const MaskedDataset& ds, const MissingnessSpec& spec);

// CIFAR-10 binary batches.
enum class CifarSplit { train, test };

MaskedDataset parse_cifar10_bytes(std::span<const std::uint8_t> bytes,
                                  std::int64_t first_index = 0);
MaskedDataset parse_cifar10_file(const std::filesystem::path& file,
                                 std::int64_t first_index = 0);
MaskedDataset load_cifar10(const std::filesystem::path& dir, CifarSplit split);
// Encodes one image sample as a 3073-byte record (pixels rounded from [0,1]).
std::vector<std::uint8_t> encode_cifar10_record(std::span<const float> pixels, int label);

// Concatenates datasets with equal C, dim and modality.
MaskedDataset concatenate(const std::vector<MaskedDataset>& parts);

// Text container: header `copseudo-ds v1 N C d`, then `index,r,label,f0,...`.
void write_dataset(const MaskedDataset& ds, const std::filesystem::path& path);
MaskedDataset read_dataset(const std::filesystem::path& path);

}  // namespace copseudo
