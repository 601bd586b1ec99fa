#include "copseudo/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "copseudo/errors.hpp"
#include "copseudo/rng.hpp"

namespace copseudo {

namespace {

Modality infer_modality(std::size_t dim) {
  return dim == kImagePixels ? Modality::image : Modality::vector;
}

// cos/sin of the angle 2*pi*k/n, exact on quarter turns.
std::pair<double, double> unit_circle_point(int k, int n) {
  const int q = 4 * k;
  if (q % n == 0) {
    switch ((q / n) % 4) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  const double angle = 2.0 * std::numbers::pi * k / n;
  return {std::cos(angle), std::sin(angle)};
}

}  // namespace

MaskedDataset::MaskedDataset(const std::vector<Sample>& samples,
                             std::vector<std::uint8_t> missing, int num_classes,
                             Modality modality)
    : missing_(std::move(missing)), num_classes_(num_classes), modality_(modality) {
  if (num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
  if (missing_.size() != samples.size()) {
    throw ConfigError("missing indicator length does not match sample count");
  }
  auto store = std::make_shared<Store>();
  store->dim = samples.empty() ? 0 : samples.front().features.size();
  if (modality == Modality::image && !samples.empty() && store->dim != kImagePixels) {
    throw ConfigError("image samples must have " + std::to_string(kImagePixels) + " values");
  }
  store->features.reserve(samples.size() * store->dim);
  store->labels.reserve(samples.size());
  store->ids.reserve(samples.size());
  for (const Sample& s : samples) {
    if (s.features.size() != store->dim) throw ConfigError("ragged sample features");
    if (s.true_label < 0 || s.true_label >= num_classes) {
      throw ConfigError("label " + std::to_string(s.true_label) + " out of range");
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) throw ConfigError("non-finite feature value");
      if (modality == Modality::image && (v < 0.0 || v > 1.0)) {
        throw ConfigError("image value outside [0,1]");
      }
      store->features.push_back(static_cast<float>(v));
    }
    store->labels.push_back(s.true_label);
    store->ids.push_back(s.index);
  }
  for (auto r : missing_) {
    if (r > 1) throw ConfigError("missing indicator must be 0 or 1");
  }
  store_ = std::move(store);
}

MaskedDataset MaskedDataset::all_observed(const std::vector<Sample>& samples, int num_classes,
                                          Modality modality) {
  return MaskedDataset(samples, std::vector<std::uint8_t>(samples.size(), 0), num_classes,
                       modality);
}

std::span<const float> MaskedDataset::features(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("sample index out of range");
  return std::span<const float>(store_->features).subspan(i * store_->dim, store_->dim);
}

std::vector<double> MaskedDataset::feature_vector(std::size_t i) const {
  const auto f = features(i);
  return {f.begin(), f.end()};
}

int MaskedDataset::observed_label(std::size_t i) const {
  if (is_missing(i)) {
    throw TaintError("label of sample " + std::to_string(index(i)) +
                     " is missing and must not be read by training code");
  }
  return store_->labels[i];
}

std::size_t MaskedDataset::num_observed() const noexcept {
  return static_cast<std::size_t>(std::count(missing_.begin(), missing_.end(), 0));
}

std::vector<std::size_t> MaskedDataset::observed_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (!missing_[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> MaskedDataset::missing_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (missing_[i]) out.push_back(i);
  return out;
}

MaskedDataset MaskedDataset::with_missing(std::vector<std::uint8_t> missing) const {
  if (missing.size() != size()) throw ConfigError("mask length does not match dataset");
  for (auto r : missing) {
    if (r > 1) throw ConfigError("missing indicator must be 0 or 1");
  }
  MaskedDataset out = *this;
  out.missing_ = std::move(missing);
  return out;
}

int EvaluationAccess::true_label(const MaskedDataset& ds, std::size_t i) {
  if (i >= ds.size()) throw std::out_of_range("sample index out of range");
  return ds.store_->labels[i];
}

std::vector<int> EvaluationAccess::true_labels(const MaskedDataset& ds) {
  return ds.store_ ? ds.store_->labels : std::vector<int>{};
}

void SyntheticSpec::validate() const {
  std::string err;
  if (num_classes < 2) err += " num_classes must be >= 2;";
  if (dim < 2) err += " dim must be >= 2;";
  if (samples_per_class < 1) err += " samples_per_class must be >= 1;";
  if (!(class_separation > 0.0)) err += " class_separation must be > 0;";
  if (!(noise_sigma >= 0.0)) err += " noise_sigma must be >= 0;";
  if (!err.empty()) throw ConfigError("invalid synthetic spec:" + err);
}

MaskedDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class);
  for (int c = 0; c < spec.num_classes; ++c) {
    const auto [cx, cy] = unit_circle_point(c, spec.num_classes);
    for (int k = 0; k < spec.samples_per_class; ++k) {
      Sample s;
      s.true_label = c;
      s.index = static_cast<std::int64_t>(samples.size());
      s.features.assign(spec.dim, 0.0);
      s.features[0] = spec.class_separation * cx;
      s.features[1] = spec.class_separation * cy;
      if (spec.noise_sigma > 0.0) {
        for (double& v : s.features) v += rng.normal(0.0, spec.noise_sigma);
      }
      samples.push_back(std::move(s));
    }
  }
  return MaskedDataset::all_observed(samples, spec.num_classes, Modality::vector);
}

Mnar geometric_retention(int num_classes, double p0, double gamma) {
  Mnar m;
  double p = p0;
  for (int c = 0; c < num_classes; ++c, p *= gamma) m.retention_prob_per_class.push_back(p);
  return m;
}

Mnar head_tail_retention(int num_classes, double head, double tail) {
  Mnar m;
  m.retention_prob_per_class.assign(num_classes, tail);
  if (num_classes > 0) m.retention_prob_per_class[0] = head;
  return m;
}

MaskedDataset apply_missingness(const MaskedDataset& ds, const MissingnessSpec& spec) {
  if (ds.num_missing() != 0) throw ConfigError("apply_missingness expects a fully observed dataset");
  Rng rng(spec.seed);
  const std::size_t n = ds.size();
  std::vector<std::uint8_t> missing(n, 1);

  if (const auto* mcar = std::get_if<Mcar>(&spec.protocol)) {
    if (mcar->num_labeled == 0 || mcar->num_labeled > n) {
      throw ConfigError("MCAR requires 0 < L <= N (L=" + std::to_string(mcar->num_labeled) +
                        ", N=" + std::to_string(n) + ")");
    }
    // Partial Fisher-Yates: the first L positions are a uniform L-subset.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < mcar->num_labeled; ++i) {
      const std::size_t j = i + rng.below(n - i);
      std::swap(order[i], order[j]);
      missing[order[i]] = 0;
    }
  } else {
    const auto& probs = std::get<Mnar>(spec.protocol).retention_prob_per_class;
    if (probs.size() != static_cast<std::size_t>(ds.num_classes())) {
      throw ConfigError("MNAR needs one retention probability per class");
    }
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("MNAR retention probability outside [0,1]");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int label = EvaluationAccess::true_label(ds, i);
      missing[i] = rng.bernoulli(probs[label]) ? 0 : 1;
    }
  }
  return ds.with_missing(std::move(missing));
}

MaskedDataset parse_cifar10_bytes(std::span<const std::uint8_t> bytes, std::int64_t first_index) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DataError("truncated record: length " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  std::vector<Sample> samples(count);
  for (std::size_t r = 0; r < count; ++r) {
    const auto rec = bytes.subspan(r * kCifarRecordBytes, kCifarRecordBytes);
    if (rec[0] >= kCifarClasses) {
      throw DataError("record " + std::to_string(r) + ": label byte " + std::to_string(rec[0]) +
                      " >= 10");
    }
    Sample& s = samples[r];
    s.true_label = rec[0];
    s.index = first_index + static_cast<std::int64_t>(r);
    s.features.resize(kImagePixels);
    for (std::size_t p = 0; p < kImagePixels; ++p) s.features[p] = rec[1 + p] / 255.0;
  }
  return MaskedDataset::all_observed(samples, kCifarClasses, Modality::image);
}

MaskedDataset parse_cifar10_file(const std::filesystem::path& file, std::int64_t first_index) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("missing file: " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_cifar10_bytes(bytes, first_index);
  } catch (const DataError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

MaskedDataset load_cifar10(const std::filesystem::path& dir, CifarSplit split) {
  std::vector<std::filesystem::path> files;
  if (split == CifarSplit::train) {
    for (int b = 1; b <= 5; ++b) files.push_back(dir / ("data_batch_" + std::to_string(b) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  std::vector<MaskedDataset> parts;
  std::int64_t next = 0;
  for (const auto& f : files) {
    parts.push_back(parse_cifar10_file(f, next));
    next += static_cast<std::int64_t>(parts.back().size());
  }
  return concatenate(parts);
}

std::vector<std::uint8_t> encode_cifar10_record(std::span<const float> pixels, int label) {
  if (pixels.size() != kImagePixels) throw ConfigError("CIFAR record needs 3072 pixels");
  if (label < 0 || label >= kCifarClasses) throw ConfigError("CIFAR label out of range");
  std::vector<std::uint8_t> out(kCifarRecordBytes);
  out[0] = static_cast<std::uint8_t>(label);
  for (std::size_t p = 0; p < kImagePixels; ++p) {
    const double v = std::clamp(static_cast<double>(pixels[p]), 0.0, 1.0);
    out[1 + p] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

MaskedDataset concatenate(const std::vector<MaskedDataset>& parts) {
  if (parts.empty()) throw ConfigError("nothing to concatenate");
  std::vector<Sample> samples;
  std::vector<std::uint8_t> missing;
  const auto& head = parts.front();
  for (const auto& p : parts) {
    if (p.num_classes() != head.num_classes() || p.dim() != head.dim() ||
        p.modality() != head.modality()) {
      throw ConfigError("cannot concatenate datasets of different shape");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      samples.push_back({p.feature_vector(i), EvaluationAccess::true_label(p, i), p.index(i)});
      missing.push_back(p.is_missing(i) ? 1 : 0);
    }
  }
  return MaskedDataset(samples, std::move(missing), head.num_classes(), head.modality());
}

void write_dataset(const MaskedDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "copseudo-ds v1 " << ds.size() << ' ' << ds.num_classes() << ' ' << ds.dim() << '\n';
  char buf[64];
  std::string line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line = std::to_string(ds.index(i));
    line += ds.is_missing(i) ? ",1," : ",0,";
    line += std::to_string(EvaluationAccess::true_label(ds, i));
    for (float v : ds.features(i)) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      line += ',';
      line.append(buf, res.ptr);
    }
    out << line << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw DataError("line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

MaskedDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  std::istringstream header(line);
  std::string magic, version;
  std::size_t n = 0, d = 0;
  int c = 0;
  if (!(header >> magic >> version >> n >> c >> d) || magic != "copseudo-ds" || version != "v1") {
    throw DataError(path.string() + ": bad header, expected 'copseudo-ds v1 N C d'");
  }
  std::vector<Sample> samples;
  std::vector<std::uint8_t> missing;
  samples.reserve(n);
  missing.reserve(n);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 3 + d) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(3 + d) + " fields");
    }
    Sample s;
    s.index = parse_number<std::int64_t>(fields[0], line_no);
    const int r = parse_number<int>(fields[1], line_no);
    if (r != 0 && r != 1) throw DataError("line " + std::to_string(line_no) + ": r must be 0 or 1");
    s.true_label = parse_number<int>(fields[2], line_no);
    s.features.reserve(d);
    for (std::size_t k = 0; k < d; ++k) s.features.push_back(parse_number<float>(fields[3 + k], line_no));
    samples.push_back(std::move(s));
    missing.push_back(static_cast<std::uint8_t>(r));
  }
  if (samples.size() != n) {
    throw DataError(path.string() + ": header says " + std::to_string(n) + " records, found " +
                    std::to_string(samples.size()));
  }
  try {
    return MaskedDataset(samples, std::move(missing), c, infer_modality(d));
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace copseudo
