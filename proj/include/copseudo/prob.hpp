#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace copseudo {

inline constexpr double kProbSumTolerance = 1e-9;

/// Per-class probability distribution from one model on one input.
/// Argmax ties resolve to the lowest class index.
class ProbVector {
 public:
  ProbVector() = default;
  // Throws ConfigError unless every entry is in [0,1] and they sum to 1.
  explicit ProbVector(std::vector<double> probs);
  ProbVector(std::initializer_list<double> probs) : ProbVector(std::vector<double>(probs)) {}

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  std::span<const double> values() const noexcept { return probs_; }

  double max() const noexcept { return probs_[argmax_]; }
  int argmax() const noexcept { return static_cast<int>(argmax_); }

 private:
  std::vector<double> probs_;
  std::size_t argmax_ = 0;
};

}  // namespace copseudo
