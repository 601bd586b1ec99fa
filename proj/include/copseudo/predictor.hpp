#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "copseudo/prob.hpp"

namespace copseudo {

enum class Activation { relu, tanh };

// Fully connected network: layers = {input, hidden..., classes}.
struct Architecture {
  std::vector<int> layers;
  Activation activation = Activation::relu;

  int input_dim() const { return layers.front(); }
  int num_classes() const { return layers.back(); }
  std::size_t param_count() const;
  void validate() const;
  // e.g. "relu:2-32-4"
  std::string describe() const;
  static Architecture parse(const std::string& text);

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

Architecture make_mlp(int input_dim, const std::vector<int>& hidden, int num_classes,
                      Activation activation = Activation::relu);

// Parameters of every layer in order: W (out x in, row-major) then b (out).
struct ModelParams {
  Architecture arch;
  std::vector<double> theta;

  std::size_t param_count() const noexcept { return theta.size(); }
};

using Gradients = std::vector<double>;

struct OptState {
  std::vector<double> momentum_buffer;
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t step = 0;
};

OptState make_opt_state(const ModelParams& params, double learning_rate, double momentum,
                        double weight_decay);

// Row-per-item feature batch.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Batch make_batch(const std::vector<std::vector<double>>& rows);

// Weights uniform in +-1/sqrt(fan_in), biases zero.
ModelParams init_model(const Architecture& arch, std::uint64_t seed);

// Row-wise logits; exposed for tests and evaluation.
Eigen::MatrixXd forward_logits(const ModelParams& params, const Batch& xs);

std::vector<ProbVector> predict_proba(const ModelParams& params, const Batch& xs);

struct LossAndGrad {
  double loss = 0.0;
  Gradients grad;
};

/// loss = (1/|xs|) * sum_b weights[b] * -log p_b[targets[b]], with exact
/// analytic gradients of that expression.
LossAndGrad loss_and_grad(const ModelParams& params, const Batch& xs, std::span<const int> targets,
                          std::span<const double> weights);

// buf <- m*buf + grad + wd*theta; theta <- theta - lr*buf.
void sgd_step(ModelParams& params, std::span<const double> grads, OptState& opt);

// `copseudo-ckpt v1` header, architecture line, then little-endian doubles.
void write_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams read_checkpoint(const std::filesystem::path& path);

}  // namespace copseudo
