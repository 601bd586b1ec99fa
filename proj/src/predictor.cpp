#include "copseudo/predictor.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "copseudo/errors.hpp"
#include "copseudo/rng.hpp"

namespace copseudo {

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ConfigError("empty probability vector");
  double sum = 0.0;
  for (std::size_t c = 0; c < probs_.size(); ++c) {
    const double p = probs_[c];
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probability outside [0,1]");
    sum += p;
    if (p > probs_[argmax_]) argmax_ = c;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    throw ConfigError("probabilities sum to " + std::to_string(sum) + ", not 1");
  }
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMatrix>;
using ConstBias = Eigen::Map<const Eigen::VectorXd>;

struct LayerView {
  std::size_t w_offset;
  std::size_t b_offset;
  int in;
  int out;
};

std::vector<LayerView> layer_views(const Architecture& arch) {
  std::vector<LayerView> views;
  std::size_t offset = 0;
  for (std::size_t l = 1; l < arch.layers.size(); ++l) {
    const int in = arch.layers[l - 1];
    const int out = arch.layers[l];
    views.push_back({offset, offset + static_cast<std::size_t>(in) * out, in, out});
    offset += static_cast<std::size_t>(in) * out + out;
  }
  return views;
}

void activate(Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Derivative of the activation expressed through its output.
Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& activated, Activation a) {
  if (a == Activation::relu) {
    return (activated.array() > 0.0).cast<double>().matrix();
  }
  return (1.0 - activated.array().square()).matrix();
}

void check_batch(const ModelParams& params, const Batch& xs) {
  if (xs.cols() != params.arch.input_dim()) {
    throw ConfigError("feature width " + std::to_string(xs.cols()) + " does not match input layer " +
                      std::to_string(params.arch.input_dim()));
  }
  if (!xs.allFinite()) throw ConfigError("non-finite input features");
}

// Returns activations of every layer; the last entry holds logits.
std::vector<Eigen::MatrixXd> forward_all(const ModelParams& params, const Batch& xs) {
  const auto views = layer_views(params.arch);
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(views.size() + 1);
  acts.emplace_back(xs);
  for (std::size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    ConstWeights w(params.theta.data() + v.w_offset, v.out, v.in);
    ConstBias b(params.theta.data() + v.b_offset, v.out);
    Eigen::MatrixXd z = acts.back() * w.transpose();
    z.rowwise() += b.transpose();
    if (l + 1 < views.size()) activate(z, params.arch.activation);
    acts.push_back(std::move(z));
  }
  return acts;
}

// Row-wise log-softmax with max subtraction.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r).array() -= m;
    const double lse = std::log(out.row(r).array().exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

}  // namespace

std::size_t Architecture::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < layers.size(); ++l) {
    n += static_cast<std::size_t>(layers[l - 1]) * layers[l] + layers[l];
  }
  return n;
}

void Architecture::validate() const {
  if (layers.size() < 2) throw ConfigError("architecture needs input and output layers");
  for (int w : layers) {
    if (w <= 0) throw ConfigError("layer sizes must be positive");
  }
  if (num_classes() < 2) throw ConfigError("output width must be at least 2 classes");
}

std::string Architecture::describe() const {
  std::string s = activation == Activation::relu ? "relu:" : "tanh:";
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (l) s += '-';
    s += std::to_string(layers[l]);
  }
  return s;
}

Architecture Architecture::parse(const std::string& text) {
  Architecture a;
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("bad architecture '" + text + "'");
  const std::string act = text.substr(0, colon);
  if (act == "relu") {
    a.activation = Activation::relu;
  } else if (act == "tanh") {
    a.activation = Activation::tanh;
  } else {
    throw ConfigError("unknown activation '" + act + "'");
  }
  std::istringstream in(text.substr(colon + 1));
  std::string part;
  while (std::getline(in, part, '-')) {
    try {
      a.layers.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw ConfigError("bad architecture '" + text + "'");
    }
  }
  a.validate();
  return a;
}

Architecture make_mlp(int input_dim, const std::vector<int>& hidden, int num_classes,
                      Activation activation) {
  Architecture a;
  a.activation = activation;
  a.layers.push_back(input_dim);
  a.layers.insert(a.layers.end(), hidden.begin(), hidden.end());
  a.layers.push_back(num_classes);
  a.validate();
  return a;
}

OptState make_opt_state(const ModelParams& params, double learning_rate, double momentum,
                        double weight_decay) {
  OptState s;
  s.momentum_buffer.assign(params.theta.size(), 0.0);
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

Batch make_batch(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Batch(0, 0);
  Batch b(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw ConfigError("ragged batch rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) b(r, c) = rows[r][c];
  }
  return b;
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  p.theta.assign(arch.param_count(), 0.0);
  Rng rng(seed);
  for (const auto& v : layer_views(arch)) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(v.in));
    for (std::size_t k = 0; k < static_cast<std::size_t>(v.in) * v.out; ++k) {
      p.theta[v.w_offset + k] = rng.uniform(-scale, scale);
    }
  }
  return p;
}

Eigen::MatrixXd forward_logits(const ModelParams& params, const Batch& xs) {
  check_batch(params, xs);
  return forward_all(params, xs).back();
}

std::vector<ProbVector> predict_proba(const ModelParams& params, const Batch& xs) {
  const Eigen::MatrixXd logp = log_softmax(forward_logits(params, xs));
  std::vector<ProbVector> out;
  out.reserve(static_cast<std::size_t>(logp.rows()));
  for (Eigen::Index r = 0; r < logp.rows(); ++r) {
    std::vector<double> p(static_cast<std::size_t>(logp.cols()));
    for (Eigen::Index c = 0; c < logp.cols(); ++c) p[c] = std::exp(logp(r, c));
    out.emplace_back(std::move(p));
  }
  return out;
}

LossAndGrad loss_and_grad(const ModelParams& params, const Batch& xs, std::span<const int> targets,
                          std::span<const double> weights) {
  const auto n = static_cast<std::size_t>(xs.rows());
  if (n == 0) throw ConfigError("empty batch");
  if (targets.size() != n || weights.size() != n) {
    throw ConfigError("batch, targets and weights must have equal length");
  }
  check_batch(params, xs);
  const int classes = params.arch.num_classes();
  for (std::size_t b = 0; b < n; ++b) {
    if (targets[b] < 0 || targets[b] >= classes) throw ConfigError("target class out of range");
    if (!(weights[b] >= 0.0)) throw ConfigError("weights must be non-negative");
  }

  const auto views = layer_views(params.arch);
  const auto acts = forward_all(params, xs);
  const Eigen::MatrixXd logp = log_softmax(acts.back());

  LossAndGrad out;
  out.grad.assign(params.theta.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);

  // d loss / d logits = w_b/n * (softmax - onehot)
  Eigen::MatrixXd delta = logp.array().exp().matrix();
  for (std::size_t b = 0; b < n; ++b) {
    out.loss -= weights[b] * logp(b, targets[b]);
    delta(b, targets[b]) -= 1.0;
    delta.row(b) *= weights[b] * inv_n;
  }
  out.loss *= inv_n;

  for (std::size_t l = views.size(); l-- > 0;) {
    const auto& v = views[l];
    Eigen::Map<RowMatrix> gw(out.grad.data() + v.w_offset, v.out, v.in);
    Eigen::Map<Eigen::VectorXd> gb(out.grad.data() + v.b_offset, v.out);
    gw = delta.transpose() * acts[l];
    gb = delta.colwise().sum().transpose();
    if (l > 0) {
      ConstWeights w(params.theta.data() + v.w_offset, v.out, v.in);
      Eigen::MatrixXd upstream = delta * w;
      delta = upstream.cwiseProduct(activation_grad(acts[l], params.arch.activation));
    }
  }
  return out;
}

void sgd_step(ModelParams& params, std::span<const double> grads, OptState& opt) {
  if (grads.size() != params.theta.size() || opt.momentum_buffer.size() != params.theta.size()) {
    throw ConfigError("gradient or momentum shape does not match parameters");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient");
  }
  for (std::size_t k = 0; k < params.theta.size(); ++k) {
    double& buf = opt.momentum_buffer[k];
    buf = opt.momentum * buf + grads[k] + opt.weight_decay * params.theta[k];
    params.theta[k] -= opt.learning_rate * buf;
  }
  ++opt.step;
}

void write_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << "copseudo-ckpt v1\n" << params.arch.describe() << ' ' << params.theta.size() << '\n';
  for (double v : params.theta) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
    out.write(bytes, 8);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

ModelParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing checkpoint " + path.string());
  std::string magic, arch_line;
  std::getline(in, magic);
  std::getline(in, arch_line);
  if (magic != "copseudo-ckpt v1") throw DataError(path.string() + ": not a copseudo checkpoint");
  std::istringstream header(arch_line);
  std::string arch_text;
  std::size_t count = 0;
  if (!(header >> arch_text >> count)) throw DataError(path.string() + ": bad architecture line");
  ModelParams p;
  p.arch = Architecture::parse(arch_text);
  if (count != p.arch.param_count()) throw DataError(path.string() + ": parameter count mismatch");
  p.theta.resize(count);
  for (double& v : p.theta) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError(path.string() + ": truncated");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
    v = std::bit_cast<double>(bits);
  }
  return p;
}

}  // namespace copseudo
