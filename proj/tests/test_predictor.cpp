#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "copseudo/errors.hpp"
#include "copseudo/predictor.hpp"
#include "copseudo/rng.hpp"
#include "oracles.hpp"

using namespace copseudo;

namespace {

Batch random_batch(Rng& rng, int rows, int cols) {
  Batch b(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) b(r, c) = rng.normal();
  return b;
}

std::vector<std::vector<double>> to_rows(const Batch& b) {
  std::vector<std::vector<double>> rows(b.rows(), std::vector<double>(b.cols()));
  for (int r = 0; r < b.rows(); ++r)
    for (int c = 0; c < b.cols(); ++c) rows[r][c] = b(r, c);
  return rows;
}

}  // namespace

TEST_CASE("parameter counts follow layer shapes") {
  CHECK(init_model(make_mlp(2, {32}, 4), 1).param_count() == 228);
  CHECK(init_model(make_mlp(3072, {64}, 10), 3).param_count() == 197322);
  CHECK(make_mlp(5, {7, 3}, 2).param_count() == 5 * 7 + 7 + 7 * 3 + 3 + 3 * 2 + 2);
}

TEST_CASE("init is deterministic, biases zero, weights within 1/sqrt(fan_in)") {
  const auto arch = make_mlp(4, {8}, 3);
  const auto a = init_model(arch, 9);
  CHECK(a.theta == init_model(arch, 9).theta);
  CHECK(a.theta != init_model(arch, 10).theta);
  for (std::size_t k = 0; k < 32; ++k) CHECK(std::abs(a.theta[k]) <= 0.5);
  for (std::size_t k = 32; k < 40; ++k) CHECK(a.theta[k] == 0.0);
}

TEST_CASE("invalid architectures are rejected") {
  CHECK_THROWS_AS(make_mlp(0, {4}, 3), ConfigError);
  CHECK_THROWS_AS(make_mlp(2, {0}, 3), ConfigError);
  CHECK_THROWS_AS(make_mlp(2, {4}, 1), ConfigError);
  CHECK_THROWS_AS(Architecture::parse("sigmoid:2-3"), ConfigError);
  CHECK(Architecture::parse("tanh:2-16-4") == make_mlp(2, {16}, 4, Activation::tanh));
}

TEST_CASE("zero weights predict the uniform distribution") {
  ModelParams p = init_model(make_mlp(3, {5}, 4), 1);
  std::fill(p.theta.begin(), p.theta.end(), 0.0);
  Rng rng(1);
  for (const auto& q : predict_proba(p, random_batch(rng, 6, 3)))
    for (std::size_t c = 0; c < 4; ++c) CHECK(q[c] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("crafted logits (10,0,0,0) match the scalar softmax") {
  // Linear model with bias only: logits equal the bias vector.
  ModelParams p = init_model(make_mlp(2, {}, 4), 1);
  std::fill(p.theta.begin(), p.theta.end(), 0.0);
  p.theta[8] = 10.0;
  const auto q = predict_proba(p, make_batch({{0.3, -0.7}}));
  const double top = std::exp(10.0) / (std::exp(10.0) + 3.0);
  const double rest = 1.0 / (std::exp(10.0) + 3.0);
  CHECK(q[0][0] == doctest::Approx(top).epsilon(1e-14));
  CHECK(q[0][1] == doctest::Approx(rest).epsilon(1e-12));
  CHECK(q[0][0] == doctest::Approx(0.99986).epsilon(1e-5));
  CHECK(q[0][3] == doctest::Approx(4.5e-5).epsilon(0.01));
}

TEST_CASE("probabilities sum to one for random models and inputs") {
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    const auto p = init_model(make_mlp(3, {6}, 5), rng.next_u64());
    Batch xs = random_batch(rng, 8, 3) * 20.0;
    for (const auto& q : predict_proba(p, xs)) {
      double s = 0.0;
      for (double v : q.values()) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("predict_proba validates input") {
  const auto p = init_model(make_mlp(3, {4}, 2), 1);
  CHECK_THROWS_AS(predict_proba(p, Batch::Zero(2, 4)), ConfigError);
  Batch bad = Batch::Zero(1, 3);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(predict_proba(p, bad), ConfigError);
}

TEST_CASE("loss is zero with zero gradient at a saturated correct prediction") {
  ModelParams p = init_model(make_mlp(2, {}, 3), 1);
  std::fill(p.theta.begin(), p.theta.end(), 0.0);
  p.theta[6 + 1] = 1000.0;  // bias of class 1
  const std::vector<int> t{1};
  const std::vector<double> w{1.0};
  const auto lg = loss_and_grad(p, make_batch({{0.5, 0.5}}), t, w);
  CHECK(lg.loss == 0.0);
  for (double g : lg.grad) CHECK(std::abs(g) <= 1e-300);
}

TEST_CASE("uniform predictor loss is ln C") {
  ModelParams p = init_model(make_mlp(2, {3}, 4), 1);
  std::fill(p.theta.begin(), p.theta.end(), 0.0);
  const std::vector<int> t{2};
  const std::vector<double> w{1.0};
  CHECK(loss_and_grad(p, make_batch({{1.0, 2.0}}), t, w).loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(31337);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Activation act = trial % 2 ? Activation::tanh : Activation::relu;
    const int in = 2 + static_cast<int>(rng.below(3));
    const int hidden = 3 + static_cast<int>(rng.below(6));
    const int classes = 2 + static_cast<int>(rng.below(4));
    const auto p = init_model(make_mlp(in, {hidden}, classes, act), rng.next_u64());
    const int rows = 1 + static_cast<int>(rng.below(6));
    const Batch xs = random_batch(rng, rows, in);
    std::vector<int> targets(rows);
    std::vector<double> weights(rows);
    for (int r = 0; r < rows; ++r) {
      targets[r] = static_cast<int>(rng.below(classes));
      weights[r] = rng.uniform(0.0, 2.0);
    }
    const auto lg = loss_and_grad(p, xs, targets, weights);
    const auto rows_vec = to_rows(xs);
    const auto fd = oracle::central_differences(
        [&](const std::vector<double>& theta) {
          ModelParams q = p;
          q.theta = theta;
          return oracle::scalar_weighted_ce(q, rows_vec, targets, weights);
        },
        p.theta, 1e-5);
    CHECK(lg.loss == doctest::Approx(oracle::scalar_weighted_ce(p, rows_vec, targets, weights)).epsilon(1e-12));
    for (std::size_t k = 0; k < fd.size(); ++k) {
      const double denom = std::max({std::abs(lg.grad[k]), std::abs(fd[k]), 1e-4});
      worst = std::max(worst, std::abs(lg.grad[k] - fd[k]) / denom);
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("doubling weights doubles loss and gradients exactly") {
  Rng rng(5);
  const auto p = init_model(make_mlp(3, {4}, 3), 2);
  const Batch xs = random_batch(rng, 5, 3);
  const std::vector<int> t{0, 1, 2, 1, 0};
  const std::vector<double> w{0.5, 1.0, 0.25, 0.75, 1.0};
  std::vector<double> w2;
  for (double v : w) w2.push_back(2 * v);
  const auto a = loss_and_grad(p, xs, t, w);
  const auto b = loss_and_grad(p, xs, t, w2);
  CHECK(b.loss == 2 * a.loss);
  for (std::size_t k = 0; k < a.grad.size(); ++k) CHECK(b.grad[k] == 2 * a.grad[k]);
}

TEST_CASE("predict_proba is a pure function of params and inputs") {
  Rng rng(6);
  const auto p = init_model(make_mlp(3, {4}, 3), 2);
  const Batch xs = random_batch(rng, 4, 3);
  const auto a = predict_proba(p, xs);
  const auto b = predict_proba(p, xs);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(a[r][c] == b[r][c]);
}

TEST_CASE("loss_and_grad error paths") {
  const auto p = init_model(make_mlp(2, {3}, 3), 1);
  const std::vector<int> t{3};
  const std::vector<double> w{1.0};
  CHECK_THROWS_AS(loss_and_grad(p, Batch(0, 2), std::vector<int>{}, std::vector<double>{}), ConfigError);
  CHECK_THROWS_AS(loss_and_grad(p, make_batch({{1.0, 1.0}}), t, w), ConfigError);
  const std::vector<int> ok{0};
  const std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(loss_and_grad(p, make_batch({{1.0, 1.0}}), ok, neg), ConfigError);
}

TEST_CASE("sgd_step arithmetic") {
  ModelParams p;
  p.arch = make_mlp(1, {}, 2);
  p.theta.assign(4, 0.0);

  SUBCASE("plain SGD") {
    p.theta[0] = 1.0;
    OptState opt = make_opt_state(p, 0.1, 0.0, 0.0);
    const std::vector<double> g{2.0, 0.0, 0.0, 0.0};
    sgd_step(p, g, opt);
    CHECK(p.theta[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(opt.step == 1);
  }
  SUBCASE("zero gradient scales the buffer only") {
    p.theta[0] = 0.7;
    OptState opt = make_opt_state(p, 0.1, 0.5, 0.0);
    opt.momentum_buffer[0] = 0.0;
    const std::vector<double> g(4, 0.0);
    sgd_step(p, g, opt);
    CHECK(p.theta[0] == 0.7);
    opt.momentum_buffer[1] = 4.0;
    sgd_step(p, g, opt);
    CHECK(opt.momentum_buffer[1] == 2.0);
    CHECK(p.theta[1] == doctest::Approx(-0.2));
  }
  SUBCASE("two momentum steps unroll to -0.29") {
    OptState opt = make_opt_state(p, 0.1, 0.9, 0.0);
    const std::vector<double> g{1.0, 0.0, 0.0, 0.0};
    sgd_step(p, g, opt);
    sgd_step(p, g, opt);
    CHECK(p.theta[0] == doctest::Approx(-0.29).epsilon(1e-15));
  }
  SUBCASE("errors") {
    OptState opt = make_opt_state(p, 0.1, 0.9, 0.0);
    CHECK_THROWS_AS(sgd_step(p, std::vector<double>(3, 0.0), opt), ConfigError);
    std::vector<double> g(4, 0.0);
    g[2] = INFINITY;
    CHECK_THROWS(sgd_step(p, g, opt));
  }
}

TEST_CASE("separable two-class problem is fit exactly") {
  Rng rng(8);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (int k = 0; k < 40; ++k) {
    const int y = k % 2;
    rows.push_back({(y ? 2.0 : -2.0) + rng.normal(0.0, 0.3), rng.normal(0.0, 1.0)});
    labels.push_back(y);
  }
  const Batch xs = make_batch(rows);
  const std::vector<double> ones(rows.size(), 1.0);
  ModelParams p = init_model(make_mlp(2, {8}, 2), 4);
  OptState opt = make_opt_state(p, 0.05, 0.9, 0.0);
  std::vector<double> losses;
  for (int step = 0; step < 500; ++step) {
    const auto lg = loss_and_grad(p, xs, labels, ones);
    losses.push_back(lg.loss);
    sgd_step(p, lg.grad, opt);
  }
  for (std::size_t k = losses.size() - 50; k < losses.size(); ++k) CHECK(losses[k] <= losses[k - 1]);
  const auto probs = predict_proba(p, xs);
  int correct = 0;
  for (std::size_t r = 0; r < probs.size(); ++r) correct += probs[r].argmax() == labels[r];
  CHECK(correct == 40);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto p = init_model(make_mlp(3, {5}, 4, Activation::tanh), 12);
  const auto path = std::filesystem::temp_directory_path() / "copseudo_ckpt_test";
  write_checkpoint(p, path);
  const auto q = read_checkpoint(path);
  CHECK(q.arch == p.arch);
  CHECK(q.theta == p.theta);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
}
