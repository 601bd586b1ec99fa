#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "copseudo/errors.hpp"
#include "copseudo/fusion.hpp"
#include "oracles.hpp"

using namespace copseudo;

namespace {

FusionConfig pair_cfg() { return FusionConfig{}; }

FusionConfig triple_cfg() {
  FusionConfig cfg;
  cfg.num_models = 3;
  cfg.tau_cascade = {0.85, 0.75};
  return cfg;
}

ProbVector pv(std::vector<double> v) { return ProbVector(std::move(v)); }

// Random 3-class vector whose max sits near one of the interesting thresholds.
std::vector<double> random_probs(Rng& rng, std::size_t classes = 3) {
  static const double anchors[] = {0.95, 0.75, 0.9, 0.6, 0.85};
  double top;
  switch (rng.below(4)) {
    case 0: top = anchors[rng.below(5)]; break;
    case 1: top = rng.uniform(0.9, 1.0); break;
    case 2: top = rng.uniform(0.7, 0.8); break;
    default: top = rng.uniform(1.0 / static_cast<double>(classes), 1.0); break;
  }
  std::vector<double> q(classes, 0.0);
  const std::size_t c = rng.below(classes);
  q[c] = top;
  double rest = 1.0 - top;
  // Spread the remainder so no other entry exceeds top.
  for (std::size_t k = 0; k < classes; ++k) {
    if (k == c) continue;
    q[k] = rest / static_cast<double>(classes - 1);
  }
  return q;
}

}  // namespace

TEST_CASE("fuse_pair documented branch examples") {
  const auto cfg = pair_cfg();
  Rng rng(1);

  auto d = fuse_pair(pv({0.97, 0.02, 0.01}), pv({0.96, 0.03, 0.01}), cfg, rng);
  CHECK(d.pseudo_label == 0);
  CHECK(d.masks == std::vector<double>{0.75, 0.75});
  CHECK(d.source == FusionSource{SourceKind::both_confident_agree, 0});

  d = fuse_pair(pv({0.97, 0.02, 0.01}), pv({0.50, 0.45, 0.05}), cfg, rng);
  CHECK(d.pseudo_label == 0);
  CHECK(d.masks == std::vector<double>{0.75, 1.0});
  CHECK(d.source == FusionSource{SourceKind::own_confident, 1});

  d = fuse_pair(pv({0.80, 0.15, 0.05}), pv({0.78, 0.12, 0.10}), cfg, rng);
  CHECK(d.pseudo_label == 0);
  CHECK(d.masks == std::vector<double>{1.0, 1.0});
  CHECK(d.source == FusionSource{SourceKind::consensus, 2});

  d = fuse_pair(pv({0.80, 0.15, 0.05}), pv({0.10, 0.78, 0.12}), cfg, rng);
  CHECK_FALSE(d.pseudo_label.has_value());
  CHECK(d.masks == std::vector<double>{0.0, 0.0});
  CHECK(d.source == FusionSource{});

  d = fuse_pair(pv({0.97, 0.02, 0.01}), pv({0.90, 0.05, 0.05}), cfg, rng);
  CHECK(d.pseudo_label == 0);
  CHECK(d.masks == std::vector<double>{0.75, 1.0});
  CHECK(d.source == FusionSource{SourceKind::own_confident, 1});

  d = fuse_pair(pv({0.96, 0.02, 0.02}), pv({0.01, 0.97, 0.02}), cfg, rng);
  CHECK(d.masks == std::vector<double>{0.75, 0.75});
  CHECK(d.source.kind == SourceKind::conflict_coin_flip);
  CHECK(d.pseudo_label == (d.source.detail == 1 ? 0 : 1));
}

TEST_CASE("boundary values are not reliable") {
  const auto cfg = pair_cfg();
  Rng rng(2);
  auto d = fuse_pair(pv({0.95, 0.05}), pv({0.95, 0.05}), cfg, rng);
  CHECK(d.source == FusionSource{SourceKind::consensus, 2});
  d = fuse_pair(pv({0.75, 0.25}), pv({0.75, 0.25}), cfg, rng);
  CHECK_FALSE(d.reliable());
}

TEST_CASE("coin flip frequency is calibrated") {
  const auto cfg = pair_cfg();
  const auto q1 = pv({0.96, 0.02, 0.02});
  const auto q2 = pv({0.01, 0.97, 0.02});
  int zeros = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    Rng rng(Rng(99).split(s));
    zeros += fuse_pair(q1, q2, cfg, rng).pseudo_label == 0;
  }
  CHECK(zeros / 10000.0 == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("conflict_drop removes the coin flip") {
  auto cfg = pair_cfg();
  cfg.conflict_drop = true;
  Rng rng(3);
  const auto d = fuse_pair(pv({0.96, 0.02, 0.02}), pv({0.01, 0.97, 0.02}), cfg, rng);
  CHECK_FALSE(d.reliable());
  CHECK(d.masks == std::vector<double>{0.0, 0.0});
  CHECK(d.source == FusionSource{SourceKind::conflict_coin_flip, 0});
}

TEST_CASE("fuse_pair agrees with the literal pseudocode") {
  const auto cfg = pair_cfg();
  Rng gen(4);
  for (int t = 0; t < 5000; ++t) {
    const auto a = random_probs(gen);
    const auto b = random_probs(gen);
    Rng s1(gen.split(t)), s2(gen.split(t));
    const auto d = fuse_pair(pv(a), pv(b), cfg, s1);
    const auto o = oracle::two_model_pseudocode(a, b, 0.95, 0.75, 0.75, s2);
    REQUIRE(d.pseudo_label == o.label);
    REQUIRE(d.masks == std::vector<double>{o.m1, o.m2});
  }
}

TEST_CASE("fuse_cascade with two models equals fuse_pair") {
  const auto cfg = pair_cfg();
  Rng gen(5);
  for (int t = 0; t < 5000; ++t) {
    const std::vector<ProbVector> qs{pv(random_probs(gen)), pv(random_probs(gen))};
    Rng s1(gen.split(t)), s2(gen.split(t));
    REQUIRE(fuse_cascade(qs, cfg, s1) == fuse_pair(qs[0], qs[1], cfg, s2));
  }
}

TEST_CASE("three-model cascade examples") {
  const auto cfg = triple_cfg();
  Rng rng(6);

  std::vector<ProbVector> qs{pv({0.90, 0.05, 0.05}), pv({0.88, 0.07, 0.05}), pv({0.20, 0.40, 0.40})};
  auto d = fuse_cascade(qs, cfg, rng);
  CHECK(d.pseudo_label == 0);
  CHECK(d.masks == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(d.source == FusionSource{SourceKind::consensus, 2});

  qs = {pv({0.96, 0.02, 0.02}), pv({0.07, 0.86, 0.07}), pv({0.07, 0.86, 0.07})};
  d = fuse_cascade(qs, cfg, rng);
  CHECK(d.pseudo_label == 0);
  CHECK(d.masks == std::vector<double>{0.75, 1.0, 1.0});
  CHECK(d.source == FusionSource{SourceKind::own_confident, 1});

  // Level 3 only: all three above 0.75, none above 0.85.
  qs = {pv({0.8, 0.1, 0.1}), pv({0.8, 0.1, 0.1}), pv({0.8, 0.1, 0.1})};
  d = fuse_cascade(qs, cfg, rng);
  CHECK(d.source == FusionSource{SourceKind::consensus, 3});
}

TEST_CASE("four-model cascade picks uniformly between two level-2 groups") {
  FusionConfig cfg;
  cfg.num_models = 4;
  cfg.tau_cascade = {0.85, 0.8, 0.75};
  const std::vector<ProbVector> qs{pv({0.9, 0.05, 0.05}), pv({0.9, 0.05, 0.05}),
                                   pv({0.05, 0.9, 0.05}), pv({0.05, 0.9, 0.05})};
  int zeros = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    Rng rng(Rng(7).split(s));
    const auto d = fuse_cascade(qs, cfg, rng);
    REQUIRE(d.source == FusionSource{SourceKind::consensus, 2});
    zeros += d.pseudo_label == 0;
  }
  CHECK(zeros / 10000.0 == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("cascade config validation") {
  auto cfg = triple_cfg();
  cfg.tau_cascade = {0.75};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.tau_cascade = {0.75, 0.85};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.tau_cascade = {0.96, 0.75};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  Rng rng(1);
  const std::vector<ProbVector> two{pv({0.5, 0.5}), pv({0.5, 0.5})};
  CHECK_THROWS_AS(fuse_cascade(two, triple_cfg(), rng), ConfigError);
  CHECK_THROWS_AS(fuse_pair(pv({1.0, 0.0}), pv({1.0, 0.0, 0.0}), pair_cfg(), rng), ConfigError);
  CHECK_THROWS_AS(pv({0.5, 0.6}), ConfigError);
}

TEST_CASE("symmetry outside the coin flip branch") {
  const auto cfg = pair_cfg();
  Rng gen(8);
  for (int t = 0; t < 3000; ++t) {
    const auto a = pv(random_probs(gen));
    const auto b = pv(random_probs(gen));
    Rng s1(1), s2(1);
    const auto ab = fuse_pair(a, b, cfg, s1);
    const auto ba = fuse_pair(b, a, cfg, s2);
    if (ab.source.kind == SourceKind::conflict_coin_flip) continue;
    CHECK(ab.pseudo_label == ba.pseudo_label);
    CHECK(ab.masks[0] == ba.masks[1]);
    CHECK(ab.masks[1] == ba.masks[0]);
    if (ab.source.kind == SourceKind::own_confident) CHECK(ab.source.detail == 3 - ba.source.detail);
  }
}

TEST_CASE("lowering tau_2 never removes labels or changes confident ones") {
  Rng gen(9);
  for (int t = 0; t < 1000; ++t) {
    const auto a = pv(random_probs(gen));
    const auto b = pv(random_probs(gen));
    std::optional<FusionDecision> prev;
    for (double tau2 = 0.90; tau2 >= 0.60 - 1e-12; tau2 -= 0.05) {
      FusionConfig cfg;
      cfg.tau_cascade = {tau2};
      Rng s(gen.split(t));
      const auto d = fuse_pair(a, b, cfg, s);
      if (prev && prev->reliable()) {
        CHECK(d.reliable());
        if (prev->source.kind != SourceKind::consensus) CHECK(d.pseudo_label == prev->pseudo_label);
      }
      prev = d;
    }
  }
}

TEST_CASE("union bound, mask codomain and determinism") {
  const auto cfg = pair_cfg();
  Rng gen(10);
  for (int t = 0; t < 3000; ++t) {
    const auto a = pv(random_probs(gen));
    const auto b = pv(random_probs(gen));
    Rng s1(gen.split(t)), s2(gen.split(t));
    const auto d = fuse_pair(a, b, cfg, s1);
    if (a.max() > 0.95 || b.max() > 0.95) CHECK(d.reliable());
    for (double m : d.masks) CHECK((m == 0.0 || m == 1.0 || m == 0.75));
    CHECK(d == fuse_pair(a, b, cfg, s2));
  }
}

TEST_CASE("single-model mode is FixMatch masking") {
  auto cfg = pair_cfg();
  cfg.single_model_mode = true;
  Rng gen(11);
  for (int t = 0; t < 2000; ++t) {
    const auto a = random_probs(gen);
    const auto b = random_probs(gen);
    const std::vector<ProbVector> qs{pv(a), pv(b)};
    const auto d = fuse(qs, cfg, gen);
    const auto fa = oracle::fixmatch_mask(a, 0.95, 0.75);
    const auto fb = oracle::fixmatch_mask(b, 0.95, 0.75);
    CHECK(d.masks == std::vector<double>{fa.mask, fb.mask});
    CHECK(d.targets[0] == fa.label);
    CHECK(d.targets[1] == fb.label);
  }
  cfg.num_models = 1;
  cfg.tau_cascade.clear();
  CHECK_NOTHROW(cfg.validate());
  const std::vector<ProbVector> one{pv({0.97, 0.03})};
  CHECK(fuse(one, cfg, gen).masks == std::vector<double>{0.75});
}

TEST_CASE("select_debias_subset fixtures") {
  const ModelPredictions same{{pv({0.6, 0.3, 0.1}), pv({0.2, 0.7, 0.1})},
                              {pv({0.6, 0.3, 0.1}), pv({0.2, 0.7, 0.1})}};
  auto sel = select_debias_subset(same, 0.0);
  CHECK(sel.selected == std::vector<std::size_t>{0, 1});
  CHECK(sel.agreement == std::vector<double>{0.0, 0.0});

  const ModelPredictions tiny{{pv({0.6, 0.3, 0.1})}, {pv({0.600001, 0.299999, 0.1})}};
  sel = select_debias_subset(tiny, 0.0);
  CHECK(sel.selected.empty());
  CHECK(sel.agreement[0] == doctest::Approx(1e-6).epsilon(1e-6));

  const ModelPredictions hand{{pv({0.6, 0.3, 0.1})}, {pv({0.5, 0.4, 0.1})}};
  sel = select_debias_subset(hand, 0.1);
  CHECK(sel.selected == std::vector<std::size_t>{0});
  CHECK(sel.agreement[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(select_debias_subset(hand, 0.09).selected.empty());

  const ModelPredictions disagree{{pv({0.5, 0.4, 0.1})}, {pv({0.4, 0.5, 0.1})}};
  CHECK(select_debias_subset(disagree, 1.0).selected.empty());

  const ModelPredictions ragged{{pv({0.5, 0.5})}, {}};
  CHECK_THROWS_AS(select_debias_subset(ragged, 0.1), ConfigError);
  CHECK_THROWS_AS(select_debias_subset(hand, -0.1), ConfigError);
}

TEST_CASE("mask_ratio counts present labels") {
  FusionDecision present;
  present.pseudo_label = 1;
  const FusionDecision absent;
  std::vector<FusionDecision> ds(8, absent);
  CHECK(mask_ratio(ds) == 0.0);
  ds[1] = ds[4] = ds[6] = present;
  CHECK(mask_ratio(ds) == 0.375);
  CHECK(mask_ratio(std::vector<FusionDecision>(3, present)) == 1.0);
  CHECK_THROWS_AS(mask_ratio(std::vector<FusionDecision>{}), ConfigError);
}

TEST_CASE("fusion source strings round trip") {
  for (const auto& s : {FusionSource{SourceKind::both_confident_agree, 0}, FusionSource{SourceKind::conflict_coin_flip, 2},
                        FusionSource{SourceKind::own_confident, 1}, FusionSource{SourceKind::consensus, 3},
                        FusionSource{}}) {
    CHECK(FusionSource::parse(s.to_string()) == s);
  }
  CHECK_THROWS_AS(FusionSource::parse("maybe"), ConfigError);
}

TEST_CASE("prediction traces round trip and replay deterministically") {
  const auto dir = std::filesystem::temp_directory_path() / "copseudo_fusion_trace";
  std::filesystem::create_directories(dir);
  PredictionTrace trace;
  Rng gen(12);
  for (std::int64_t item = 0; item < 50; ++item) {
    trace.items.push_back(item * 3);
    trace.probs.push_back({pv(random_probs(gen)), pv(random_probs(gen))});
  }
  write_prediction_trace(trace, dir / "p.csv");
  const auto back = read_prediction_trace(dir / "p.csv");
  CHECK(back.items == trace.items);
  for (std::size_t r = 0; r < trace.items.size(); ++r)
    for (std::size_t m = 0; m < 2; ++m) CHECK(std::ranges::equal(back.probs[r][m].values(), trace.probs[r][m].values()));

  const auto a = fuse_trace(back, pair_cfg(), 5);
  CHECK(a == fuse_trace(trace, pair_cfg(), 5));
  for (std::size_t r = 0; r < a.size(); ++r) {
    Rng s(Rng(5).split(static_cast<std::uint64_t>(trace.items[r])));
    CHECK(a[r] == fuse_pair(trace.probs[r][0], trace.probs[r][1], pair_cfg(), s));
  }

  std::ostringstream out;
  write_decision_trace(trace.items, a, 2, out);
  CHECK(out.str().rfind("item,pseudo_label,source,mask_1,mask_2\n", 0) == 0);
}

TEST_CASE("malformed prediction traces report the line") {
  const auto dir = std::filesystem::temp_directory_path() / "copseudo_fusion_bad";
  std::filesystem::create_directories(dir);
  const auto write = [&](const std::string& body) {
    std::ofstream(dir / "t.csv") << body;
    return dir / "t.csv";
  };
  CHECK_THROWS_WITH_AS(read_prediction_trace(write("item,model,p0,p1\n")), doctest::Contains("no items"), DataError);
  CHECK_THROWS_WITH_AS(read_prediction_trace(write("item,model,p0,p1\n0,1,0.5,0.5\n0,2,0.5\n")),
                       doctest::Contains(":3:"), DataError);
  CHECK_THROWS_WITH_AS(read_prediction_trace(write("item,model,p0,p1\n0,0,0.5,0.5\n")),
                       doctest::Contains("1-based"), DataError);
  CHECK_THROWS_WITH_AS(read_prediction_trace(write("item,model,p0,p1\n0,1,0.5,x\n")),
                       doctest::Contains(":2:"), DataError);
  CHECK_THROWS_AS(read_prediction_trace(dir / "absent.csv"), DataError);
}
