#include "oracles.hpp"
#include "rsts/errors.hpp"
#include "rsts/recycle.hpp"
#include "rsts/rng.hpp"
#include "rsts/simulate.hpp"
#include "rsts/stats.hpp"
#include "rsts/sts.hpp"
#include "rsts/weights.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace rsts;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

struct Fixture {
  ModelPtr model;
  HierDataset data;
  StsFit fit;
};

Fixture singleexp_fixture(std::size_t N, std::size_t n, double sigma, double lambda,
                          std::uint64_t seed) {
  Fixture f;
  f.model = make_model("singleexp1");
  SimDesign d;
  d.model = "singleexp1";
  d.theta0 = vec({0.8});
  d.N = N;
  d.n = n;
  d.sigma = sigma;
  d.lambda = lambda;
  d.seed = seed;
  RandomStream rng = replicate_stream(d, 0);
  f.data = gen_dataset(*f.model, d, rng).data;
  const ParamVector init = vec({0.9});
  f.fit = fit_sts(*f.model, f.data, std::span<const ParamVector>(&init, 1));
  return f;
}

// A run holding synthetic replicates.
RecycleRun synthetic_run(const std::vector<double>& values, double center, double tau) {
  RecycleRun run;
  run.theta_sts = vec({center});
  run.tau_N = tau;
  run.N = 50;
  run.replicates.resize(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t b = 0; b < values.size(); ++b) run.replicates(static_cast<Eigen::Index>(b), 0) = values[b];
  return run;
}

}  // namespace

TEST_CASE("unit weights reproduce the point estimate exactly") {
  const Fixture f = singleexp_fixture(12, 20, 0.1, 0.1, 4);
  RecycleConfig cfg;
  cfg.B = 100;
  cfg.unit_weights = true;
  for (int b = 0; b < 5; ++b) {
    const ParamVector t = recycle_once(*f.model, f.data, f.fit, cfg, 9, b);
    CHECK(t[0] == f.fit.theta_sts[0]);
  }
  const RecycleRun run = recycle_bootstrap(*f.model, f.data, f.fit, cfg, 9);
  REQUIRE(run.replicates.rows() == 100);
  for (Eigen::Index b = 0; b < 100; ++b) CHECK(run.replicates(b, 0) == f.fit.theta_sts[0]);
  REQUIRE(run.intervals.size() == 1);
  CHECK(run.intervals[0].length() == 0.0);
  CHECK(run.intervals[0].lo == f.fit.theta_sts[0]);
}

TEST_CASE("replicate transcript for a straight line matches closed-form weighted least squares") {
  StraightLineModel m;
  HierDataset data;
  data.individuals.push_back({"first", {0.0, 1.0, 2.0}, {0.2, 1.1, 2.3}});
  data.individuals.push_back({"second", {0.5, 1.5, 3.0}, {1.0, 0.4, -0.7}});
  const ParamVector init = vec({0, 0});
  const StsFit fit = fit_sts(m, data, std::span<const ParamVector>(&init, 1));
  RecycleConfig cfg;
  cfg.inner_scheme = WeightScheme::dirichlet;
  cfg.outer_scheme = WeightScheme::exponential;
  const std::uint64_t seed = 42;
  for (std::size_t rep = 0; rep < 10; ++rep) {
    std::vector<Eigen::VectorXd> refits;
    for (const auto& ind : data.individuals) {
      RandomStream rng = derive_stream(seed, {rep, 0, hash_string(ind.id)});
      const auto w = draw_weights(cfg.inner_scheme, ind.size(), rng);
      Eigen::MatrixXd X(3, 2);
      for (int j = 0; j < 3; ++j) X.row(j) << 1.0, ind.x[j];
      refits.push_back(oracle::linear_wls(X, Eigen::Map<const Eigen::VectorXd>(ind.y.data(), 3),
                                          Eigen::Map<const Eigen::VectorXd>(w.data(), 3)));
    }
    RandomStream outer = derive_stream(seed, {rep, 0, 0xfeedULL, 2});
    const auto u = draw_weights(cfg.outer_scheme, 2, outer);
    const Eigen::VectorXd self_normalized = (u[0] * refits[0] + u[1] * refits[1]) / (u[0] + u[1]);
    const Eigen::VectorXd literal = (u[0] * refits[0] + u[1] * refits[1]) / 2.0;

    const ParamVector got = recycle_once(m, data, fit, cfg, seed, rep);
    CHECK((Eigen::VectorXd(got) - self_normalized).cwiseAbs().maxCoeff() <= 1e-10);
    RecycleConfig lit = cfg;
    lit.combination = OuterCombination::literal;
    const ParamVector got_lit = recycle_once(m, data, fit, lit, seed, rep);
    CHECK((Eigen::VectorXd(got_lit) - literal).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("multinomial outer weights make both combinations agree") {
  StraightLineModel m;
  HierDataset data;
  data.individuals.push_back({"a", {0.0, 1.0, 2.0, 3.0}, {0.2, 1.1, 2.3, 2.9}});
  data.individuals.push_back({"b", {0.5, 1.5, 3.0, 4.0}, {1.0, 0.4, -0.7, -1.1}});
  data.individuals.push_back({"c", {0.0, 2.0, 4.0, 6.0}, {3.0, 2.5, 1.0, 0.1}});
  const ParamVector init = vec({0, 0});
  const StsFit fit = fit_sts(m, data, std::span<const ParamVector>(&init, 1));
  // Multinomial counts sum to exactly N.
  RecycleConfig cfg;
  cfg.outer_scheme = WeightScheme::multinomial;
  RecycleConfig lit = cfg;
  lit.combination = OuterCombination::literal;
  for (std::size_t rep = 0; rep < 10; ++rep) {
    const ParamVector a = recycle_once(m, data, fit, cfg, 3, rep);
    const ParamVector b = recycle_once(m, data, fit, lit, 3, rep);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("same seed, same replicates, any thread count") {
  const Fixture f = singleexp_fixture(10, 15, 0.3, 0.3, 8);
  RecycleConfig cfg;
  cfg.B = 120;
  const RecycleRun a = recycle_bootstrap(*f.model, f.data, f.fit, cfg, 77);
  const RecycleRun b = recycle_bootstrap(*f.model, f.data, f.fit, cfg, 77);
  cfg.threads = 3;
  const RecycleRun c = recycle_bootstrap(*f.model, f.data, f.fit, cfg, 77);
  REQUIRE(a.replicates.rows() == b.replicates.rows());
  REQUIRE(a.replicates.rows() == c.replicates.rows());
  CHECK(a.replicate_index == c.replicate_index);
  for (Eigen::Index r = 0; r < a.replicates.rows(); ++r) {
    CHECK(a.replicates(r, 0) == b.replicates(r, 0));
    CHECK(a.replicates(r, 0) == c.replicates(r, 0));
  }
  const RecycleRun d = recycle_bootstrap(*f.model, f.data, f.fit, cfg, 78);
  CHECK(d.replicates(0, 0) != a.replicates(0, 0));
}

TEST_CASE("storage order of individuals does not matter") {
  const Fixture f = singleexp_fixture(8, 20, 0.2, 0.3, 12);
  HierDataset reversed = f.data;
  std::reverse(reversed.individuals.begin(), reversed.individuals.end());
  const ParamVector init = vec({0.9});
  const StsFit rfit = fit_sts(*f.model, reversed, std::span<const ParamVector>(&init, 1));
  REQUIRE(rfit.included.size() == f.fit.included.size());
  for (WeightScheme outer : {WeightScheme::dirichlet, WeightScheme::exponential}) {
    RecycleConfig cfg;
    cfg.outer_scheme = outer;
    for (std::size_t rep = 0; rep < 10; ++rep) {
      const ParamVector a = recycle_once(*f.model, f.data, f.fit, cfg, 5, rep);
      const ParamVector b = recycle_once(*f.model, reversed, rfit, cfg, 5, rep);
      CHECK(std::abs(a[0] - b[0]) <= 1e-12);
    }
  }
}

TEST_CASE("interval construction from synthetic normal replicates") {
  RandomStream rng(99);
  std::normal_distribution<double> z;
  const double tau = 0.8, s = 0.3, center = 1.5;
  std::vector<double> values(100000);
  for (double& v : values) v = center + tau * s * z(rng);
  const RecycleRun run = synthetic_run(values, center, tau);
  const auto basic = build_ci(run, 0.95, CiMethod::basic_studentized);
  const auto pct = build_ci(run, 0.95, CiMethod::percentile);
  const double half = basic[0].length() / 2.0;
  CHECK(std::abs(half - 1.959963984540054 * s) <= 0.05 * 1.96 * s);
  CHECK(std::abs(basic[0].lo - pct[0].lo) <= 0.01);
  CHECK(std::abs(basic[0].hi - pct[0].hi) <= 0.01);
  CHECK(basic[0].contains(center));
  CHECK(ks_to_normal(run, s * std::sqrt(50.0)) <= 0.01);
}

TEST_CASE("interval contract") {
  RandomStream rng(5);
  std::exponential_distribution<double> e;
  std::vector<double> values(500);
  for (double& v : values) v = e(rng);
  const RecycleRun run = synthetic_run(values, 1.0, 1.0);
  for (CiMethod m : {CiMethod::basic_studentized, CiMethod::percentile}) {
    double prev = 0.0;
    for (double level : {0.5, 0.8, 0.9, 0.95, 0.99}) {
      const auto ci = build_ci(run, level, m);
      CHECK(ci[0].lo <= ci[0].hi);
      CHECK(ci[0].length() >= prev);
      prev = ci[0].length();
    }
  }
  // Skewed replicates: the basic interval reflects, the percentile does not.
  const auto basic = build_ci(run, 0.9, CiMethod::basic_studentized);
  const auto pct = build_ci(run, 0.9, CiMethod::percentile);
  CHECK(basic[0].lo + pct[0].hi == doctest::Approx(2.0));
  CHECK_THROWS_AS(build_ci(synthetic_run(std::vector<double>(99, 1.0), 1.0, 1.0), 0.95,
                           CiMethod::percentile),
                  EstimationError);
}

TEST_CASE("constant replicates") {
  const RecycleRun same = synthetic_run(std::vector<double>(200, 2.0), 2.0, 0.9);
  CHECK(ks_to_normal(same, 1.0) == doctest::Approx(0.5));
  const auto ci = build_ci(same, 0.95, CiMethod::basic_studentized);
  CHECK(ci[0].lo == 2.0);
  CHECK(ci[0].hi == 2.0);
  // Off-center constant c: the interval is the point theta - (c - theta) / tau.
  const RecycleRun off = synthetic_run(std::vector<double>(200, 2.9), 2.0, 0.9);
  const auto oci = build_ci(off, 0.95, CiMethod::basic_studentized);
  CHECK(oci[0].lo == doctest::Approx(2.0 - 0.9 / 0.9));
  CHECK(oci[0].length() == doctest::Approx(0.0));
}

TEST_CASE("studentized spread tracks lambda over root N") {
  const Fixture f = singleexp_fixture(50, 50, 1.0, 1.0, 2024);
  RecycleConfig cfg;
  cfg.B = 1000;
  const RecycleRun run = recycle_bootstrap(*f.model, f.data, f.fit, cfg, 5);
  REQUIRE(run.replicates.rows() >= 800);
  std::vector<double> pivot;
  for (Eigen::Index b = 0; b < run.replicates.rows(); ++b) {
    pivot.push_back((run.replicates(b, 0) - run.theta_sts[0]) / run.tau_N);
  }
  const double sd = std::sqrt(sample_variance(pivot));
  CHECK(std::abs(sd - 1.0 / std::sqrt(50.0)) <= 0.25 / std::sqrt(50.0));
}

TEST_CASE("configuration checks") {
  RecycleConfig cfg;
  cfg.B = 99;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.B = 100;
  cfg.ci_level = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(parse_ci_method("percentile") == CiMethod::percentile);
  CHECK_THROWS_AS(parse_ci_method("bca"), std::invalid_argument);
}
