#include "oracles.hpp"
#include "rsts/errors.hpp"
#include "rsts/model.hpp"
#include "rsts/nls.hpp"
#include "rsts/rng.hpp"
#include "rsts/weights.hpp"

#include <doctest.h>

#include <random>

using namespace rsts;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

IndividualData noisy_individual(const Model& m, const ParamVector& theta, int n, double sigma,
                                std::uint64_t seed, double t_hi = 8.0) {
  RandomStream rng(seed);
  std::uniform_real_distribution<double> t(0.0, t_hi);
  std::normal_distribution<double> e(0.0, sigma);
  IndividualData d;
  d.id = "s" + std::to_string(seed);
  for (int j = 0; j < n; ++j) d.x.push_back(t(rng));
  d.y.resize(d.x.size());
  m.evaluate(theta, d.x, d.y, {});
  for (double& y : d.y) y += e(rng);
  return d;
}

// sum_j w_j (y_j - f_j) grad f_j, assembled independently of the solver.
ParamVector score(const Model& m, const IndividualData& d, std::span<const double> w,
                  const ParamVector& theta) {
  ParamVector s = ParamVector::Zero(theta.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double r = d.y[j] - eval_model(m, theta, d.x[j]);
    s += w[j] * r * eval_jacobian(m, theta, d.x[j]);
  }
  return s;
}

}  // namespace

TEST_CASE("weighted fit of a straight line matches closed-form weighted least squares") {
  StraightLineModel m;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const IndividualData d = noisy_individual(m, vec({0.7, -1.3}), 12, 0.4, seed);
    RandomStream rng(seed + 100);
    const auto w = draw_weights(WeightScheme::dirichlet, d.size(), rng);
    const FitResult fit = fit_wls(m, d, w, vec({0, 0}));
    REQUIRE(fit.converged);
    Eigen::MatrixXd X(d.size(), 2);
    for (std::size_t j = 0; j < d.size(); ++j) X.row(j) << 1.0, d.x[j];
    const Eigen::VectorXd ref = oracle::linear_wls(
        X, Eigen::Map<const Eigen::VectorXd>(d.y.data(), d.size()),
        Eigen::Map<const Eigen::VectorXd>(w.data(), w.size()));
    CHECK(std::abs(fit.theta[0] - ref[0]) <= 1e-10);
    CHECK(std::abs(fit.theta[1] - ref[1]) <= 1e-10);
  }
}

TEST_CASE("weighted fit through the origin matches the ratio estimator") {
  ProportionalModel m;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const IndividualData d = noisy_individual(m, vec({2.5}), 9, 1.0, seed);
    RandomStream rng(seed + 7);
    const auto w = draw_weights(WeightScheme::multinomial, d.size(), rng);
    long positive = 0;
    for (double v : w) positive += v > 0.0;
    if (positive == 0) continue;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      sxy += w[j] * d.x[j] * d.y[j];
      sxx += w[j] * d.x[j] * d.x[j];
    }
    const FitResult fit = fit_wls(m, d, w, vec({0}));
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.theta[0] - sxy / sxx) <= 1e-10);
  }
}

TEST_CASE("noise-free biexponential data is recovered") {
  Biexponential4 m;
  const ParamVector truth = vec({1.05, 0.75, -0.45, -1.1});
  IndividualData d = noisy_individual(m, truth, 40, 0.0, 3);
  const FitResult fit = fit_ls(m, d, vec({1.1, 0.9, -0.4, -0.9}));
  REQUIRE(fit.converged);
  CHECK((fit.theta - truth).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("converged fits are stationary and never worse than the start") {
  Biexponential4 m;
  const ParamVector init = vec({1.1, 0.9, -0.4, -0.9});
  int converged = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const IndividualData d = noisy_individual(m, vec({1, 0.8, -0.5, -1}), 30, 0.1, seed);
    const std::vector<double> w(d.size(), 1.0);
    FitOptions opts;
    opts.record_trace = true;
    const FitResult fit = fit_wls(m, d, w, init, opts);
    CHECK(fit.q_min <= objective(m, d, w, init));
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
      CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] * (1.0 + 1e-15));
    }
    if (!fit.converged) continue;
    ++converged;
    CHECK(fit.gradient_norm <= opts.gradient_tolerance * (1.0 + fit.q_min));
    const ParamVector s = score(m, d, w, fit.theta);
    CHECK(2.0 * s.cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(fit.q_min == doctest::Approx(objective(m, d, w, fit.theta)).epsilon(1e-12));
  }
  CHECK(converged >= 25);
}

TEST_CASE("zero weights act exactly like deleting the observations") {
  Biexponential4 m;
  const IndividualData d = noisy_individual(m, vec({1, 0.8, -0.5, -1}), 25, 0.1, 9);
  std::vector<double> w(d.size(), 1.0);
  IndividualData kept;
  kept.id = d.id;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (j % 4 == 1) {
      w[j] = 0.0;
    } else {
      kept.x.push_back(d.x[j]);
      kept.y.push_back(d.y[j]);
    }
  }
  const ParamVector init = vec({1.1, 0.9, -0.4, -0.9});
  const FitResult a = fit_wls(m, d, w, init);
  const FitResult b = fit_ls(m, kept, init);
  CHECK(a.converged == b.converged);
  CHECK(a.iterations == b.iterations);
  CHECK(a.q_min == b.q_min);
  for (int k = 0; k < 4; ++k) CHECK(a.theta[k] == b.theta[k]);
}

TEST_CASE("fits are deterministic") {
  Biexponential4 m;
  const IndividualData d = noisy_individual(m, vec({1, 0.8, -0.5, -1}), 20, 0.1, 4);
  const FitResult a = fit_ls(m, d, vec({1.1, 0.9, -0.4, -0.9}));
  const FitResult b = fit_ls(m, d, vec({1.1, 0.9, -0.4, -0.9}));
  for (int k = 0; k < 4; ++k) CHECK(a.theta[k] == b.theta[k]);
}

TEST_CASE("rank deficiency") {
  StraightLineModel line;
  IndividualData flat{"flat", {2.0, 2.0, 2.0, 2.0}, {1.0, 1.1, 0.9, 1.0}};
  CHECK_THROWS_AS(fit_ls(line, flat, vec({0, 0})), RankDeficientError);

  IndividualData ok{"ok", {0.0, 1.0, 2.0, 3.0}, {1.0, 1.1, 0.9, 1.0}};
  const std::vector<double> one_positive{0.0, 0.0, 4.0, 0.0};
  CHECK_THROWS_AS(fit_wls(line, ok, one_positive, vec({0, 0})), RankDeficientError);
}

TEST_CASE("running out of iterations is reported, not thrown") {
  Biexponential4 m;
  const IndividualData d = noisy_individual(m, vec({1, 0.8, -0.5, -1}), 30, 0.1, 5);
  FitOptions opts;
  opts.max_iterations = 1;
  const FitResult fit = fit_ls(m, d, vec({2, 2, 1, 0}), opts);
  CHECK_FALSE(fit.converged);
  CHECK(fit.iterations == 1);
}

TEST_CASE("a minimum outside the box leaves the fit on the bound, unconverged") {
  SingleExp1 m;
  IndividualData d;
  d.id = "edge";
  for (int j = 1; j <= 20; ++j) d.x.push_back(1e-4 * j);
  d.y.resize(d.x.size());
  m.evaluate(vec({10.5}), d.x, d.y, {});
  const FitResult fit = fit_ls(m, d, vec({9.0}));
  CHECK(fit.theta[0] == 10.0);
  CHECK_FALSE(fit.converged);
  CHECK(fit.gradient_norm > 0.0);
}

TEST_CASE("extra starts never do worse than the first") {
  Biexponential4 m;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const IndividualData d = noisy_individual(m, vec({1, 0.8, -0.5, -1}), 15, 0.1, seed);
    const ParamVector init = vec({1.1, 0.9, -0.4, -0.9});
    FitOptions many;
    many.multistart_count = 4;
    const FitResult one = fit_ls(m, d, init);
    const FitResult best = fit_ls(m, d, init, many);
    if (one.converged) {
      CHECK(best.converged);
      CHECK(best.q_min <= one.q_min);
    }
  }
}

TEST_CASE("argument validation") {
  StraightLineModel m;
  IndividualData d{"a", {0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}};
  CHECK_THROWS_AS(fit_wls(m, d, std::vector<double>{1.0, 1.0}, vec({0, 0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_wls(m, d, std::vector<double>{1.0, -1.0, 1.0}, vec({0, 0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_ls(m, d, vec({0})), std::invalid_argument);
  Biexponential4 b;
  IndividualData e{"b", {0.0, 1.0, 2.0, 3.0, 4.0}, {1.0, 1.0, 1.0, 1.0, 1.0}};
  CHECK_THROWS_AS(fit_ls(b, e, vec({0, 11, 0, 0})), std::invalid_argument);
  FitOptions bad;
  bad.max_iterations = 0;
  CHECK_THROWS_AS(fit_ls(m, d, vec({0, 0}), bad), std::invalid_argument);
}
