#include "rsts/errors.hpp"
#include "rsts/simulate.hpp"
#include "rsts/stats.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace rsts;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

SimDesign single_design(std::size_t N, std::size_t n, double sigma, double lambda) {
  SimDesign d;
  d.model = "singleexp1";
  d.theta0 = vec({0.8});
  d.N = N;
  d.n = n;
  d.sigma = sigma;
  d.lambda = lambda;
  d.seed = 17;
  return d;
}

}  // namespace

TEST_CASE("noise draws have mean zero and the requested spread") {
  for (NoiseKind kind : {NoiseKind::normal, NoiseKind::laplace, NoiseKind::truncated_normal}) {
    RandomStream rng(hash_string(to_string(kind)));
    const std::size_t count = 200000;
    const auto v = sample_noise(kind, 2.0, count, rng);
    const double m = mean(v);
    const double var = sample_variance(v);
    INFO(to_string(kind));
    CHECK(std::abs(m) <= 3.0 * 2.0 / std::sqrt(double(count)));
    // Var of the sample variance is (mu4 - s^4) / count; laplace has the
    // heaviest tails with kurtosis 6.
    CHECK(std::abs(var - 4.0) <= 3.0 * std::sqrt(5.0 * 16.0 / double(count)));
  }
  RandomStream rng(1);
  const auto lap = sample_noise(NoiseKind::laplace, 1.0, 1000000, rng);
  CHECK(std::abs(sample_variance(lap) - 1.0) <= 0.01);
}

TEST_CASE("truncated normal respects its support") {
  RandomStream rng(2);
  const double scale = 0.5;
  const auto v = sample_noise(NoiseKind::truncated_normal, scale, 100000, rng);
  const double bound = kTruncationBound * scale / truncated_normal_sd();
  double widest = 0.0;
  for (double x : v) widest = std::max(widest, std::abs(x));
  CHECK(widest <= bound);
  CHECK(truncated_normal_sd() < 1.0);
  CHECK(truncated_normal_sd() > 0.999);
  CHECK_THROWS_AS(sample_noise(NoiseKind::normal, 0.0, 3, rng), std::invalid_argument);
  CHECK_THROWS_AS(parse_noise_kind("cauchy"), std::invalid_argument);
}

TEST_CASE("switching noise sources off") {
  const ModelPtr m = make_model("singleexp1");
  SimDesign d = single_design(6, 10, 0.3, 0.0);
  RandomStream rng = replicate_stream(d, 0);
  const SimulatedData a = gen_dataset(*m, d, rng);
  for (const auto& t : a.theta) CHECK(t[0] == 0.8);

  d = single_design(6, 10, 0.0, 0.3);
  RandomStream rng2 = replicate_stream(d, 0);
  const SimulatedData b = gen_dataset(*m, d, rng2);
  const ParamVector init = vec({0.9});
  const StsFit fit = fit_sts(*m, b.data, std::span<const ParamVector>(&init, 1));
  REQUIRE(fit.included.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::abs(fit.fits[i].theta[0] - b.theta[i][0]) <= 1e-8);
  }
}

TEST_CASE("a fixed seed fixes the dataset") {
  const ModelPtr m = make_model("biexp4");
  SimDesign d;
  d.theta0 = Biexponential4::reference_theta();
  d.N = 5;
  d.n = 7;
  d.seed = 99;
  RandomStream r1 = replicate_stream(d, 3);
  RandomStream r2 = replicate_stream(d, 3);
  const SimulatedData a = gen_dataset(*m, d, r1);
  const SimulatedData b = gen_dataset(*m, d, r2);
  REQUIRE(a.data.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.data.individuals[i].id == b.data.individuals[i].id);
    CHECK(a.data.individuals[i].x == b.data.individuals[i].x);
    CHECK(a.data.individuals[i].y == b.data.individuals[i].y);
    for (double t : a.data.individuals[i].x) {
      CHECK(t >= d.t_lo);
      CHECK(t <= d.t_hi);
    }
  }
  RandomStream r3 = replicate_stream(d, 4);
  CHECK(gen_dataset(*m, d, r3).data.individuals[0].y != a.data.individuals[0].y);
}

TEST_CASE("design validation") {
  const ModelPtr m = make_model("biexp4");
  SimDesign d;
  d.theta0 = vec({1, 2});
  CHECK_THROWS_AS(d.validate(*m), std::invalid_argument);
  d.theta0 = Biexponential4::reference_theta();
  d.sigma = -1.0;
  CHECK_THROWS_AS(d.validate(*m), std::invalid_argument);
  d.sigma = 0.1;
  d.n = 4;
  CHECK_THROWS_AS(d.validate(*m), std::invalid_argument);
}

TEST_CASE("grid layout") {
  const std::vector<std::size_t> Ns{15, 30}, ns{5, 10, 20};
  const auto g = make_grid(Ns, ns);
  REQUIRE(g.size() == 6);
  CHECK(g[0].N == 15);
  CHECK(g[0].n == 5);
  CHECK(g[2].n == 20);
  CHECK(g[3].N == 30);
}

TEST_CASE("error shrinks along the diagonal") {
  SimDesign d;
  d.theta0 = Biexponential4::reference_theta();
  d.sigma = 0.1;
  d.lambda = 0.1;
  d.replications = 500;
  d.seed = 123;
  const std::vector<GridCell> grid{{15, 15}, {30, 30}, {50, 50}};
  const SimReport r = run_mse_experiment(d, grid);
  REQUIRE(r.cells.size() == 3);
  MESSAGE("mse " << r.cells[0].mse << " " << r.cells[1].mse << " " << r.cells[2].mse);
  CHECK(r.cells[0].mse > r.cells[1].mse);
  CHECK(r.cells[1].mse > r.cells[2].mse);
  for (const auto& c : r.cells) CHECK(c.replicates_used + c.replicate_failures == 500);
}

TEST_CASE("asymptotic coverage near nominal for a well-identified design") {
  SimDesign d = single_design(0, 0, 0.1, 0.1);
  d.replications = 400;
  const std::vector<GridCell> grid{{60, 20}};
  const SimReport r = run_coverage_experiment(d, grid, CoverageMode::asymptotic, RecycleConfig{});
  REQUIRE(r.cells.size() == 1);
  // 400 Bernoulli(0.95) trials: sd about 0.011.
  CHECK(r.cells[0].coverage == doctest::Approx(0.95).epsilon(0.05));
  CHECK(r.cells[0].mean_ci_length > 0.0);
  // The same run again is identical.
  const SimReport again =
      run_coverage_experiment(d, grid, CoverageMode::asymptotic, RecycleConfig{});
  CHECK(again.cells[0].coverage == r.cells[0].coverage);
  CHECK(again.cells[0].mean_ci_length == r.cells[0].mean_ci_length);
}

TEST_CASE("coverage and central-limit diagnostics need a one-parameter model") {
  SimDesign d;
  d.theta0 = Biexponential4::reference_theta();
  d.replications = 5;
  const std::vector<GridCell> grid{{10, 10}};
  CHECK_THROWS_AS(run_coverage_experiment(d, grid, CoverageMode::asymptotic, RecycleConfig{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(diagnose_clt(d, 10, RecycleConfig{}), std::invalid_argument);
  SimDesign s = single_design(20, 20, 0.1, 0.0);
  CHECK_THROWS_AS(diagnose_clt(s, 10, RecycleConfig{}), std::invalid_argument);
}

TEST_CASE("central-limit diagnostics on a small design") {
  SimDesign d = single_design(40, 30, 0.1, 0.1);
  RecycleConfig rc;
  rc.B = 300;
  const CltDiagnostics c = diagnose_clt(d, 300, rc);
  CHECK(c.sampling.size() + c.replicate_failures == 300);
  CHECK(c.recycled.size() >= 250);
  CHECK(c.ks_sampling < 0.1);
  CHECK(c.ks_two_sample == doctest::Approx(ks_distance_two_sample(c.sampling, c.recycled)));
}
