#include "rsts/weights.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rsts {

WeightScheme parse_weight_scheme(std::string_view name) {
  if (name == "multinomial") return WeightScheme::multinomial;
  if (name == "dirichlet") return WeightScheme::dirichlet;
  if (name == "exponential") return WeightScheme::exponential;
  throw std::invalid_argument("unknown weight scheme '" + std::string(name) +
                              "' (expected multinomial, dirichlet or exponential)");
}

std::string_view to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::multinomial: return "multinomial";
    case WeightScheme::dirichlet: return "dirichlet";
    case WeightScheme::exponential: return "exponential";
  }
  return "?";
}

void draw_weights(WeightScheme scheme, std::span<double> out, RandomStream& rng) {
  const std::size_t n = out.size();
  if (n == 0) throw std::invalid_argument("weight vector size must be positive");
  switch (scheme) {
    case WeightScheme::multinomial: {
      std::fill(out.begin(), out.end(), 0.0);
      std::uniform_int_distribution<std::size_t> cell(0, n - 1);
      for (std::size_t k = 0; k < n; ++k) out[cell(rng)] += 1.0;
      return;
    }
    case WeightScheme::dirichlet: {
      double total = 0.0;
      for (double& w : out) {
        w = -std::log(rng.uniform01());
        total += w;
      }
      const double scale = static_cast<double>(n) / total;
      for (double& w : out) w *= scale;
      return;
    }
    case WeightScheme::exponential:
      for (double& w : out) w = -std::log(rng.uniform01());
      return;
  }
}

std::vector<double> draw_weights(WeightScheme scheme, std::size_t n, RandomStream& rng) {
  std::vector<double> out(n);
  draw_weights(scheme, out, rng);
  return out;
}

double tau_sq(WeightScheme scheme, std::size_t n) {
  if (n == 0) throw std::invalid_argument("weight vector size must be positive");
  const double nn = static_cast<double>(n);
  switch (scheme) {
    case WeightScheme::multinomial: return (nn - 1.0) / nn;
    case WeightScheme::dirichlet: return (nn - 1.0) / (nn + 1.0);
    case WeightScheme::exponential: return 1.0;
  }
  return 0.0;
}

bool AssumptionWReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

namespace {

// Running mean and variance of one scalar statistic.
struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++count;
  }
  double mean() const { return sum / static_cast<double>(count); }
  double variance() const {
    const double m = mean();
    return std::max(0.0, sum_sq / static_cast<double>(count) - m * m);
  }
  double standard_error() const { return std::sqrt(variance() / static_cast<double>(count)); }
};

MomentCheck make_check(std::string name, double estimate, double target, double tolerance) {
  MomentCheck c{std::move(name), estimate, target, tolerance, false};
  c.pass = std::isfinite(estimate) && std::abs(estimate - target) <= tolerance;
  return c;
}

}  // namespace

AssumptionWReport check_assumption_w(const WeightSampler& sampler, std::string scheme_name,
                                     double declared_tau_sq, std::size_t n, std::size_t draws,
                                     RandomStream& rng) {
  if (n < 2) throw std::invalid_argument("moment diagnostics need n >= 2");
  if (draws < 10000) throw std::invalid_argument("moment diagnostics need at least 10^4 draws");
  if (!(declared_tau_sq > 0.0)) throw std::invalid_argument("declared tau^2 must be positive");

  const double tau = std::sqrt(declared_tau_sq);
  std::vector<double> w(n);
  Accumulator first, centered_sq, cross, cross_sq, fourth;
  for (std::size_t d = 0; d < draws; ++d) {
    sampler(rng, w);
    const double w1 = w[0];
    const double W1 = (w[0] - 1.0) / tau;
    const double W2 = (w[1] - 1.0) / tau;
    first.add(w1);
    centered_sq.add((w1 - 1.0) * (w1 - 1.0));
    cross.add(W1 * W2);
    cross_sq.add(W1 * W1 * W2 * W2);
    fourth.add(W1 * W1 * W1 * W1);
  }

  const double nn = static_cast<double>(n);
  AssumptionWReport report;
  report.scheme = std::move(scheme_name);
  report.n = n;
  report.draws = draws;
  report.tau_sq = declared_tau_sq;

  report.checks.push_back(make_check("mean(w_i)", first.mean(), 1.0, 3.0 * first.standard_error()));
  // Variance around the known mean 1; the centered-square average is unbiased for tau^2.
  report.checks.push_back(make_check("var(w_i)", centered_sq.mean(), declared_tau_sq,
                                     3.0 * centered_sq.standard_error()));
  report.checks.push_back(
      make_check("E(W_i W_j)", cross.mean(), 0.0, 2.0 / nn + 3.0 * cross.standard_error()));
  report.checks.push_back(make_check("E(W_i^2 W_j^2)", cross_sq.mean(), 1.0,
                                     10.0 / nn + 3.0 * cross_sq.standard_error()));
  {
    MomentCheck c{"E(W_i^4)", fourth.mean(), fourth.mean(), 0.0, false};
    c.pass = std::isfinite(fourth.mean()) && std::isfinite(fourth.standard_error());
    report.checks.push_back(c);
  }
  report.checks.push_back(make_check("tau^2 / n", declared_tau_sq / nn, 0.0, 1.0));
  return report;
}

AssumptionWReport check_assumption_w(WeightScheme scheme, std::size_t n, std::size_t draws,
                                     RandomStream& rng) {
  const WeightSampler sampler = [scheme](RandomStream& r, std::span<double> out) {
    draw_weights(scheme, out, r);
  };
  return check_assumption_w(sampler, std::string(to_string(scheme)), tau_sq(scheme, n), n, draws,
                            rng);
}

}  // namespace rsts
