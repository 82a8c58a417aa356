#pragma once

#include "rsts/rng.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rsts {

// Exchangeable, nonnegative, mean-one random weights.
//   multinomial  Efron bootstrap counts: n draws over n equiprobable cells.
//   dirichlet    n * Dirichlet(1, ..., 1), the Bayesian bootstrap.
//   exponential  i.i.d. Exponential(1).
enum class WeightScheme { multinomial, dirichlet, exponential };

WeightScheme parse_weight_scheme(std::string_view name);
std::string_view to_string(WeightScheme scheme);

// Fills `out` with one draw of size out.size(). Throws std::invalid_argument
// when out is empty.
void draw_weights(WeightScheme scheme, std::span<double> out, RandomStream& rng);
std::vector<double> draw_weights(WeightScheme scheme, std::size_t n, RandomStream& rng);

// Exact coordinate variance Var(w_i) at size n.
double tau_sq(WeightScheme scheme, std::size_t n);

struct MomentCheck {
  std::string name;
  double estimate = 0.0;
  double target = 0.0;
  double tolerance = 0.0;  // pass iff |estimate - target| <= tolerance
  bool pass = false;
};

struct AssumptionWReport {
  std::string scheme;
  std::size_t n = 0;
  std::size_t draws = 0;
  double tau_sq = 0.0;
  std::vector<MomentCheck> checks;

  bool all_pass() const;
};

using WeightSampler = std::function<void(RandomStream&, std::span<double>)>;

// Monte Carlo check of the weight moment conditions on coordinates 1 and 2
// over `draws` independent draws. Tolerances are three Monte Carlo standard
// errors, plus a documented slack of 2/n for E(W_i W_j) (which only has to
// be O(1/n)) and 10/n for E(W_i^2 W_j^2) (which only has to tend to 1).
// Throws std::invalid_argument for n < 2 or draws < 10^4.
AssumptionWReport check_assumption_w(const WeightSampler& sampler, std::string scheme_name,
                                     double declared_tau_sq, std::size_t n, std::size_t draws,
                                     RandomStream& rng);
AssumptionWReport check_assumption_w(WeightScheme scheme, std::size_t n, std::size_t draws,
                                     RandomStream& rng);

}  // namespace rsts
