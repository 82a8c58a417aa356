#pragma once

#include "rsts/model.hpp"
#include "rsts/nls.hpp"
#include "rsts/sts.hpp"
#include "rsts/weights.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace rsts {

enum class CiMethod { basic_studentized, percentile };

CiMethod parse_ci_method(std::string_view name);
std::string_view to_string(CiMethod method);

// How Stage II* combines the outer weights u with the refitted estimates.
//   literal          (1/N) sum_i u_i theta*_i
//   self_normalized  sum_i u_i theta*_i / sum_i u_i
// The two agree for multinomial weights (sum u = N exactly) and up to
// rounding for Dirichlet weights. They differ for exponential weights, whose
// sum is free: the literal form then carries the spread of sum_i u_i times
// the mean level of theta, which does not vanish as N grows.
enum class OuterCombination { self_normalized, literal };

struct RecycleConfig {
  std::size_t B = 1000;
  WeightScheme inner_scheme = WeightScheme::dirichlet;
  WeightScheme outer_scheme = WeightScheme::dirichlet;
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::basic_studentized;
  OuterCombination combination = OuterCombination::self_normalized;
  // Test hook: every inner and outer weight is 1. tau_N still comes from
  // outer_scheme.
  bool unit_weights = false;
  int max_retries = 3;
  FitOptions fit_options;
  std::size_t threads = 1;

  // Throws std::invalid_argument unless B >= 100 and 0 < ci_level < 1.
  void validate() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

struct RecycleRun {
  Eigen::MatrixXd replicates;                // surviving replicates x p
  std::vector<std::size_t> replicate_index;  // original index of each row
  ParamVector theta_sts;
  double tau_N = 1.0;
  std::size_t N = 0;
  std::vector<Interval> intervals;  // per coordinate
  std::size_t drop_count = 0;
  std::size_t retry_count = 0;
  bool unreliable = false;  // more than 20% of replicates dropped
};

// A Stage I* refit failed for the given attempt.
class ReplicateFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One recycled replicate theta*_STS. Inner weights for individual i come
// from the stream (seed, replicate, attempt, hash(id_i)), the outer weights
// from (seed, replicate, attempt, N) and are handed out in id order, so
// results do not depend on the order individuals are stored in. Throws ReplicateFailure when any refit fails.
ParamVector recycle_once(const Model& model, const HierDataset& data, const StsFit& base_fit,
                         const RecycleConfig& cfg, std::uint64_t seed, std::size_t replicate,
                         int attempt = 0);

// B replicates with up to cfg.max_retries fresh attempts each; replicates
// still failing are dropped. Intervals are filled when at least 100
// replicates survive. Bitwise reproducible for a given (seed, cfg, data),
// independent of cfg.threads.
RecycleRun recycle_bootstrap(const Model& model, const HierDataset& data, const StsFit& base_fit,
                             const RecycleConfig& cfg, std::uint64_t seed);

// Per-coordinate intervals from the tau_N-studentized pivot
// q = (theta* - theta_STS) / tau_N:
//   basic_studentized  [theta - q_{(1+level)/2}, theta - q_{(1-level)/2}]
//   percentile         [theta + q_{(1-level)/2}, theta + q_{(1+level)/2}]
// Throws EstimationError with fewer than 100 replicates.
std::vector<Interval> build_ci(const RecycleRun& run, double level, CiMethod method);

// KS distance between sqrt(N) / (lambda tau_N) (theta* - theta_STS) for one
// coordinate and the standard normal.
double ks_to_normal(const RecycleRun& run, double lambda_hat, int coordinate = 0);

// The studentized values used by ks_to_normal.
std::vector<double> studentized_replicates(const RecycleRun& run, double lambda, int coordinate);

}  // namespace rsts
