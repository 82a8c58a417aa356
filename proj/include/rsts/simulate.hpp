#pragma once

#include "rsts/model.hpp"
#include "rsts/nls.hpp"
#include "rsts/recycle.hpp"
#include "rsts/rng.hpp"
#include "rsts/sts.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rsts {

enum class NoiseKind { truncated_normal, normal, laplace };

NoiseKind parse_noise_kind(std::string_view name);
std::string_view to_string(NoiseKind kind);

// Truncation point of the standard normal used by truncated_normal.
inline constexpr double kTruncationBound = 4.0;

// Standard deviation of N(0, 1) truncated to [-4, 4].
double truncated_normal_sd();

// i.i.d. mean-zero draws with standard deviation `scale`:
//   normal            N(0, scale^2)
//   laplace           Laplace(0, scale / sqrt(2))
//   truncated_normal  N(0, 1) restricted to [-4, 4], times scale / truncated_normal_sd()
// Throws std::invalid_argument when scale <= 0.
void sample_noise(NoiseKind kind, double scale, std::span<double> out, RandomStream& rng);
std::vector<double> sample_noise(NoiseKind kind, double scale, std::size_t count,
                                 RandomStream& rng);

struct SimDesign {
  std::string model = "biexp4";
  ParamVector theta0;
  std::size_t N = 15;
  std::size_t n = 15;
  double sigma = 0.1;   // within-individual sd
  double lambda = 0.1;  // between-individual sd, per coordinate
  NoiseKind error_noise = NoiseKind::truncated_normal;
  NoiseKind effect_noise = NoiseKind::truncated_normal;
  double t_lo = 0.0;
  double t_hi = 8.0;
  std::size_t replications = 200;
  std::uint64_t seed = 1;
  // Stage I starts at theta0 + init_offset in every coordinate.
  double init_offset = 0.1;
  FitOptions fit_options;

  // Throws std::invalid_argument when the design is unusable for `model`.
  void validate(const Model& model) const;
};

struct SimulatedData {
  HierDataset data;
  std::vector<ParamVector> effects;  // b_i
  std::vector<ParamVector> theta;    // theta0 + b_i
};

// One dataset under y_ij = f(t_ij; theta0 + b_i) + e_ij with t_ij uniform on
// [t_lo, t_hi]. A zero sigma or lambda switches that noise source off.
SimulatedData gen_dataset(const Model& model, const SimDesign& design, RandomStream& rng);

// Stream for Monte Carlo replicate r of the (N, n) cell. Keyed by the cell
// size rather than its grid position, so a cell reproduces on its own.
RandomStream replicate_stream(const SimDesign& design, std::size_t replicate);

struct GridCell {
  std::size_t N = 0;
  std::size_t n = 0;
};

std::vector<GridCell> make_grid(std::span<const std::size_t> Ns, std::span<const std::size_t> ns);

struct CellResult {
  std::size_t N = 0;
  std::size_t n = 0;
  double mse = 0.0;
  double coverage = 0.0;        // NaN for MSE-only experiments
  double mean_ci_length = 0.0;  // NaN for MSE-only experiments
  double drop_rate = 0.0;       // discarded Stage I fits / attempted
  std::size_t replicates_used = 0;
  std::size_t replicate_failures = 0;  // Monte Carlo replicates discarded entirely
  std::size_t stage_one_drops = 0;
  std::size_t stage_one_fits = 0;
  std::size_t bootstrap_drops = 0;  // recycled mode only
  std::size_t bootstrap_replicates = 0;
  bool flagged = false;  // more than 20% drops at any level
};

enum class CoverageMode { asymptotic, recycled };

std::string_view to_string(CoverageMode mode);
CoverageMode parse_coverage_mode(std::string_view name);

struct SimReport {
  std::string experiment;  // "mse" or "coverage"
  std::string mode;        // "", "asymptotic" or "recycled"
  SimDesign base;
  std::vector<CellResult> cells;
};

// Mean of ||theta_STS - theta0||^2 over design.replications datasets per cell.
SimReport run_mse_experiment(const SimDesign& base, std::span<const GridCell> grid,
                             std::size_t threads = 1);

// Coverage of theta0 and mean interval length for a one-parameter model.
// Asymptotic intervals are theta_STS +- z lambda_hat / sqrt(N) with the
// uncorrected lambda_hat; recycled intervals come from recycle_bootstrap
// and build_ci under `recycle`.
SimReport run_coverage_experiment(const SimDesign& base, std::span<const GridCell> grid,
                                  CoverageMode mode, const RecycleConfig& recycle,
                                  double level = 0.95, std::size_t threads = 1);

struct CltDiagnostics {
  double ks_sampling = 0.0;    // KS(R_N, Phi)
  double ks_recycled = 0.0;    // KS(R*_N, Phi) for one dataset
  double ks_two_sample = 0.0;  // sup |H*_N - H_N|
  std::vector<double> sampling;  // R_N values
  std::vector<double> recycled;  // R*_N values
  std::size_t replicate_failures = 0;
};

// R Monte Carlo replicates of R_N = sqrt(N) / lambda (theta_STS - theta0),
// plus the recycled R*_N = sqrt(N) / (lambda tau_N) (theta* - theta_STS)
// from one further dataset. Both use the true lambda. Throws
// std::invalid_argument when lambda == 0 or the model has p != 1.
CltDiagnostics diagnose_clt(const SimDesign& design, std::size_t R, const RecycleConfig& recycle,
                            std::size_t threads = 1);

}  // namespace rsts
