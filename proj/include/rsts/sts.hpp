#pragma once

#include "rsts/model.hpp"
#include "rsts/nls.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rsts {

struct HierDataset {
  std::vector<IndividualData> individuals;

  std::size_t size() const { return individuals.size(); }
  std::size_t total_observations() const;
};

// Throws std::invalid_argument unless N >= 2, every individual has
// n_i > p finite observations.
void validate_dataset(const HierDataset& data, int p);

struct StageOneResult {
  std::vector<FitResult> fits;        // one per individual, dataset order
  std::vector<std::size_t> included;  // indices of converged fits
  double sigma_sq_M = 0.0;            // pooled within-individual variance
  std::size_t dropped = 0;
};

struct StsFit {
  std::vector<std::string> ids;          // converged individuals, dataset order
  std::vector<ParamVector> theta_hat_i;  // aligned with ids
  std::vector<FitResult> fits;           // every individual, dataset order
  std::vector<std::size_t> included;
  ParamVector theta_sts;
  double sigma_sq_M = 0.0;
  ParamMatrix S2;  // sum of outer products, no divisor
  ParamMatrix Sigma_N_hat;
  double nu_hat = 0.0;
  ParamMatrix D_hat;
  // False when some converged fit has a singular gradient design; Sigma_N_hat,
  // nu_hat and D_hat are then NaN while the mean and S2 remain valid.
  bool dispersion_available = false;
  ParamMatrix var_theta_sts;  // S2 / N
  std::optional<double> lambda_hat_sq_uncorrected;  // p == 1 only, divisor N - 1
  std::size_t dropped = 0;

  std::size_t converged_count() const { return theta_hat_i.size(); }
};

// Per-individual least squares. `inits` holds one start per individual or a
// single start broadcast to all. Fits that fail to converge (or throw
// RankDeficientError / NumericDomainError) are dropped and excluded from
// sigma_sq_M, whose M and N count only converged individuals. Throws
// EstimationError when fewer than two individuals converge.
StageOneResult stage_one(const Model& model, const HierDataset& data,
                         std::span<const ParamVector> inits, const FitOptions& opts = {});

// Population mean, S2 and the uncorrected lambda^2 from per-individual
// estimates. Fills theta_sts, S2, var_theta_sts and lambda_hat_sq_uncorrected;
// the remaining fields are left default. Throws EstimationError for fewer
// than two estimates.
StsFit stage_two(std::span<const ParamVector> theta_hat);

// [ (1/n) sum_j grad f_j grad f_j^T ]^{-1}. Throws SingularDesignError when
// the gradient matrix is rank deficient.
ParamMatrix sigma_matrix(const Model& model, const ParamVector& theta, std::span<const double> x);

struct DEstimate {
  double nu_hat = 0.0;
  ParamMatrix D_hat;
};

// nu_hat = smallest root of |S2 - nu Sigma_N| = 0, found by Cholesky
// reduction of the pencil; D_hat = S2 - min(nu_hat, sigma_sq_M) Sigma_N.
DEstimate estimate_D(const ParamMatrix& S2, const ParamMatrix& Sigma_N, double sigma_sq_M);

// Stage I, Stage II, per-individual Sigma at the estimates and the
// corrected D_hat. A singular per-individual design does not throw; it
// clears dispersion_available instead.
StsFit fit_sts(const Model& model, const HierDataset& data, std::span<const ParamVector> inits,
               const FitOptions& opts = {});

}  // namespace rsts
