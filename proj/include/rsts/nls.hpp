#pragma once

#include "rsts/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace rsts {

// Repeated measurements (x_ij, y_ij), j = 1..n_i, for one individual.
struct IndividualData {
  std::string id;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const { return x.size(); }
};

struct FitOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;  // on the projected ||grad Q||_inf, scaled by (1 + Q)
  double step_tolerance = 1e-12;      // relative to ||theta||
  double initial_lm_damping = 1e-3;
  int multistart_count = 1;
  bool record_trace = false;  // keep Q after every accepted step
};

struct FitResult {
  ParamVector theta;
  double q_min = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // ||grad Q||_inf at theta
  std::vector<double> objective_trace;
};

// Q(theta) = sum_j w_j (y_j - f(x_j; theta))^2.
double objective(const Model& model, const IndividualData& data, std::span<const double> weights,
                 const ParamVector& theta);

// Minimizes the weighted objective by Levenberg-Marquardt on the sqrt(w)
// scaled residuals. Iterates stay inside the model's default bounds, if any.
// converged means the full gradient is within gradient_tolerance * (1 + Q)
// and the Gauss-Newton information is nonsingular; a point held on a bound,
// or on a flat plateau, is reported unconverged.
//
// Throws std::invalid_argument on size mismatches, negative weights or an
// initial point outside the bounds, and RankDeficientError when fewer than
// p weights are positive or the initial normal matrix is singular. Running
// out of iterations is not an error: the result has converged == false.
FitResult fit_wls(const Model& model, const IndividualData& data, std::span<const double> weights,
                  const ParamVector& theta_init, const FitOptions& opts = {});

// Unweighted fit; runs fit_wls with unit weights.
FitResult fit_ls(const Model& model, const IndividualData& data, const ParamVector& theta_init,
                 const FitOptions& opts = {});

}  // namespace rsts
