#include "rsts/nls.hpp"

#include "rsts/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rsts {

namespace {

constexpr double kIdentifiabilityFloor = 1e-12;

void check_inputs(const Model& model, const IndividualData& data, std::span<const double> weights,
                  const ParamVector& theta) {
  if (data.x.size() != data.y.size()) {
    throw std::invalid_argument("individual '" + data.id + "': x and y lengths differ");
  }
  if (weights.size() != data.size()) {
    throw std::invalid_argument("individual '" + data.id + "': expected " +
                                std::to_string(data.size()) + " weights, got " +
                                std::to_string(weights.size()));
  }
  if (theta.size() != model.parameter_count()) {
    throw std::invalid_argument("model '" + std::string(model.name()) + "' expects " +
                                std::to_string(model.parameter_count()) + " parameters");
  }
}

// Per-fit state: residuals and the p x p normal-equation pieces at one theta.
struct LinearizedProblem {
  double q = 0.0;
  ParamMatrix normal;  // J^T W J
  ParamVector rhs;     // J^T W r, r = y - f; grad Q = -2 rhs
};

class Workspace {
 public:
  Workspace(const Model& model, const IndividualData& data, std::span<const double> weights)
      : model_(model),
        data_(data),
        weights_(weights),
        p_(model.parameter_count()),
        values_(data.size()),
        jacobian_(data.size() * static_cast<std::size_t>(p_)) {}

  // Objective only; returns NaN when the model is not finite at theta.
  double value(const ParamVector& theta) {
    model_.evaluate(theta, data_.x, values_, {});
    double q = 0.0;
    for (std::size_t j = 0; j < data_.size(); ++j) {
      if (weights_[j] == 0.0) continue;
      const double r = data_.y[j] - values_[j];
      q += weights_[j] * r * r;
    }
    return std::isfinite(q) ? q : std::numeric_limits<double>::quiet_NaN();
  }

  bool linearize(const ParamVector& theta, LinearizedProblem& out) {
    model_.evaluate(theta, data_.x, values_, jacobian_);
    out.q = 0.0;
    out.normal.setZero(p_, p_);
    out.rhs.setZero(p_);
    for (std::size_t j = 0; j < data_.size(); ++j) {
      const double w = weights_[j];
      if (w == 0.0) continue;
      const double r = data_.y[j] - values_[j];
      const double* row = &jacobian_[j * static_cast<std::size_t>(p_)];
      out.q += w * r * r;
      for (int a = 0; a < p_; ++a) {
        out.rhs[a] += w * r * row[a];
        for (int b = 0; b <= a; ++b) out.normal(a, b) += w * row[a] * row[b];
      }
    }
    for (int a = 0; a < p_; ++a)
      for (int b = 0; b < a; ++b) out.normal(b, a) = out.normal(a, b);
    return std::isfinite(out.q) && out.normal.allFinite() && out.rhs.allFinite();
  }

 private:
  const Model& model_;
  const IndividualData& data_;
  std::span<const double> weights_;
  int p_;
  std::vector<double> values_;
  std::vector<double> jacobian_;
};

// ||grad Q||_inf after zeroing components that push against an active bound;
// drives the iteration, which can stop early on a bound.
double projected_gradient_norm(const ParamVector& rhs, const ParamVector& theta,
                               const std::optional<ParamBounds>& bounds) {
  double norm = 0.0;
  for (Eigen::Index k = 0; k < rhs.size(); ++k) {
    const double grad = -2.0 * rhs[k];
    if (bounds) {
      if (theta[k] <= bounds->lower[k] && grad > 0.0) continue;
      if (theta[k] >= bounds->upper[k] && grad < 0.0) continue;
    }
    norm = std::max(norm, std::abs(grad));
  }
  return norm;
}

void check_rank(const ParamMatrix& normal, const std::string& id) {
  Eigen::SelfAdjointEigenSolver<ParamMatrix> eig(normal, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(largest > 0.0) || smallest <= 1e-13 * largest) {
    throw RankDeficientError("individual '" + id +
                             "': normal equations are singular at the starting point");
  }
}

// A zero gradient on a plateau (say a decay rate so large that its term has
// vanished at every design point) does not determine theta. Require the
// Gauss-Newton information to be nonsingular relative to its own scale and
// to the residual level.
bool locally_identified(const LinearizedProblem& lin) {
  Eigen::SelfAdjointEigenSolver<ParamMatrix> eig(lin.normal, Eigen::EigenvaluesOnly);
  const double scale = std::max(eig.eigenvalues().maxCoeff(), 1.0 + lin.q);
  return eig.eigenvalues().minCoeff() > kIdentifiabilityFloor * scale;
}

FitResult levenberg_marquardt(Workspace& ws, const ParamVector& theta_init,
                              const std::optional<ParamBounds>& bounds, const FitOptions& opts,
                              const std::string& id) {
  const Eigen::Index p = theta_init.size();
  FitResult result;
  ParamVector theta = theta_init;
  LinearizedProblem lin;
  if (!ws.linearize(theta, lin)) {
    throw NumericDomainError("individual '" + id + "': objective is not finite at the start");
  }
  check_rank(lin.normal, id);
  if (opts.record_trace) result.objective_trace.push_back(lin.q);

  double mu = opts.initial_lm_damping;
  double growth = 2.0;
  double gnorm = projected_gradient_norm(lin.rhs, theta, bounds);
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    if (gnorm <= opts.gradient_tolerance * (1.0 + lin.q)) break;

    // Marquardt scaling: damp along diag(J^T W J), floored so flat
    // directions still get a well-posed step.
    const double diag_floor = 1e-12 * lin.normal.diagonal().maxCoeff() + 1e-300;
    ParamMatrix damped = lin.normal;
    ParamVector rhs = lin.rhs;
    for (Eigen::Index k = 0; k < p; ++k)
      damped(k, k) += mu * std::max(lin.normal(k, k), diag_floor);
    // Coordinates pinned on a bound with descent pointing outward stay put.
    if (bounds) {
      for (Eigen::Index k = 0; k < p; ++k) {
        const bool pinned = (theta[k] <= bounds->lower[k] && rhs[k] < 0.0) ||
                            (theta[k] >= bounds->upper[k] && rhs[k] > 0.0);
        if (!pinned) continue;
        damped.row(k).setZero();
        damped.col(k).setZero();
        damped(k, k) = 1.0;
        rhs[k] = 0.0;
      }
    }
    const ParamVector step = damped.ldlt().solve(rhs);
    ParamVector trial = theta + step;
    if (bounds) trial = bounds->clamp(trial);
    const ParamVector taken = trial - theta;
    if (!taken.allFinite()) {
      mu *= growth;
      growth *= 2.0;
      continue;
    }
    if (taken.norm() <= opts.step_tolerance * (theta.norm() + opts.step_tolerance)) break;

    const double q_trial = ws.value(trial);
    const double predicted = 2.0 * taken.dot(lin.rhs) - taken.dot(lin.normal * taken);
    bool accept = std::isfinite(q_trial) && q_trial < lin.q && predicted > 0.0;
    const bool regular = accept;
    LinearizedProblem next;
    double next_gnorm = 0.0;
    if (!accept && std::isfinite(q_trial) &&
        q_trial <= lin.q * (1.0 + 8.0 * std::numeric_limits<double>::epsilon())) {
      // Objective differences are at rounding level here; judge by the
      // gradient, trying the undamped Gauss-Newton step first.
      ParamVector polish = theta + lin.normal.ldlt().solve(lin.rhs);
      if (bounds) polish = bounds->clamp(polish);
      if (polish.allFinite() && ws.linearize(polish, next)) {
        next_gnorm = projected_gradient_norm(next.rhs, polish, bounds);
        accept = next_gnorm < gnorm && next.q <= lin.q * (1.0 + 8.0 * std::numeric_limits<double>::epsilon());
        if (accept) trial = polish;
      }
      if (!accept && ws.linearize(trial, next)) {
        next_gnorm = projected_gradient_norm(next.rhs, trial, bounds);
        accept = next_gnorm < gnorm;
      }
    } else if (accept) {
      accept = ws.linearize(trial, next);
      if (accept) next_gnorm = projected_gradient_norm(next.rhs, trial, bounds);
    }
    if (accept) {
      const double lin_q_before = lin.q;
      theta = trial;
      lin = next;
      gnorm = next_gnorm;
      if (opts.record_trace) result.objective_trace.push_back(lin.q);
      if (regular) {
        const double rho = (lin_q_before - q_trial) / predicted;
        const double cube = 2.0 * rho - 1.0;
        mu *= std::max(1.0 / 3.0, 1.0 - cube * cube * cube);
      }
      growth = 2.0;
    } else {
      mu *= growth;
      growth *= 2.0;
      if (mu > 1e20) break;
    }
  }

  result.theta = theta;
  result.q_min = lin.q;
  result.iterations = iter;
  // The box only safeguards the search: a point held there by the bound is
  // not stationary, so convergence is judged on the full gradient.
  result.gradient_norm = 2.0 * lin.rhs.cwiseAbs().maxCoeff();
  result.converged = result.gradient_norm <= opts.gradient_tolerance * (1.0 + lin.q) &&
                     locally_identified(lin);
  return result;
}

// Deterministic perturbation for the k-th extra start (k >= 1).
ParamVector perturbed_start(const ParamVector& base, int k) {
  ParamVector start = base;
  const double magnitude = 0.5 * static_cast<double>((k + 1) / 2);
  for (Eigen::Index j = 0; j < base.size(); ++j) {
    const bool positive = ((k + j) % 2) == 0;
    start[j] += positive ? magnitude : -magnitude;
  }
  return start;
}

}  // namespace

double objective(const Model& model, const IndividualData& data, std::span<const double> weights,
                 const ParamVector& theta) {
  check_inputs(model, data, weights, theta);
  std::vector<double> values(data.size());
  model.evaluate(theta, data.x, values, {});
  double q = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (weights[j] == 0.0) continue;
    const double r = data.y[j] - values[j];
    q += weights[j] * r * r;
  }
  if (!std::isfinite(q)) throw NumericDomainError("objective is not finite");
  return q;
}

FitResult fit_wls(const Model& model, const IndividualData& data, std::span<const double> weights,
                  const ParamVector& theta_init, const FitOptions& opts) {
  check_inputs(model, data, weights, theta_init);
  if (opts.max_iterations <= 0 || opts.gradient_tolerance <= 0.0 || opts.step_tolerance <= 0.0 ||
      opts.initial_lm_damping <= 0.0 || opts.multistart_count <= 0) {
    throw std::invalid_argument("fit options must all be positive");
  }
  const auto bounds = model.default_bounds();
  if (bounds && !bounds->contains(theta_init)) {
    throw std::invalid_argument("individual '" + data.id +
                                "': initial parameters lie outside the model bounds");
  }
  long positive = 0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("weights must be finite and nonnegative");
    }
    if (w > 0.0) ++positive;
  }
  if (positive < model.parameter_count()) {
    throw RankDeficientError("individual '" + data.id + "': only " + std::to_string(positive) +
                             " positive weights for " +
                             std::to_string(model.parameter_count()) + " parameters");
  }

  Workspace ws(model, data, weights);
  FitResult best = levenberg_marquardt(ws, theta_init, bounds, opts, data.id);
  for (int k = 1; k < opts.multistart_count; ++k) {
    ParamVector start = perturbed_start(theta_init, k);
    if (bounds) start = bounds->clamp(start);
    FitResult candidate;
    try {
      candidate = levenberg_marquardt(ws, start, bounds, opts, data.id);
    } catch (const RankDeficientError&) {
      continue;
    } catch (const NumericDomainError&) {
      continue;
    }
    const bool better = (candidate.converged && !best.converged) ||
                        (candidate.converged == best.converged && candidate.q_min < best.q_min);
    if (better) best = std::move(candidate);
  }
  return best;
}

FitResult fit_ls(const Model& model, const IndividualData& data, const ParamVector& theta_init,
                 const FitOptions& opts) {
  const std::vector<double> ones(data.size(), 1.0);
  return fit_wls(model, data, ones, theta_init, opts);
}

}  // namespace rsts
