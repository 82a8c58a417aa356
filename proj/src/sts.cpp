#include "rsts/sts.hpp"

#include "rsts/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rsts {

std::size_t HierDataset::total_observations() const {
  std::size_t m = 0;
  for (const auto& ind : individuals) m += ind.size();
  return m;
}

void validate_dataset(const HierDataset& data, int p) {
  if (data.size() < 2) throw std::invalid_argument("dataset needs at least two individuals");
  for (const auto& ind : data.individuals) {
    if (ind.x.size() != ind.y.size()) {
      throw std::invalid_argument("individual '" + ind.id + "': x and y lengths differ");
    }
    if (ind.size() <= static_cast<std::size_t>(p)) {
      throw std::invalid_argument("individual '" + ind.id + "' has " + std::to_string(ind.size()) +
                                  " observations; more than " + std::to_string(p) +
                                  " are required");
    }
    for (std::size_t j = 0; j < ind.size(); ++j) {
      if (!std::isfinite(ind.x[j]) || !std::isfinite(ind.y[j])) {
        throw std::invalid_argument("individual '" + ind.id + "' has non-finite observations");
      }
    }
  }
}

StageOneResult stage_one(const Model& model, const HierDataset& data,
                         std::span<const ParamVector> inits, const FitOptions& opts) {
  const int p = model.parameter_count();
  validate_dataset(data, p);
  if (inits.size() != 1 && inits.size() != data.size()) {
    throw std::invalid_argument("expected one initial vector or one per individual");
  }

  StageOneResult out;
  out.fits.reserve(data.size());
  double q_total = 0.0;
  std::size_t m_used = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ind = data.individuals[i];
    const ParamVector& init = inits.size() == 1 ? inits[0] : inits[i];
    FitResult fit;
    try {
      fit = fit_ls(model, ind, init, opts);
    } catch (const RankDeficientError&) {
      fit.theta = init;
      fit.converged = false;
    } catch (const NumericDomainError&) {
      fit.theta = init;
      fit.converged = false;
    }
    if (fit.converged) {
      out.included.push_back(i);
      q_total += fit.q_min;
      m_used += ind.size();
    } else {
      ++out.dropped;
    }
    out.fits.push_back(std::move(fit));
  }
  const std::size_t n_used = out.included.size();
  if (n_used < 2) {
    throw EstimationError("only " + std::to_string(n_used) +
                          " individual fits converged; at least two are required");
  }
  out.sigma_sq_M = q_total / static_cast<double>(m_used - static_cast<std::size_t>(p) * n_used);
  return out;
}

StsFit stage_two(std::span<const ParamVector> theta_hat) {
  if (theta_hat.size() < 2) {
    throw EstimationError("stage two needs at least two individual estimates");
  }
  const Eigen::Index p = theta_hat[0].size();
  const double n = static_cast<double>(theta_hat.size());
  StsFit fit;
  fit.theta_hat_i.assign(theta_hat.begin(), theta_hat.end());

  ParamVector sum = ParamVector::Zero(p);
  for (const auto& t : theta_hat) sum += t;
  fit.theta_sts = sum / n;

  fit.S2 = ParamMatrix::Zero(p, p);
  for (const auto& t : theta_hat) {
    const ParamVector d = t - fit.theta_sts;
    fit.S2 += d * d.transpose();
  }
  fit.var_theta_sts = fit.S2 / n;
  if (p == 1) fit.lambda_hat_sq_uncorrected = fit.S2(0, 0) / (n - 1.0);
  return fit;
}

ParamMatrix sigma_matrix(const Model& model, const ParamVector& theta, std::span<const double> x) {
  const int p = model.parameter_count();
  if (theta.size() != p) throw std::invalid_argument("parameter dimension mismatch");
  if (x.empty()) throw std::invalid_argument("sigma_matrix needs at least one design point");
  std::vector<double> values(x.size());
  std::vector<double> jac(x.size() * static_cast<std::size_t>(p));
  model.evaluate(theta, x, values, jac);

  ParamMatrix info = ParamMatrix::Zero(p, p);
  for (std::size_t j = 0; j < x.size(); ++j) {
    Eigen::Map<const ParamVector> g(&jac[j * static_cast<std::size_t>(p)], p);
    info += g * g.transpose();
  }
  info /= static_cast<double>(x.size());
  if (!info.allFinite()) throw NumericDomainError("non-finite model gradient in sigma_matrix");

  Eigen::SelfAdjointEigenSolver<ParamMatrix> eig(info, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().maxCoeff();
  if (!(largest > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * largest) {
    throw SingularDesignError("gradient design matrix is rank deficient");
  }
  ParamMatrix inverse = info.ldlt().solve(ParamMatrix::Identity(p, p));
  return 0.5 * (inverse + inverse.transpose());
}

DEstimate estimate_D(const ParamMatrix& S2, const ParamMatrix& Sigma_N, double sigma_sq_M) {
  const Eigen::Index p = S2.rows();
  if (S2.cols() != p || Sigma_N.rows() != p || Sigma_N.cols() != p) {
    throw std::invalid_argument("estimate_D: matrix dimensions disagree");
  }
  Eigen::LLT<ParamMatrix> chol(Sigma_N);
  if (chol.info() != Eigen::Success) {
    throw SingularDesignError("Sigma_N is not positive definite");
  }
  const ParamMatrix L = chol.matrixL();
  // C = L^{-1} S2 L^{-T}; its eigenvalues are the roots of |S2 - nu Sigma_N| = 0.
  ParamMatrix C = L.triangularView<Eigen::Lower>().solve(S2);
  C = L.triangularView<Eigen::Lower>().solve(ParamMatrix(C.transpose()));
  C = 0.5 * (C + C.transpose());
  Eigen::SelfAdjointEigenSolver<ParamMatrix> eig(C, Eigen::EigenvaluesOnly);

  DEstimate out;
  out.nu_hat = std::max(0.0, eig.eigenvalues().minCoeff());
  out.D_hat = S2 - std::min(out.nu_hat, sigma_sq_M) * Sigma_N;
  out.D_hat = 0.5 * (out.D_hat + out.D_hat.transpose());
  return out;
}

StsFit fit_sts(const Model& model, const HierDataset& data, std::span<const ParamVector> inits,
               const FitOptions& opts) {
  StageOneResult first = stage_one(model, data, inits, opts);

  std::vector<ParamVector> estimates;
  estimates.reserve(first.included.size());
  for (std::size_t i : first.included) estimates.push_back(first.fits[i].theta);

  StsFit fit = stage_two(estimates);
  fit.sigma_sq_M = first.sigma_sq_M;
  fit.dropped = first.dropped;
  fit.included = first.included;
  for (std::size_t i : first.included) fit.ids.push_back(data.individuals[i].id);

  const int p = model.parameter_count();
  fit.fits = std::move(first.fits);
  try {
    ParamMatrix sum = ParamMatrix::Zero(p, p);
    for (std::size_t i : fit.included) {
      sum += sigma_matrix(model, fit.fits[i].theta, data.individuals[i].x);
    }
    fit.Sigma_N_hat = sum / static_cast<double>(fit.included.size());
    const DEstimate d = estimate_D(fit.S2, fit.Sigma_N_hat, fit.sigma_sq_M);
    fit.nu_hat = d.nu_hat;
    fit.D_hat = d.D_hat;
    fit.dispersion_available = true;
  } catch (const SingularDesignError&) {
    // A fit parked where the model is locally flat (typically on a bound).
    const double nan = std::numeric_limits<double>::quiet_NaN();
    fit.Sigma_N_hat = ParamMatrix::Constant(p, p, nan);
    fit.nu_hat = nan;
    fit.D_hat = ParamMatrix::Constant(p, p, nan);
    fit.dispersion_available = false;
  }
  return fit;
}

}  // namespace rsts
