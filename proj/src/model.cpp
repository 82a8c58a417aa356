#include "rsts/model.hpp"

#include "rsts/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace rsts {

bool ParamBounds::contains(const ParamVector& theta) const {
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    if (!(theta[k] >= lower[k] && theta[k] <= upper[k])) return false;
  }
  return true;
}

ParamVector ParamBounds::clamp(const ParamVector& theta) const {
  return theta.cwiseMax(lower).cwiseMin(upper);
}

namespace {

void check_dimension(const Model& model, const ParamVector& theta) {
  if (theta.size() != model.parameter_count()) {
    throw std::invalid_argument("model '" + std::string(model.name()) + "' expects " +
                                std::to_string(model.parameter_count()) +
                                " parameters, got " + std::to_string(theta.size()));
  }
  if (!theta.allFinite()) {
    throw std::invalid_argument("parameter vector has non-finite entries");
  }
}

ParamBounds uniform_bounds(int p, double lo, double hi) {
  return ParamBounds{ParamVector::Constant(p, lo), ParamVector::Constant(p, hi)};
}

// Shared kernel for both exponential models. `full` is the 4-vector;
// the gradient row is written for the four parameters.
inline double biexp_point(double a, double alpha, double b, double beta, double t, double* grad) {
  const double e1 = std::exp(-alpha * t);
  const double e2 = std::exp(-beta * t);
  const double first = a * e1;
  const double second = b * e2;
  if (grad != nullptr) {
    grad[0] = first;
    grad[1] = -first * alpha * t;
    grad[2] = second;
    grad[3] = -second * beta * t;
  }
  return first + second;
}

}  // namespace

double eval_model(const Model& model, const ParamVector& theta, double x) {
  check_dimension(model, theta);
  double value = 0.0;
  model.evaluate(theta, std::span<const double>(&x, 1), std::span<double>(&value, 1), {});
  if (!std::isfinite(value)) {
    throw NumericDomainError("model '" + std::string(model.name()) +
                             "' produced a non-finite value");
  }
  return value;
}

ParamVector eval_jacobian(const Model& model, const ParamVector& theta, double x) {
  check_dimension(model, theta);
  const int p = model.parameter_count();
  double value = 0.0;
  ParamVector grad(p);
  model.evaluate(theta, std::span<const double>(&x, 1), std::span<double>(&value, 1),
                 std::span<double>(grad.data(), p));
  if (!grad.allFinite()) {
    throw NumericDomainError("model '" + std::string(model.name()) +
                             "' produced a non-finite gradient");
  }
  return grad;
}

// ---- Biexponential4 -------------------------------------------------------

std::optional<ParamBounds> Biexponential4::default_bounds() const {
  return uniform_bounds(4, -10.0, 10.0);
}

ParamVector Biexponential4::reference_theta() {
  ParamVector theta(4);
  theta << 1.0, 0.8, -0.5, -1.0;
  return theta;
}

void Biexponential4::evaluate(const ParamVector& theta, std::span<const double> x,
                              std::span<double> values, std::span<double> jacobian) const {
  const double a = std::exp(theta[0]);
  const double alpha = std::exp(theta[1]);
  const double b = std::exp(theta[2]);
  const double beta = std::exp(theta[3]);
  const bool want_jac = !jacobian.empty();
  for (std::size_t j = 0; j < x.size(); ++j) {
    values[j] = biexp_point(a, alpha, b, beta, x[j], want_jac ? &jacobian[4 * j] : nullptr);
  }
}

// ---- SingleExp1 -----------------------------------------------------------

std::optional<ParamBounds> SingleExp1::default_bounds() const {
  return uniform_bounds(1, -10.0, 10.0);
}

ParamVector SingleExp1::embed(double theta2) {
  ParamVector full = Biexponential4::reference_theta();
  full[1] = theta2;
  return full;
}

void SingleExp1::evaluate(const ParamVector& theta, std::span<const double> x,
                          std::span<double> values, std::span<double> jacobian) const {
  const ParamVector full = embed(theta[0]);
  const double a = std::exp(full[0]);
  const double alpha = std::exp(full[1]);
  const double b = std::exp(full[2]);
  const double beta = std::exp(full[3]);
  const bool want_jac = !jacobian.empty();
  double grad[4];
  for (std::size_t j = 0; j < x.size(); ++j) {
    values[j] = biexp_point(a, alpha, b, beta, x[j], want_jac ? grad : nullptr);
    if (want_jac) jacobian[j] = grad[1];
  }
}

// ---- linear oracles -------------------------------------------------------

void ProportionalModel::evaluate(const ParamVector& theta, std::span<const double> x,
                                 std::span<double> values, std::span<double> jacobian) const {
  for (std::size_t j = 0; j < x.size(); ++j) {
    values[j] = theta[0] * x[j];
    if (!jacobian.empty()) jacobian[j] = x[j];
  }
}

void StraightLineModel::evaluate(const ParamVector& theta, std::span<const double> x,
                                 std::span<double> values, std::span<double> jacobian) const {
  for (std::size_t j = 0; j < x.size(); ++j) {
    values[j] = theta[0] + theta[1] * x[j];
    if (!jacobian.empty()) {
      jacobian[2 * j] = 1.0;
      jacobian[2 * j + 1] = x[j];
    }
  }
}

// ---- registry -------------------------------------------------------------

ModelPtr make_model(std::string_view name) {
  if (name == "biexp4") return std::make_shared<Biexponential4>();
  if (name == "singleexp1") return std::make_shared<SingleExp1>();
  if (name == "linear1") return std::make_shared<ProportionalModel>();
  if (name == "linear2") return std::make_shared<StraightLineModel>();
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

std::vector<std::string> model_names() { return {"biexp4", "singleexp1", "linear1", "linear2"}; }

}  // namespace rsts
