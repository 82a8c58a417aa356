#pragma once

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rsts {

// Largest parameter dimension a model may have. Parameter vectors and the
// small p x p matrices built from them then live on the stack.
inline constexpr int kMaxParams = 8;

using ParamVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxParams, 1>;
using ParamMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxParams, kMaxParams>;

struct ParamBounds {
  ParamVector lower;
  ParamVector upper;

  bool contains(const ParamVector& theta) const;
  ParamVector clamp(const ParamVector& theta) const;
};

// Mean function f(x; theta) of the nonlinear regression, with its analytic
// gradient in theta. Implementations are immutable and may be shared
// across threads.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string_view name() const = 0;
  virtual int parameter_count() const = 0;
  virtual std::optional<ParamBounds> default_bounds() const { return std::nullopt; }

  // Writes f(x_j; theta) into values[j]. When `jacobian` is non-empty it
  // receives the n x p partials row-major: jacobian[j * p + k] = df(x_j)/dtheta_k.
  // No validation and no exceptions; non-finite results propagate as NaN/inf.
  virtual void evaluate(const ParamVector& theta, std::span<const double> x,
                        std::span<double> values, std::span<double> jacobian) const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

// Single-point evaluation with argument checks. Throws std::invalid_argument
// on a dimension mismatch and NumericDomainError on a non-finite result.
double eval_model(const Model& model, const ParamVector& theta, double x);
ParamVector eval_jacobian(const Model& model, const ParamVector& theta, double x);

// Two-compartment IV bolus curve on the log scale:
//   f(t; theta) = e^{theta1} exp(-e^{theta2} t) + e^{theta3} exp(-e^{theta4} t).
class Biexponential4 final : public Model {
 public:
  std::string_view name() const override { return "biexp4"; }
  int parameter_count() const override { return 4; }
  std::optional<ParamBounds> default_bounds() const override;
  void evaluate(const ParamVector& theta, std::span<const double> x, std::span<double> values,
                std::span<double> jacobian) const override;

  // Simulation truth used throughout the experiments.
  static ParamVector reference_theta();
};

// Biexponential4 with theta1 = 1, theta3 = -0.5, theta4 = -1 frozen and
// only the fast elimination rate theta2 free. Delegates to the same kernel,
// so it is bitwise equal to Biexponential4 at (1, theta, -0.5, -1).
class SingleExp1 final : public Model {
 public:
  std::string_view name() const override { return "singleexp1"; }
  int parameter_count() const override { return 1; }
  std::optional<ParamBounds> default_bounds() const override;
  void evaluate(const ParamVector& theta, std::span<const double> x, std::span<double> values,
                std::span<double> jacobian) const override;

  static ParamVector embed(double theta2);
};

// f(t; theta) = theta * t. Closed-form weighted LS makes it an oracle model.
class ProportionalModel final : public Model {
 public:
  std::string_view name() const override { return "linear1"; }
  int parameter_count() const override { return 1; }
  void evaluate(const ParamVector& theta, std::span<const double> x, std::span<double> values,
                std::span<double> jacobian) const override;
};

// f(t; theta) = theta1 + theta2 * t.
class StraightLineModel final : public Model {
 public:
  std::string_view name() const override { return "linear2"; }
  int parameter_count() const override { return 2; }
  void evaluate(const ParamVector& theta, std::span<const double> x, std::span<double> values,
                std::span<double> jacobian) const override;
};

// Looks up a model by its registered name; throws std::invalid_argument
// for unknown names.
ModelPtr make_model(std::string_view name);
std::vector<std::string> model_names();

}  // namespace rsts
