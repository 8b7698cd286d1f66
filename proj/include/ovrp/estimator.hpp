#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovrp/likelihood.hpp"
#include "ovrp/model.hpp"

namespace ovrp {

struct FitConfig {
  int max_iterations = 500;
  /// Per-respondent tolerance: the fit has converged once the gradient
  /// 2-norm is at most gradient_tolerance * max(1, respondent count).
  double gradient_tolerance = 1e-5;
  double step_tolerance = 1e-9;
  int n_restarts = 3;
  /// Profile fit: freeze rho at this value.
  std::optional<double> fix_rho_at;
  std::uint64_t seed = 1;
  /// Standard deviation of the Gaussian jitter added to restarts 2..n.
  double jitter = 0.25;
  /// Overrides initial_values() for the first restart.
  std::optional<FreeVector> start;

  void validate() const;
};

struct FitResult {
  ParamSet params;
  FreeVector free;
  Eigen::MatrixXd cov_free;
  Eigen::MatrixXd cov_structural;
  Eigen::VectorXd se_structural;
  double loglik = 0.0;
  bool converged = false;
  /// True when at least one restart converged (the CLI's exit status).
  bool any_converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  int restarts = 0;
  std::vector<double> loglik_trace;
  std::vector<std::string> warnings;
};

struct InitialValues {
  FreeVector free;
  std::vector<std::string> warnings;
};

/// Marginal ordered-probit fits for each equation, rho = 0. Falls back to
/// the zero vector with a warning when either marginal fit fails.
InitialValues initial_values(const CellTable& cells, std::span<const Stratum> strata,
                             const NonresponseDesign& nr);

/// Quasi-Newton (BFGS) ascent with backtracking on the free vector. Never
/// throws for nonconvergence; the best point of the best restart is returned
/// with converged = false.
FitResult fit(const CellTable& cells, std::span<const Stratum> strata,
              const NonresponseDesign& nr, const FitConfig& config);

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> trace;
  std::string message;
};

/// Maximizes f over the coordinates in `active` (all when empty) starting
/// from x0. Gradients are central differences.
OptimizerResult maximize_bfgs(const ScalarFunction& f, const Eigen::VectorXd& x0,
                              std::span<const int> active, int max_iterations,
                              double gradient_tolerance, double step_tolerance);

/// Hessian step for coordinate value v: max(1e-4, 1e-5 |v|).
inline double hessian_step(double v) { return std::max(1e-4, 1e-5 * std::abs(v)); }

/// Finite-difference Hessian restricted to `active` (zero elsewhere).
Eigen::MatrixXd numeric_hessian(const ScalarFunction& f, const Eigen::VectorXd& v,
                                std::span<const int> active = {});

struct CovarianceResult {
  Eigen::MatrixXd cov_free;
  Eigen::MatrixXd cov_structural;
  std::vector<std::string> warnings;
};

/// Inverse of the negative Hessian of f at v (pseudo-inverse with a warning
/// when it is not positive definite), mapped to structural parameters
/// through the numerical Jacobian of unpack.
CovarianceResult covariance_of(const ScalarFunction& f, const FreeVector& v,
                               const ModelSpec& spec, std::span<const int> active = {});

CovarianceResult covariance(const FreeVector& fit_point, const CellTable& cells,
                            std::span<const Stratum> strata, const NonresponseDesign& nr,
                            std::span<const int> active = {});

/// Central-difference Jacobian of a vector function (rows = outputs).
using VectorFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
Eigen::MatrixXd numeric_jacobian(const VectorFunction& g, const Eigen::VectorXd& v);

struct DeltaMethodResult {
  Eigen::VectorXd values;
  Eigen::VectorXd se;
  Eigen::MatrixXd cov;
};

DeltaMethodResult delta_method(const VectorFunction& g, const FitResult& fit);
DeltaMethodResult delta_method(const VectorFunction& g, const FreeVector& at,
                               const Eigen::MatrixXd& cov_free);

}  // namespace ovrp
