#pragma once

// Univariate ordered probit fitted by Newton-Raphson with analytic
// derivatives. Used for starting values and as the independent reference
// that the joint fit must reproduce when rho is fixed at zero.
//
// Categories 1..C with thresholds t_1 < ... < t_{C-1} = 0; P(c | w) =
// Phi(t_c - b'w) - Phi(t_{c-1} - b'w). An optional unit-nonresponse term
// n_miss * log(sum_k p_k Phi(b'w_k)) adds the mass of category C among
// units whose covariates are known only through strata shares.

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "ovrp/likelihood.hpp"
#include "ovrp/model.hpp"

namespace ovrp {

struct OrderedProbitObservation {
  int category = 1;
  Eigen::VectorXd w;
  double count = 1.0;
};

struct OrderedProbitProblem {
  int categories = 2;
  std::vector<OrderedProbitObservation> observations;
  double n_miss = 0.0;
  std::vector<double> mass_shares;
  std::vector<Eigen::VectorXd> mass_covariates;
};

struct OrderedProbitFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd thresholds;  // C-1 entries, last is 0
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
};

/// Log-likelihood at (coef, thresholds); -inf if any occupied cell has no mass.
double ordered_probit_loglik(const OrderedProbitProblem& problem, const Eigen::VectorXd& coef,
                             const Eigen::VectorXd& thresholds);

/// Never throws on nonconvergence or separation; inspect `converged`.
OrderedProbitFit fit_ordered_probit(const OrderedProbitProblem& problem);

/// y on x over all respondent cells (C = Y).
OrderedProbitProblem outcome_problem(const CellTable& cells);

/// r on z with the nonresponse category R+1 entering through strata shares
/// and n_miss (C = R + 1).
OrderedProbitProblem response_problem(const CellTable& cells, std::span<const Stratum> strata,
                                      const NonresponseDesign& nr);

}  // namespace ovrp
