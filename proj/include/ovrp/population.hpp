#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "ovrp/estimator.hpp"
#include "ovrp/likelihood.hpp"
#include "ovrp/model.hpp"

namespace ovrp {

enum class Target { population, respondents, nonrespondents, raw, weighted };

const char* target_name(Target t);

/// How per-stratum conditional distributions are averaged across strata.
///  - printed: weights p_k (unconditional shares), the default output.
///  - reweighted: weights p_k P(target | z_k) / sum_m p_m P(target | z_m),
///    i.e. the strata composition of the target subpopulation itself.
enum class Aggregation { printed, reweighted };

struct DistributionEstimate {
  Target target = Target::population;
  Eigen::VectorXd proportions;
  Eigen::VectorXd se;  // empty when not computed
  double n_miss_assumed = 0.0;
};

/// P(y = j) = sum_k p_k [Phi(gamma_j - a'x_k) - Phi(gamma_{j-1} - a'x_k)].
Eigen::VectorXd outcome_dist_population(const ParamSet& p, std::span<const Stratum> strata);

/// Outcome distribution among respondents (eta <= theta_R - b'z) or
/// nonrespondents (eta > theta_R - b'z), per stratum from bivariate
/// rectangles divided by the response/nonresponse probability, then
/// averaged across strata. Raises degenerate_stratum when a denominator is
/// below 1e-12.
Eigen::VectorXd outcome_dist_conditional(const ParamSet& p, std::span<const Stratum> strata,
                                         Target target,
                                         Aggregation aggregation = Aggregation::printed);

/// Per-stratum distribution P(y = j | target, x_k, z_k) (rows = strata).
/// The population target gives the per-stratum marginal.
Eigen::MatrixXd conditional_by_stratum(const ParamSet& p, std::span<const Stratum> strata,
                                       Target target);

/// Per stratum (rows), P(y=j) - [P(resp) P(y=j|resp) + P(nonresp) P(y=j|nonresp)].
Eigen::MatrixXd mixture_check(const ParamSet& p, std::span<const Stratum> strata);

/// Raw or survey-weighted outcome frequencies over 1..Y.
Eigen::VectorXd baseline_proportions(std::span<const RespondentRecord> records, int Y,
                                     Target mode);

/// Population, respondent and nonrespondent distributions with delta-method
/// standard errors from one stacked Jacobian. Targets whose denominators
/// degenerate are skipped with a warning.
std::vector<DistributionEstimate> model_distributions(const FitResult& fit,
                                                      std::span<const Stratum> strata,
                                                      double n_miss, Aggregation aggregation,
                                                      std::vector<std::string>* warnings);

struct SensitivityResult {
  double rate = 0.0;
  double n_miss = 0.0;
  FitResult fit;
  std::vector<DistributionEstimate> distributions;
  std::vector<std::string> warnings;
};

/// Refits the model for each nonresponse rate q (n_miss = N_resp q/(1-q))
/// and derives all distributions. Rates run concurrently; output order
/// follows the input. A failing rate is recorded, never fatal.
std::vector<SensitivityResult> sensitivity_grid(const CellTable& cells,
                                                std::span<const Stratum> strata,
                                                std::span<const double> rates,
                                                const FitConfig& config,
                                                Aggregation aggregation = Aggregation::printed);

}  // namespace ovrp
