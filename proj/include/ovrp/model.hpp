#pragma once

// Data, strata and parameter types for the correlated outcome/response
// ordered-probit model, plus the bijection between structural parameters and
// the unconstrained vector the optimizer works on.
//
// Latent model for unit n:
//   y* = alpha'x + eps,   y = j  iff gamma_{j-1} < y* <= gamma_j,  j = 1..Y
//   r* = beta'z  + eta,   r = m  iff theta_{m-1} < r* <= theta_m,  m = 1..R+1
// with gamma_0 = theta_0 = -inf, gamma_Y = theta_{R+1} = +inf,
// corr(eps, eta) = rho and unit variances. r = R+1 is unit nonresponse.
//
// Location normalization pins the TOP thresholds: gamma_{Y-1} = theta_R = 0.
// Intercept columns in x and z are therefore identified and carry the
// location of each equation.

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace ovrp {

struct ModelSpec {
  int Y = 2;   // outcome categories
  int R = 1;   // observed proxy categories; R+1 is unit nonresponse
  int dx = 1;  // outcome covariate dimension
  int dz = 1;  // response covariate dimension

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct RespondentRecord {
  int y = 1;
  int r = 1;
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  double weight = 1.0;
};

struct Stratum {
  std::string id;
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  double share = 0.0;
};

struct ParamSet {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;  // Y-1 outcome thresholds, last is 0
  Eigen::VectorXd theta;  // R response thresholds, last is 0
  double rho = 0.0;

  ModelSpec spec() const;

  /// Throws invalid_argument naming the first violated invariant.
  void validate() const;
};

/// Unconstrained optimizer coordinates, laid out as
/// [alpha (dx) | beta (dz) | log gamma gaps (Y-2) | log theta gaps (R-1) | atanh rho].
using FreeVector = Eigen::VectorXd;

int free_dimension(const ModelSpec& spec);

/// Index of the rho coordinate in a FreeVector.
inline int rho_index(const ModelSpec& spec) { return free_dimension(spec) - 1; }

/// Gap exponents are clamped to this magnitude inside unpack.
inline constexpr double kMaxLogGap = 30.0;

/// The atanh(rho) coordinate is clamped to this magnitude inside unpack so
/// that tanh never rounds to exactly +/-1.
inline constexpr double kMaxAtanhRho = 18.0;

FreeVector pack(const ParamSet& params);
ParamSet unpack(const FreeVector& v, const ModelSpec& spec);

/// Structural parameters without the two normalized zeros, in free-vector
/// order: [alpha | beta | gamma_1..gamma_{Y-2} | theta_1..theta_{R-1} | rho].
Eigen::VectorXd structural_vector(const ParamSet& params);
std::vector<std::string> structural_names(const ModelSpec& spec);

struct ValidationIssue {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
  std::vector<long> outcome_counts;   // per y = 1..Y
  std::vector<long> response_counts;  // per r = 1..R
  double share_sum = 0.0;
  long zero_weight_records = 0;

  bool ok() const { return errors.empty(); }
};

/// Scans everything and collects every problem; never stops at the first.
ValidationReport validate_dataset(std::span<const RespondentRecord> records,
                                  std::span<const Stratum> strata, const ModelSpec& spec);

}  // namespace ovrp
