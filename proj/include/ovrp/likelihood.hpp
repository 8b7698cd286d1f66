#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovrp/model.hpp"

namespace ovrp {

/// Number of unit nonrespondents entering the likelihood. Real-valued so a
/// nonresponse rate can drive it without rounding.
struct NonresponseDesign {
  double n_miss = 0.0;
};

/// n_miss implied by a nonresponse rate q in [0, 1): n_resp * q / (1 - q).
double n_miss_from_rate(double n_respondents, double rate);

struct Profile {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
};

struct Cell {
  int y = 1;
  int r = 1;
  std::size_t profile = 0;  // index into CellTable::profiles()
  double count = 0.0;       // multiplicity (sum of weights when weighted)
};

/// Respondent records collapsed to unique (y, r, x, z) tuples.
class CellTable {
 public:
  /// Unweighted by default: every record contributes multiplicity 1.
  static CellTable build(std::span<const RespondentRecord> records, const ModelSpec& spec,
                         bool weighted = false);

  const ModelSpec& spec() const { return spec_; }
  /// Unique covariate profiles in lexicographic (x, z) order.
  const std::vector<Profile>& profiles() const { return profiles_; }
  /// Cells sorted by (y, r, x, z).
  const std::vector<Cell>& cells() const { return cells_; }
  double total_count() const { return total_count_; }
  std::size_t record_count() const { return record_count_; }

 private:
  ModelSpec spec_;
  std::vector<Profile> profiles_;
  std::vector<Cell> cells_;
  double total_count_ = 0.0;
  std::size_t record_count_ = 0;
};

/// P(y, r | x, z) for an observed proxy category r in 1..R.
double cell_prob(int y, int r, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                 const ParamSet& p);

/// P(r = R+1 | z) = Phi(beta'z - theta_R).
double nonresponse_prob(const Eigen::VectorXd& z, const ParamSet& p);

struct LoglikEvaluation {
  double value = 0.0;
  /// Set when an occupied cell (or the nonresponse mass) falls below 1e-300;
  /// value is then -inf.
  std::optional<std::string> underflow;
};

/// Respondent log cell probabilities times multiplicities, plus
/// n_miss * log(sum_k share_k * P(r = R+1 | z_k)). The nonresponse term is
/// skipped entirely when n_miss == 0.
LoglikEvaluation evaluate_log_likelihood(const CellTable& cells, std::span<const Stratum> strata,
                                         const NonresponseDesign& nr, const ParamSet& p);

double log_likelihood(const CellTable& cells, std::span<const Stratum> strata,
                      const NonresponseDesign& nr, const ParamSet& p);

/// The log-likelihood as a function of the free vector. Holds its own copy
/// of the data, so it can outlive the inputs and be shared across threads.
class LoglikObjective {
 public:
  LoglikObjective(CellTable cells, std::vector<Stratum> strata, NonresponseDesign nr);

  double operator()(const FreeVector& v) const;
  LoglikEvaluation evaluate(const FreeVector& v) const;

  const ModelSpec& spec() const { return cells_.spec(); }
  const CellTable& cells() const { return cells_; }
  const std::vector<Stratum>& strata() const { return strata_; }
  const NonresponseDesign& design() const { return nr_; }

 private:
  CellTable cells_;
  std::vector<Stratum> strata_;
  NonresponseDesign nr_;
};

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference step for coordinate value v: max(1e-6, 1e-7 |v|).
inline double gradient_step(double v) { return std::max(1e-6, 1e-7 * std::abs(v)); }

/// Central-difference gradient; coordinates outside `active` (when given)
/// are left at zero. Coordinates are evaluated in parallel, each with a
/// serial objective call, so the result does not depend on the thread count.
/// Throws numeric_failure if the function is not finite at a probe point.
Eigen::VectorXd central_gradient(const ScalarFunction& f, const Eigen::VectorXd& v,
                                 std::span<const int> active = {});

Eigen::VectorXd loglik_gradient(const LoglikObjective& objective, const FreeVector& v,
                                std::span<const int> active = {});

}  // namespace ovrp
