#pragma once

// Seeded data-generating process for the latent outcome/response model.
//
// Stream layout (xoshiro256**, see rng.hpp):
//   stream 0        one uniform per unit assigns strata by inverting the
//                   cumulative shares (units in index order);
//   stream k + 1    stratum k: two uniforms per unit, turned into
//                   eps = Phi^-1(u1), eta = rho eps + sqrt(1 - rho^2) Phi^-1(u2).
// Output is stratum-major, draw-index-minor, independent of thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "ovrp/model.hpp"

namespace ovrp {

struct SimConfig {
  ModelSpec spec;
  ParamSet truth;
  std::vector<Stratum> strata;
  long n_population = 1;
  std::uint64_t seed = 1;
};

struct TruthRow {
  std::size_t stratum = 0;  // index into SimConfig::strata
  int y = 1;
  int r = 1;  // R+1 marks unit nonresponse
};

struct SimOutput {
  /// Respondents only. Each carries a post-stratification weight
  /// share_k * N_resp / n_resp_k for its stratum.
  std::vector<RespondentRecord> respondents;
  std::vector<std::size_t> respondent_stratum;
  long n_miss = 0;
  /// Every simulated unit, respondents and nonrespondents, for oracle use.
  std::vector<TruthRow> full_truth;
};

SimOutput draw_population(const SimConfig& config);

/// Relative frequencies over the full truth: respondent cells (y, r) for
/// r = 1..R, and the nonresponse frequency with y marginalized.
struct CellFrequencies {
  Eigen::MatrixXd respondents;  // Y x R
  double nonresponse = 0.0;
};

CellFrequencies empirical_cell_freqs(const SimOutput& out, const ModelSpec& spec);

}  // namespace ovrp
