#include "ovrp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ovrp/error.hpp"
#include "ovrp/parallel.hpp"
#include "ovrp/rng.hpp"

namespace ovrp {

namespace {

// Category m such that t_{m-1} < v <= t_m with t_0 = -inf, t_{n+1} = +inf.
int discretize(double v, const Eigen::VectorXd& t) {
  int m = 1;
  while (m <= t.size() && v > t[m - 1]) ++m;
  return m;
}

}  // namespace

SimOutput draw_population(const SimConfig& config) {
  const ModelSpec& spec = config.spec;
  spec.validate();
  config.truth.validate();
  if (config.truth.spec() != spec) {
    throw Error(ErrorCode::invalid_argument, "truth parameters do not match the model spec");
  }
  if (config.n_population < 1) {
    throw Error(ErrorCode::invalid_argument, "n_population must be at least 1");
  }
  if (config.strata.empty()) throw Error(ErrorCode::invalid_argument, "no strata");

  const std::size_t K = config.strata.size();
  std::vector<double> cumulative(K);
  double acc = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const Stratum& s = config.strata[k];
    if (s.x.size() != spec.dx || s.z.size() != spec.dz) {
      throw Error(ErrorCode::length_mismatch, "stratum covariates do not match the model");
    }
    acc += s.share;
    cumulative[k] = acc;
  }

  std::vector<long> counts(K, 0);
  Xoshiro256 membership(config.seed, 0);
  for (long n = 0; n < config.n_population; ++n) {
    const double u = membership.uniform() * acc;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    ++counts[std::min<std::size_t>(it - cumulative.begin(), K - 1)];
  }

  const ParamSet& p = config.truth;
  const double rho = p.rho;
  const double tail = std::sqrt((1.0 - rho) * (1.0 + rho));
  std::vector<std::vector<TruthRow>> per_stratum(K);
  parallel_for(K, [&](std::size_t k) {
    Xoshiro256 rng(config.seed, k + 1);
    const double ax = p.alpha.dot(config.strata[k].x);
    const double bz = p.beta.dot(config.strata[k].z);
    auto& rows = per_stratum[k];
    rows.reserve(counts[k]);
    for (long i = 0; i < counts[k]; ++i) {
      const double e1 = rng.normal();
      const double e2 = rng.normal();
      const double eps = e1;
      const double eta = rho * e1 + tail * e2;
      rows.push_back(TruthRow{k, discretize(ax + eps, p.gamma), discretize(bz + eta, p.theta)});
    }
  });

  SimOutput out;
  out.full_truth.reserve(config.n_population);
  std::vector<long> respondents_in(K, 0);
  for (std::size_t k = 0; k < K; ++k) {
    for (const TruthRow& row : per_stratum[k]) {
      out.full_truth.push_back(row);
      if (row.r <= spec.R) ++respondents_in[k];
    }
  }
  const long n_resp = std::accumulate(respondents_in.begin(), respondents_in.end(), 0L);
  out.n_miss = config.n_population - n_resp;
  out.respondents.reserve(n_resp);
  out.respondent_stratum.reserve(n_resp);
  for (const TruthRow& row : out.full_truth) {
    if (row.r > spec.R) continue;
    const Stratum& s = config.strata[row.stratum];
    const double weight =
        s.share / acc * static_cast<double>(n_resp) / static_cast<double>(respondents_in[row.stratum]);
    out.respondents.push_back(RespondentRecord{row.y, row.r, s.x, s.z, weight});
    out.respondent_stratum.push_back(row.stratum);
  }
  return out;
}

CellFrequencies empirical_cell_freqs(const SimOutput& out, const ModelSpec& spec) {
  CellFrequencies f;
  f.respondents = Eigen::MatrixXd::Zero(spec.Y, spec.R);
  if (out.full_truth.empty()) return f;
  for (const TruthRow& row : out.full_truth) {
    if (row.r > spec.R) {
      f.nonresponse += 1.0;
    } else {
      f.respondents(row.y - 1, row.r - 1) += 1.0;
    }
  }
  const double n = static_cast<double>(out.full_truth.size());
  f.respondents /= n;
  f.nonresponse /= n;
  return f;
}

}  // namespace ovrp
