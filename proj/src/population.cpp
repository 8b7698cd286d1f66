#include "ovrp/population.hpp"

#include <cmath>

#include "ovrp/bvn.hpp"
#include "ovrp/error.hpp"
#include "ovrp/parallel.hpp"

namespace ovrp {

namespace {

constexpr double kDegenerate = 1e-12;

double lower_threshold(const Eigen::VectorXd& gamma, int j) {
  return j <= 1 ? -kInf : gamma[j - 2];
}

double upper_threshold(const Eigen::VectorXd& gamma, int j) {
  return j > gamma.size() ? kInf : gamma[j - 1];
}

void require_conditional_target(Target target) {
  if (target != Target::respondents && target != Target::nonrespondents) {
    throw Error(ErrorCode::invalid_argument,
                "conditional distributions are defined for respondents or nonrespondents");
  }
}

// P(target | z) for one stratum.
double target_prob(const ParamSet& p, const Stratum& s, Target target) {
  const double cut = p.theta[p.theta.size() - 1] - p.beta.dot(s.z);
  return target == Target::nonrespondents ? std_normal_cdf(-cut) : std_normal_cdf(cut);
}

}  // namespace

const char* target_name(Target t) {
  switch (t) {
    case Target::population: return "population";
    case Target::respondents: return "respondents";
    case Target::nonrespondents: return "nonrespondents";
    case Target::raw: return "raw";
    case Target::weighted: return "weighted";
  }
  return "unknown";
}

Eigen::VectorXd outcome_dist_population(const ParamSet& p, std::span<const Stratum> strata) {
  const int Y = static_cast<int>(p.gamma.size()) + 1;
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(Y);
  for (const Stratum& s : strata) {
    const double ax = p.alpha.dot(s.x);
    for (int j = 1; j <= Y; ++j) {
      const double lo = lower_threshold(p.gamma, j) - ax;
      const double hi = upper_threshold(p.gamma, j) - ax;
      // Upper-tail form when the interval sits above zero.
      const double mass = lo > 0.0 ? std_normal_cdf(-lo) - std_normal_cdf(-hi)
                                   : std_normal_cdf(hi) - std_normal_cdf(lo);
      dist[j - 1] += s.share * mass;
    }
  }
  return dist;
}

Eigen::MatrixXd conditional_by_stratum(const ParamSet& p, std::span<const Stratum> strata,
                                       Target target) {
  if (target == Target::population) {
    Eigen::MatrixXd out(strata.size(), static_cast<Eigen::Index>(p.gamma.size()) + 1);
    for (std::size_t k = 0; k < strata.size(); ++k) {
      const Stratum single[] = {Stratum{strata[k].id, strata[k].x, strata[k].z, 1.0}};
      out.row(k) = outcome_dist_population(p, single).transpose();
    }
    return out;
  }
  require_conditional_target(target);
  const int Y = static_cast<int>(p.gamma.size()) + 1;
  const BvnKernel kernel(p.rho);
  Eigen::MatrixXd out(strata.size(), Y);
  for (std::size_t k = 0; k < strata.size(); ++k) {
    const Stratum& s = strata[k];
    const double denom = target_prob(p, s, target);
    if (denom < kDegenerate) {
      throw Error(ErrorCode::degenerate_stratum,
                  "stratum " + (s.id.empty() ? std::to_string(k + 1) : s.id) + " has " +
                      target_name(target) + " probability below 1e-12");
    }
    const double ax = p.alpha.dot(s.x);
    const double cut = p.theta[p.theta.size() - 1] - p.beta.dot(s.z);
    RectBounds b;
    if (target == Target::nonrespondents) {
      b.lo2 = cut;
      b.hi2 = kInf;
    } else {
      b.lo2 = -kInf;
      b.hi2 = cut;
    }
    for (int j = 1; j <= Y; ++j) {
      b.lo1 = lower_threshold(p.gamma, j) - ax;
      b.hi1 = upper_threshold(p.gamma, j) - ax;
      out(k, j - 1) = rect_prob(b, kernel) / denom;
    }
  }
  return out;
}

Eigen::VectorXd outcome_dist_conditional(const ParamSet& p, std::span<const Stratum> strata,
                                         Target target, Aggregation aggregation) {
  const Eigen::MatrixXd per = conditional_by_stratum(p, strata, target);
  Eigen::VectorXd weights(strata.size());
  for (std::size_t k = 0; k < strata.size(); ++k) {
    weights[k] = strata[k].share;
    if (aggregation == Aggregation::reweighted) weights[k] *= target_prob(p, strata[k], target);
  }
  if (aggregation == Aggregation::reweighted) {
    const double total = weights.sum();
    if (!(total > 0.0)) {
      throw Error(ErrorCode::degenerate_stratum, std::string("no ") + target_name(target) +
                                                     " mass in any stratum");
    }
    weights /= total;
  }
  return per.transpose() * weights;
}

Eigen::MatrixXd mixture_check(const ParamSet& p, std::span<const Stratum> strata) {
  const int Y = static_cast<int>(p.gamma.size()) + 1;
  const BvnKernel kernel(p.rho);
  Eigen::MatrixXd residual(strata.size(), Y);
  for (std::size_t k = 0; k < strata.size(); ++k) {
    const Stratum& s = strata[k];
    const Stratum single[] = {Stratum{s.id, s.x, s.z, 1.0}};
    const Eigen::VectorXd marginal = outcome_dist_population(p, single);
    const double p_nonresp = target_prob(p, s, Target::nonrespondents);
    const double p_resp = target_prob(p, s, Target::respondents);
    const double ax = p.alpha.dot(s.x);
    const double cut = p.theta[p.theta.size() - 1] - p.beta.dot(s.z);
    for (int j = 1; j <= Y; ++j) {
      // P(resp) P(j | resp) is the joint rectangle; written through the
      // conditional to exercise the same path as the reported quantities.
      RectBounds lower{lower_threshold(p.gamma, j) - ax, upper_threshold(p.gamma, j) - ax,
                       -kInf, cut};
      RectBounds upper{lower.lo1, lower.hi1, cut, kInf};
      const double cond_resp = p_resp > 0.0 ? rect_prob(lower, kernel) / p_resp : 0.0;
      const double cond_nonresp = p_nonresp > 0.0 ? rect_prob(upper, kernel) / p_nonresp : 0.0;
      residual(k, j - 1) = marginal[j - 1] - (p_resp * cond_resp + p_nonresp * cond_nonresp);
    }
  }
  return residual;
}

Eigen::VectorXd baseline_proportions(std::span<const RespondentRecord> records, int Y,
                                     Target mode) {
  if (mode != Target::raw && mode != Target::weighted) {
    throw Error(ErrorCode::invalid_argument, "baseline mode must be raw or weighted");
  }
  if (records.empty()) throw Error(ErrorCode::empty_input, "no records for baseline proportions");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(Y);
  for (const auto& rec : records) {
    if (rec.y < 1 || rec.y > Y) {
      throw Error(ErrorCode::invalid_argument, "outcome category outside 1..Y");
    }
    counts[rec.y - 1] += mode == Target::weighted ? rec.weight : 1.0;
  }
  const double total = counts.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::empty_input, "total weight is zero");
  return counts / total;
}

std::vector<DistributionEstimate> model_distributions(const FitResult& fit,
                                                      std::span<const Stratum> strata,
                                                      double n_miss, Aggregation aggregation,
                                                      std::vector<std::string>* warnings) {
  const ModelSpec spec = fit.params.spec();
  const int Y = spec.Y;

  std::vector<Target> targets = {Target::population};
  for (Target t : {Target::respondents, Target::nonrespondents}) {
    if (t == Target::nonrespondents && !(n_miss > 0.0)) {
      if (warnings) warnings->push_back("nonrespondents distribution skipped: no nonresponse mass");
      continue;
    }
    try {
      outcome_dist_conditional(fit.params, strata, t, aggregation);
      targets.push_back(t);
    } catch (const Error& e) {
      if (warnings) warnings->push_back(std::string(target_name(t)) + " distribution skipped: " + e.what());
    }
  }

  const VectorFunction g = [&](const Eigen::VectorXd& v) {
    const ParamSet p = unpack(v, spec);
    Eigen::VectorXd out(Y * targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
      out.segment(i * Y, Y) = targets[i] == Target::population
                                  ? outcome_dist_population(p, strata)
                                  : outcome_dist_conditional(p, strata, targets[i], aggregation);
    }
    return out;
  };

  std::vector<DistributionEstimate> out;
  DeltaMethodResult dm;
  bool have_se = true;
  try {
    dm = delta_method(g, fit);
  } catch (const Error& e) {
    have_se = false;
    dm.values = g(fit.free);
    if (warnings) warnings->push_back(std::string("distribution standard errors unavailable: ") + e.what());
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    DistributionEstimate est;
    est.target = targets[i];
    est.proportions = dm.values.segment(i * Y, Y);
    if (have_se) est.se = dm.se.segment(i * Y, Y);
    est.n_miss_assumed = n_miss;
    out.push_back(std::move(est));
  }
  return out;
}

std::vector<SensitivityResult> sensitivity_grid(const CellTable& cells,
                                                std::span<const Stratum> strata,
                                                std::span<const double> rates,
                                                const FitConfig& config,
                                                Aggregation aggregation) {
  for (double q : rates) {
    if (!(q >= 0.0 && q < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "nonresponse rates must lie in [0, 1)");
    }
  }
  std::vector<SensitivityResult> results(rates.size());
  parallel_for(rates.size(), [&](std::size_t i) {
    SensitivityResult& res = results[i];
    res.rate = rates[i];
    res.n_miss = n_miss_from_rate(cells.total_count(), rates[i]);
    try {
      res.fit = fit(cells, strata, NonresponseDesign{res.n_miss}, config);
      res.distributions =
          model_distributions(res.fit, strata, res.n_miss, aggregation, &res.warnings);
    } catch (const std::exception& e) {
      res.warnings.push_back(std::string("rate failed: ") + e.what());
    }
  });
  return results;
}

}  // namespace ovrp
