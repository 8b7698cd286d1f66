#include "ovrp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ovrp/error.hpp"

namespace ovrp {

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::invalid_argument, what);
}

void check_thresholds(const Eigen::VectorXd& t, const char* name) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    check(std::isfinite(t[i]), std::string(name) + " contains a non-finite value");
    if (i > 0) check(t[i] > t[i - 1], std::string(name) + " must be strictly increasing");
  }
  check(t.size() > 0 && t[t.size() - 1] == 0.0,
        std::string(name) + " must end with the normalized value 0");
}

// Free gap exponents -> thresholds ending at 0.
void thresholds_from_gaps(const Eigen::Ref<const Eigen::VectorXd>& log_gaps,
                          Eigen::VectorXd& out) {
  const Eigen::Index n = log_gaps.size();
  out.resize(n + 1);
  out[n] = 0.0;
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const double e = std::clamp(log_gaps[j], -kMaxLogGap, kMaxLogGap);
    out[j] = out[j + 1] - std::exp(e);
  }
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void ModelSpec::validate() const {
  check(Y >= 2, "Y must be at least 2");
  check(R >= 1, "R must be at least 1");
  check(dx >= 1, "dx must be at least 1");
  check(dz >= 1, "dz must be at least 1");
}

ModelSpec ParamSet::spec() const {
  return ModelSpec{static_cast<int>(gamma.size()) + 1, static_cast<int>(theta.size()),
                   static_cast<int>(alpha.size()), static_cast<int>(beta.size())};
}

void ParamSet::validate() const {
  check(alpha.size() >= 1 && beta.size() >= 1, "alpha and beta must be non-empty");
  check(alpha.allFinite() && beta.allFinite(), "alpha and beta must be finite");
  check_thresholds(gamma, "gamma");
  check_thresholds(theta, "theta");
  check(std::isfinite(rho) && std::fabs(rho) < 1.0, "rho must lie in (-1, 1)");
}

int free_dimension(const ModelSpec& spec) {
  return spec.dx + spec.dz + (spec.Y - 2) + (spec.R - 1) + 1;
}

FreeVector pack(const ParamSet& params) {
  params.validate();
  const ModelSpec spec = params.spec();
  FreeVector v(free_dimension(spec));
  int k = 0;
  v.segment(k, spec.dx) = params.alpha;
  k += spec.dx;
  v.segment(k, spec.dz) = params.beta;
  k += spec.dz;
  for (int j = 0; j < spec.Y - 2; ++j) v[k++] = std::log(params.gamma[j + 1] - params.gamma[j]);
  for (int j = 0; j < spec.R - 1; ++j) v[k++] = std::log(params.theta[j + 1] - params.theta[j]);
  v[k] = std::atanh(params.rho);
  return v;
}

ParamSet unpack(const FreeVector& v, const ModelSpec& spec) {
  spec.validate();
  if (v.size() != free_dimension(spec)) {
    throw Error(ErrorCode::length_mismatch,
                "free vector has length " + std::to_string(v.size()) + ", expected " +
                    std::to_string(free_dimension(spec)));
  }
  ParamSet p;
  int k = 0;
  p.alpha = v.segment(k, spec.dx);
  k += spec.dx;
  p.beta = v.segment(k, spec.dz);
  k += spec.dz;
  thresholds_from_gaps(v.segment(k, spec.Y - 2), p.gamma);
  k += spec.Y - 2;
  thresholds_from_gaps(v.segment(k, spec.R - 1), p.theta);
  k += spec.R - 1;
  p.rho = std::tanh(std::clamp(v[k], -kMaxAtanhRho, kMaxAtanhRho));
  return p;
}

Eigen::VectorXd structural_vector(const ParamSet& params) {
  const ModelSpec spec = params.spec();
  Eigen::VectorXd s(free_dimension(spec));
  int k = 0;
  s.segment(k, spec.dx) = params.alpha;
  k += spec.dx;
  s.segment(k, spec.dz) = params.beta;
  k += spec.dz;
  s.segment(k, spec.Y - 2) = params.gamma.head(spec.Y - 2);
  k += spec.Y - 2;
  s.segment(k, spec.R - 1) = params.theta.head(spec.R - 1);
  k += spec.R - 1;
  s[k] = params.rho;
  return s;
}

std::vector<std::string> structural_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  for (int i = 0; i < spec.dx; ++i) names.push_back("alpha[" + std::to_string(i) + "]");
  for (int i = 0; i < spec.dz; ++i) names.push_back("beta[" + std::to_string(i) + "]");
  for (int i = 0; i < spec.Y - 2; ++i) names.push_back("gamma[" + std::to_string(i) + "]");
  for (int i = 0; i < spec.R - 1; ++i) names.push_back("theta[" + std::to_string(i) + "]");
  names.push_back("rho");
  return names;
}

ValidationReport validate_dataset(std::span<const RespondentRecord> records,
                                  std::span<const Stratum> strata, const ModelSpec& spec) {
  ValidationReport report;
  auto error = [&](std::string code, std::string msg) {
    report.errors.push_back({std::move(code), std::move(msg)});
  };

  try {
    spec.validate();
  } catch (const Error& e) {
    error("invalid-spec", e.what());
    return report;
  }

  report.outcome_counts.assign(spec.Y, 0);
  report.response_counts.assign(spec.R, 0);
  if (records.empty()) error("no-respondents", "no respondent records");

  for (std::size_t i = 0; i < records.size(); ++i) {
    const RespondentRecord& rec = records[i];
    const std::string where = "record " + std::to_string(i + 1);
    if (rec.y < 1 || rec.y > spec.Y) {
      error("outcome-range", where + ": outcome " + std::to_string(rec.y) + " outside 1.." +
                                 std::to_string(spec.Y));
    } else {
      ++report.outcome_counts[rec.y - 1];
    }
    if (rec.r < 1 || rec.r > spec.R) {
      error("proxy-range", where + ": proxy " + std::to_string(rec.r) + " outside 1.." +
                               std::to_string(spec.R));
    } else {
      ++report.response_counts[rec.r - 1];
    }
    if (rec.x.size() != spec.dx) {
      error("dimension", where + ": x has length " + std::to_string(rec.x.size()) +
                             ", expected " + std::to_string(spec.dx));
    } else if (!rec.x.allFinite()) {
      error("non-finite", where + ": x contains a non-finite value");
    }
    if (rec.z.size() != spec.dz) {
      error("dimension", where + ": z has length " + std::to_string(rec.z.size()) +
                             ", expected " + std::to_string(spec.dz));
    } else if (!rec.z.allFinite()) {
      error("non-finite", where + ": z contains a non-finite value");
    }
    if (!(rec.weight >= 0.0) || !std::isfinite(rec.weight)) {
      error("weight", where + ": weight must be finite and nonnegative");
    } else if (rec.weight == 0.0) {
      ++report.zero_weight_records;
    }
  }

  if (!records.empty()) {
    for (int y = 1; y <= spec.Y; ++y) {
      if (report.outcome_counts[y - 1] == 0) {
        error("empty-category", "outcome category " + std::to_string(y) + " empty");
      }
    }
    for (int r = 1; r <= spec.R; ++r) {
      if (report.response_counts[r - 1] == 0) {
        error("empty-category", "proxy category " + std::to_string(r) + " empty");
      }
    }
  }
  if (report.zero_weight_records > 0) {
    report.warnings.push_back({"zero-weight", std::to_string(report.zero_weight_records) +
                                                  " records have zero weight"});
  }

  if (strata.empty()) error("no-strata", "no strata supplied");
  for (std::size_t k = 0; k < strata.size(); ++k) {
    const Stratum& s = strata[k];
    const std::string where = "stratum " + (s.id.empty() ? std::to_string(k + 1) : s.id);
    if (s.x.size() != spec.dx || s.z.size() != spec.dz) {
      error("dimension", where + ": covariate lengths do not match the model");
    }
    if (!(s.share > 0.0 && s.share <= 1.0)) {
      error("share-range", where + ": share " + format_number(s.share) + " outside (0,1]");
    }
    report.share_sum += s.share;
  }
  if (!strata.empty() && std::fabs(report.share_sum - 1.0) > 1e-9) {
    error("share-sum", "shares sum " + format_number(report.share_sum) + " ≠ 1");
  }
  return report;
}

}  // namespace ovrp
