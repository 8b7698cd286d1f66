#include "ovrp/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ovrp/bvn.hpp"
#include "ovrp/error.hpp"
#include "ovrp/parallel.hpp"

namespace ovrp {

namespace {

constexpr double kUnderflow = 1e-300;

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                      b.data() + b.size());
}

struct ProfileLess {
  bool operator()(const Profile& a, const Profile& b) const {
    if (lex_less(a.x, b.x)) return true;
    if (lex_less(b.x, a.x)) return false;
    return lex_less(a.z, b.z);
  }
};

double upper_bound_of(const Eigen::VectorXd& t, int category) {
  return category > t.size() ? kInf : t[category - 1];
}

double lower_bound_of(const Eigen::VectorXd& t, int category) {
  return category <= 1 ? -kInf : t[category - 2];
}

void check_category(int value, int limit, const char* name) {
  if (value < 1 || value > limit) {
    throw Error(ErrorCode::invalid_argument, std::string(name) + " category " +
                                                 std::to_string(value) + " outside 1.." +
                                                 std::to_string(limit));
  }
}

}  // namespace

double n_miss_from_rate(double n_respondents, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "nonresponse rate must lie in [0, 1)");
  }
  return n_respondents * rate / (1.0 - rate);
}

CellTable CellTable::build(std::span<const RespondentRecord> records, const ModelSpec& spec,
                           bool weighted) {
  spec.validate();
  CellTable table;
  table.spec_ = spec;
  table.record_count_ = records.size();

  std::map<Profile, std::size_t, ProfileLess> profile_index;
  for (const auto& rec : records) {
    check_category(rec.y, spec.Y, "outcome");
    check_category(rec.r, spec.R, "proxy");
    if (rec.x.size() != spec.dx || rec.z.size() != spec.dz) {
      throw Error(ErrorCode::length_mismatch, "record covariate length does not match model");
    }
    profile_index.emplace(Profile{rec.x, rec.z}, 0);
  }
  std::size_t next = 0;
  for (auto& [profile, index] : profile_index) {
    index = next++;
    table.profiles_.push_back(profile);
  }

  // Profiles are already in lexicographic order, so (y, r, profile index)
  // is the required (y, r, x, z) order.
  std::map<std::tuple<int, int, std::size_t>, double> counts;
  for (const auto& rec : records) {
    const std::size_t k = profile_index.at(Profile{rec.x, rec.z});
    counts[{rec.y, rec.r, k}] += weighted ? rec.weight : 1.0;
  }
  for (const auto& [key, count] : counts) {
    if (count <= 0.0) continue;
    const auto [y, r, k] = key;
    table.cells_.push_back(Cell{y, r, k, count});
    table.total_count_ += count;
  }
  return table;
}

double cell_prob(int y, int r, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                 const ParamSet& p) {
  const ModelSpec spec = p.spec();
  check_category(y, spec.Y, "outcome");
  check_category(r, spec.R, "proxy");
  const double ax = p.alpha.dot(x);
  const double bz = p.beta.dot(z);
  RectBounds b;
  b.lo1 = lower_bound_of(p.gamma, y) - ax;
  b.hi1 = upper_bound_of(p.gamma, y) - ax;
  b.lo2 = lower_bound_of(p.theta, r) - bz;
  b.hi2 = p.theta[r - 1] - bz;
  return rect_prob(b, p.rho);
}

double nonresponse_prob(const Eigen::VectorXd& z, const ParamSet& p) {
  return std_normal_cdf(p.beta.dot(z) - p.theta[p.theta.size() - 1]);
}

LoglikEvaluation evaluate_log_likelihood(const CellTable& cells, std::span<const Stratum> strata,
                                         const NonresponseDesign& nr, const ParamSet& p) {
  const ModelSpec& spec = cells.spec();
  if (p.spec() != spec) {
    throw Error(ErrorCode::length_mismatch, "parameter dimensions do not match the cell table");
  }
  const int Y = spec.Y;
  const int R = spec.R;
  const BvnKernel kernel(p.rho);

  // Per profile, the joint CDF on the threshold grid:
  // grid(i, j) = P(eps <= gamma_i - a'x, eta <= theta_j - b'z), i = 1..Y, j = 1..R,
  // with the i = Y row the univariate response CDF. Cells are differences.
  const auto& profiles = cells.profiles();
  std::vector<Eigen::MatrixXd> grids(profiles.size());
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    const double ax = p.alpha.dot(profiles[k].x);
    const double bz = p.beta.dot(profiles[k].z);
    Eigen::MatrixXd& g = grids[k];
    g.resize(Y + 1, R + 1);
    g.row(0).setZero();
    g.col(0).setZero();
    for (int j = 1; j <= R; ++j) {
      const double v = p.theta[j - 1] - bz;
      for (int i = 1; i < Y; ++i) g(i, j) = kernel.cdf(p.gamma[i - 1] - ax, v);
      g(Y, j) = std_normal_cdf(v);
    }
  }

  LoglikEvaluation out;
  double sum = 0.0;
  for (const Cell& c : cells.cells()) {
    const Eigen::MatrixXd& g = grids[c.profile];
    const double prob =
        clamp_probability(g(c.y, c.r) - g(c.y - 1, c.r) - g(c.y, c.r - 1) + g(c.y - 1, c.r - 1));
    if (prob < kUnderflow) {
      out.value = -kInf;
      out.underflow = "cell (y=" + std::to_string(c.y) + ", r=" + std::to_string(c.r) +
                      ", profile " + std::to_string(c.profile) + ") has probability " +
                      std::to_string(prob);
      return out;
    }
    sum += c.count * std::log(prob);
  }

  if (nr.n_miss > 0.0) {
    double mass = 0.0;
    for (const Stratum& s : strata) {
      if (s.z.size() != spec.dz) {
        throw Error(ErrorCode::length_mismatch, "stratum z length does not match model");
      }
      mass += s.share * nonresponse_prob(s.z, p);
    }
    if (mass < kUnderflow) {
      out.value = -kInf;
      out.underflow = "nonresponse mass underflows";
      return out;
    }
    sum += nr.n_miss * std::log(mass);
  } else if (nr.n_miss < 0.0) {
    throw Error(ErrorCode::invalid_argument, "n_miss must be nonnegative");
  }
  out.value = sum;
  return out;
}

double log_likelihood(const CellTable& cells, std::span<const Stratum> strata,
                      const NonresponseDesign& nr, const ParamSet& p) {
  return evaluate_log_likelihood(cells, strata, nr, p).value;
}

LoglikObjective::LoglikObjective(CellTable cells, std::vector<Stratum> strata,
                                 NonresponseDesign nr)
    : cells_(std::move(cells)), strata_(std::move(strata)), nr_(nr) {}

LoglikEvaluation LoglikObjective::evaluate(const FreeVector& v) const {
  return evaluate_log_likelihood(cells_, strata_, nr_, unpack(v, cells_.spec()));
}

double LoglikObjective::operator()(const FreeVector& v) const { return evaluate(v).value; }

Eigen::VectorXd central_gradient(const ScalarFunction& f, const Eigen::VectorXd& v,
                                 std::span<const int> active) {
  std::vector<int> coords;
  if (active.empty()) {
    coords.resize(v.size());
    std::iota(coords.begin(), coords.end(), 0);
  } else {
    coords.assign(active.begin(), active.end());
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(v.size());
  parallel_for(coords.size(), [&](std::size_t n) {
    const int i = coords[n];
    const double h = gradient_step(v[i]);
    Eigen::VectorXd probe = v;
    probe[i] = v[i] + h;
    const double up = f(probe);
    probe[i] = v[i] - h;
    const double down = f(probe);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::numeric_failure,
                  "objective not finite at gradient probe of coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  });
  return grad;
}

Eigen::VectorXd loglik_gradient(const LoglikObjective& objective, const FreeVector& v,
                                std::span<const int> active) {
  return central_gradient([&objective](const Eigen::VectorXd& w) { return objective(w); }, v,
                          active);
}

}  // namespace ovrp
