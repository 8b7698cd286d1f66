#include "ovrp/ordered_probit.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ovrp/bvn.hpp"

namespace ovrp {

namespace {

constexpr int kMaxIterations = 200;
constexpr double kDivergence = 40.0;

// P(l < e <= u) computed on the side of zero where the interval lives.
double interval_prob(double l, double u) {
  if (l > 0.0) return std_normal_cdf(-l) - std_normal_cdf(-u);
  return std_normal_cdf(u) - std_normal_cdf(l);
}

struct Derivatives {
  double loglik = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

class Evaluator {
 public:
  explicit Evaluator(const OrderedProbitProblem& problem)
      : problem_(problem),
        d_(problem.observations.empty() ? (problem.mass_covariates.empty()
                                               ? 0
                                               : problem.mass_covariates.front().size())
                                        : problem.observations.front().w.size()),
        n_free_thresholds_(problem.categories - 2) {}

  int dimension() const { return static_cast<int>(d_) + n_free_thresholds_; }
  Eigen::Index coef_dim() const { return d_; }

  // Full threshold vector (C-1 entries) from the free part of theta.
  Eigen::VectorXd thresholds(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd t(n_free_thresholds_ + 1);
    t.head(n_free_thresholds_) = theta.tail(n_free_thresholds_);
    t[n_free_thresholds_] = 0.0;
    return t;
  }

  bool ordered(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd t = thresholds(theta);
    for (Eigen::Index i = 1; i < t.size(); ++i) {
      if (!(t[i] > t[i - 1])) return false;
    }
    return true;
  }

  Derivatives evaluate(const Eigen::VectorXd& theta, bool with_derivatives) const {
    const int n = dimension();
    const Eigen::VectorXd b = theta.head(d_);
    const Eigen::VectorXd t = thresholds(theta);
    const int C = problem_.categories;

    Derivatives out;
    if (with_derivatives) {
      out.grad = Eigen::VectorXd::Zero(n);
      out.hess = Eigen::MatrixXd::Zero(n, n);
    }
    Eigen::VectorXd du(n), dl(n), g(n);
    for (const auto& obs : problem_.observations) {
      if (obs.count == 0.0) continue;
      const int c = obs.category;
      const double s = b.dot(obs.w);
      const double u = c <= C - 1 ? t[c - 1] - s : kInf;
      const double l = c >= 2 ? t[c - 2] - s : -kInf;
      const double p = interval_prob(l, u);
      if (!(p > 0.0)) {
        out.loglik = -kInf;
        return out;
      }
      out.loglik += obs.count * std::log(p);
      if (!with_derivatives) continue;

      // d(u)/d(theta) and d(l)/d(theta): -w on the coefficients, +1 on the
      // free threshold that bounds the interval.
      du.setZero();
      dl.setZero();
      du.head(d_) = -obs.w;
      dl.head(d_) = -obs.w;
      if (c <= n_free_thresholds_) du[d_ + c - 1] = 1.0;
      if (c >= 2 && c - 1 <= n_free_thresholds_) dl[d_ + c - 2] = 1.0;

      const double fu = std::isfinite(u) ? std_normal_pdf(u) : 0.0;
      const double fl = std::isfinite(l) ? std_normal_pdf(l) : 0.0;
      const double ufu = std::isfinite(u) ? u * fu : 0.0;
      const double lfl = std::isfinite(l) ? l * fl : 0.0;
      g = (fu * du - fl * dl) / p;
      out.grad += obs.count * g;
      out.hess += obs.count * ((-ufu * du * du.transpose() + lfl * dl * dl.transpose()) / p -
                               g * g.transpose());
    }

    if (problem_.n_miss > 0.0) {
      double mass = 0.0;
      Eigen::VectorXd gm = Eigen::VectorXd::Zero(d_);
      Eigen::MatrixXd hm = Eigen::MatrixXd::Zero(d_, d_);
      for (std::size_t k = 0; k < problem_.mass_covariates.size(); ++k) {
        const Eigen::VectorXd& w = problem_.mass_covariates[k];
        const double share = problem_.mass_shares[k];
        const double s = b.dot(w);
        mass += share * std_normal_cdf(s);
        if (with_derivatives) {
          const double f = std_normal_pdf(s);
          gm += share * f * w;
          hm -= share * s * f * w * w.transpose();
        }
      }
      if (!(mass > 0.0)) {
        out.loglik = -kInf;
        return out;
      }
      out.loglik += problem_.n_miss * std::log(mass);
      if (with_derivatives) {
        gm /= mass;
        hm /= mass;
        out.grad.head(d_) += problem_.n_miss * gm;
        out.hess.topLeftCorner(d_, d_) += problem_.n_miss * (hm - gm * gm.transpose());
      }
    }
    return out;
  }

 private:
  const OrderedProbitProblem& problem_;
  Eigen::Index d_;
  int n_free_thresholds_;
};

// Starting thresholds from smoothed marginal category frequencies, shifted
// so that the top threshold is zero.
Eigen::VectorXd start_values(const OrderedProbitProblem& problem, Eigen::Index d) {
  const int C = problem.categories;
  std::vector<double> counts(C, 0.5);
  for (const auto& obs : problem.observations) counts[obs.category - 1] += obs.count;
  counts[C - 1] += problem.n_miss;
  double total = 0.0;
  for (double c : counts) total += c;

  Eigen::VectorXd t(C - 1);
  double cum = 0.0;
  for (int j = 0; j < C - 1; ++j) {
    cum += counts[j];
    t[j] = std_normal_quantile(cum / total);
  }
  t.array() -= t[C - 2];

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + C - 2);
  theta.tail(C - 2) = t.head(C - 2);
  return theta;
}

}  // namespace

double ordered_probit_loglik(const OrderedProbitProblem& problem, const Eigen::VectorXd& coef,
                             const Eigen::VectorXd& thresholds) {
  Evaluator eval(problem);
  Eigen::VectorXd theta(coef.size() + problem.categories - 2);
  theta.head(coef.size()) = coef;
  theta.tail(problem.categories - 2) = thresholds.head(problem.categories - 2);
  return eval.evaluate(theta, false).loglik;
}

OrderedProbitFit fit_ordered_probit(const OrderedProbitProblem& problem) {
  OrderedProbitFit fit;
  if (problem.categories < 2) {
    fit.message = "fewer than two categories";
    return fit;
  }
  Evaluator eval(problem);
  const Eigen::Index d = eval.coef_dim();
  if (d == 0) {
    fit.message = "no covariates";
    return fit;
  }
  Eigen::VectorXd theta = start_values(problem, d);
  Derivatives cur = eval.evaluate(theta, true);

  double total = problem.n_miss;
  for (const auto& obs : problem.observations) total += obs.count;
  const double grad_tol = 1e-10 * std::max(1.0, total);

  auto finish = [&](bool converged, std::string msg) {
    // Under separation the gradient vanishes along a diverging direction
    // before the parameters grow large; the information matrix gives it away.
    if (converged && cur.hess.size() > 0) {
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-cur.hess, Eigen::EigenvaluesOnly);
      if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < 1e-8 * std::max(1.0, total)) {
        converged = false;
        msg = "information matrix near singular (separation)";
      }
    }
    fit.coef = theta.head(d);
    fit.thresholds = eval.thresholds(theta);
    fit.loglik = cur.loglik;
    fit.converged = converged;
    fit.message = std::move(msg);
    return fit;
  };

  if (!std::isfinite(cur.loglik)) return finish(false, "start value has zero likelihood");

  for (int it = 0; it < kMaxIterations; ++it) {
    fit.iterations = it + 1;
    if (cur.grad.lpNorm<Eigen::Infinity>() <= grad_tol) return finish(true, "gradient converged");

    // Newton direction on the negative Hessian, ridged until positive definite.
    const Eigen::MatrixXd info = -cur.hess;
    Eigen::VectorXd step;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::LLT<Eigen::MatrixXd> llt(
          info + ridge * Eigen::MatrixXd::Identity(info.rows(), info.cols()));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(cur.grad);
        break;
      }
      ridge = ridge == 0.0 ? 1e-8 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff())
                           : ridge * 10.0;
    }
    if (step.size() == 0) return finish(false, "information matrix is not positive definite");

    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    Derivatives next;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      trial = theta + t * step;
      if (!eval.ordered(trial)) continue;
      next = eval.evaluate(trial, false);
      if (std::isfinite(next.loglik) && next.loglik >= cur.loglik - 1e-12 * std::abs(cur.loglik)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      const bool small = cur.grad.lpNorm<Eigen::Infinity>() <= 1e-6 * std::max(1.0, total);
      return finish(small, small ? "no further improvement" : "line search failed");
    }
    const double change = (t * step).lpNorm<Eigen::Infinity>();
    theta = trial;
    cur = eval.evaluate(theta, true);
    if (theta.lpNorm<Eigen::Infinity>() > kDivergence) {
      return finish(false, "parameters diverge (separation)");
    }
    if (change < 1e-12) return finish(true, "step converged");
  }
  return finish(false, "iteration limit reached");
}

OrderedProbitProblem outcome_problem(const CellTable& cells) {
  OrderedProbitProblem problem;
  problem.categories = cells.spec().Y;
  // Collapse over z: the outcome margin depends on x only.
  std::map<std::pair<int, std::vector<double>>, double> agg;
  for (const Cell& c : cells.cells()) {
    const Eigen::VectorXd& x = cells.profiles()[c.profile].x;
    agg[{c.y, std::vector<double>(x.data(), x.data() + x.size())}] += c.count;
  }
  for (const auto& [key, count] : agg) {
    problem.observations.push_back(
        {key.first, Eigen::Map<const Eigen::VectorXd>(key.second.data(), key.second.size()),
         count});
  }
  return problem;
}

OrderedProbitProblem response_problem(const CellTable& cells, std::span<const Stratum> strata,
                                      const NonresponseDesign& nr) {
  OrderedProbitProblem problem;
  problem.categories = cells.spec().R + 1;
  std::map<std::pair<int, std::vector<double>>, double> agg;
  for (const Cell& c : cells.cells()) {
    const Eigen::VectorXd& z = cells.profiles()[c.profile].z;
    agg[{c.r, std::vector<double>(z.data(), z.data() + z.size())}] += c.count;
  }
  for (const auto& [key, count] : agg) {
    problem.observations.push_back(
        {key.first, Eigen::Map<const Eigen::VectorXd>(key.second.data(), key.second.size()),
         count});
  }
  problem.n_miss = nr.n_miss;
  for (const Stratum& s : strata) {
    problem.mass_shares.push_back(s.share);
    problem.mass_covariates.push_back(s.z);
  }
  return problem;
}

}  // namespace ovrp
