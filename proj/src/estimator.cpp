#include "ovrp/estimator.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "ovrp/error.hpp"
#include "ovrp/ordered_probit.hpp"
#include "ovrp/parallel.hpp"
#include "ovrp/rng.hpp"

namespace ovrp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> all_coordinates(Eigen::Index n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) s(j, i) = s(i, j);
  }
  return s;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, std::span<const int> idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace

void FitConfig::validate() const {
  if (!(gradient_tolerance > 0.0) || !(step_tolerance > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "fit tolerances must be positive");
  }
  if (n_restarts < 1) throw Error(ErrorCode::invalid_argument, "n_restarts must be at least 1");
  if (max_iterations < 1) {
    throw Error(ErrorCode::invalid_argument, "max_iterations must be at least 1");
  }
  if (fix_rho_at && !(std::fabs(*fix_rho_at) < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "fix_rho_at must lie in (-1, 1)");
  }
  if (!(jitter >= 0.0)) throw Error(ErrorCode::invalid_argument, "jitter must be nonnegative");
}

InitialValues initial_values(const CellTable& cells, std::span<const Stratum> strata,
                             const NonresponseDesign& nr) {
  const ModelSpec& spec = cells.spec();
  InitialValues out;
  const OrderedProbitFit outcome = fit_ordered_probit(outcome_problem(cells));
  const OrderedProbitFit response = fit_ordered_probit(response_problem(cells, strata, nr));
  if (!outcome.converged || !response.converged) {
    out.free = FreeVector::Zero(free_dimension(spec));
    if (!outcome.converged) {
      out.warnings.push_back("outcome marginal fit failed (" + outcome.message +
                             "); starting from zero");
    }
    if (!response.converged) {
      out.warnings.push_back("response marginal fit failed (" + response.message +
                             "); starting from zero");
    }
    return out;
  }
  ParamSet p;
  p.alpha = outcome.coef;
  p.gamma = outcome.thresholds;
  p.beta = response.coef;
  p.theta = response.thresholds;
  p.rho = 0.0;
  out.free = pack(p);
  return out;
}

OptimizerResult maximize_bfgs(const ScalarFunction& f, const Eigen::VectorXd& x0,
                              std::span<const int> active_in, int max_iterations,
                              double gradient_tolerance, double step_tolerance) {
  const std::vector<int> active =
      active_in.empty() ? all_coordinates(x0.size())
                        : std::vector<int>(active_in.begin(), active_in.end());
  const Eigen::Index m = static_cast<Eigen::Index>(active.size());

  OptimizerResult res;
  res.x = x0;
  res.value = f(x0);
  if (!std::isfinite(res.value)) {
    res.message = "objective not finite at the starting point";
    return res;
  }
  res.trace.push_back(res.value);

  auto grad_at = [&](const Eigen::VectorXd& x) { return gather(central_gradient(f, x, active), active); };

  Eigen::VectorXd g;
  try {
    g = grad_at(res.x);
  } catch (const Error& e) {
    res.message = e.what();
    return res;
  }
  const double initial_scale = std::min(1.0, 1.0 / std::max(1e-12, g.lpNorm<Eigen::Infinity>()));
  Eigen::MatrixXd H = initial_scale * Eigen::MatrixXd::Identity(m, m);
  bool scaled = false;

  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    res.gradient_norm = g.norm();
    if (res.gradient_norm <= gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }

    Eigen::VectorXd d = H * g;
    if (!(g.dot(d) > 0.0)) {
      H = initial_scale * Eigen::MatrixXd::Identity(m, m);
      scaled = false;
      d = H * g;
    }

    // Backtracking (Armijo) line search; -inf points count as failures.
    double t = 1.0;
    double f_new = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new = res.x;
    bool accepted = false;
    const double slope = g.dot(d);
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      x_new = res.x;
      for (Eigen::Index i = 0; i < m; ++i) x_new[active[i]] += t * d[i];
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new >= res.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (scaled) {
        // Retry once from a fresh metric before giving up.
        H = initial_scale * Eigen::MatrixXd::Identity(m, m);
        scaled = false;
        continue;
      }
      res.message = "line search failed";
      return res;
    }

    Eigen::VectorXd g_new;
    try {
      g_new = grad_at(x_new);
    } catch (const Error& e) {
      res.message = e.what();
      return res;
    }
    const Eigen::VectorXd s = t * d;
    const Eigen::VectorXd y = g - g_new;  // gradient change of -f
    const double improvement = f_new - res.value;
    res.x = x_new;
    res.value = f_new;
    res.trace.push_back(f_new);
    g = g_new;
    res.gradient_norm = g.norm();

    if (s.lpNorm<Eigen::Infinity>() < step_tolerance && improvement < 1e-10) {
      res.converged = true;
      res.message = "step tolerance reached";
      return res;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H = (sy / y.squaredNorm()) * Eigen::MatrixXd::Identity(m, m);
        scaled = true;
      }
      const double r = 1.0 / sy;
      const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(m, m) - r * y * s.transpose();
      H = V.transpose() * H * V + r * s * s.transpose();
    }
  }
  res.gradient_norm = g.norm();
  res.converged = res.gradient_norm <= gradient_tolerance;
  res.message = res.converged ? "gradient tolerance reached" : "iteration limit reached";
  return res;
}

Eigen::MatrixXd numeric_hessian(const ScalarFunction& f, const Eigen::VectorXd& v,
                                std::span<const int> active_in) {
  const std::vector<int> active =
      active_in.empty() ? all_coordinates(v.size())
                        : std::vector<int>(active_in.begin(), active_in.end());
  const double f0 = f(v);
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t a = 0; a < active.size(); ++a) {
    for (std::size_t b = a; b < active.size(); ++b) pairs.emplace_back(active[a], active[b]);
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(v.size(), v.size());
  parallel_for(pairs.size(), [&](std::size_t n) {
    const auto [i, j] = pairs[n];
    const double hi = hessian_step(v[i]);
    Eigen::VectorXd p = v;
    if (i == j) {
      p[i] = v[i] + hi;
      const double up = f(p);
      p[i] = v[i] - hi;
      const double down = f(p);
      H(i, i) = (up - 2.0 * f0 + down) / (hi * hi);
      return;
    }
    const double hj = hessian_step(v[j]);
    auto at = [&](double si, double sj) {
      p = v;
      p[i] += si * hi;
      p[j] += sj * hj;
      return f(p);
    };
    const double val = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
    H(i, j) = val;
    H(j, i) = val;
  });
  return H;
}

Eigen::MatrixXd numeric_jacobian(const VectorFunction& g, const Eigen::VectorXd& v) {
  const Eigen::VectorXd g0 = g(v);
  Eigen::MatrixXd J(g0.size(), v.size());
  parallel_for(static_cast<std::size_t>(v.size()), [&](std::size_t n) {
    const Eigen::Index i = static_cast<Eigen::Index>(n);
    const double h = gradient_step(v[i]);
    Eigen::VectorXd p = v;
    p[i] = v[i] + h;
    const Eigen::VectorXd up = g(p);
    p[i] = v[i] - h;
    const Eigen::VectorXd down = g(p);
    J.col(i) = (up - down) / (2.0 * h);
  });
  return J;
}

CovarianceResult covariance_of(const ScalarFunction& f, const FreeVector& v,
                               const ModelSpec& spec, std::span<const int> active_in) {
  const std::vector<int> active =
      active_in.empty() ? all_coordinates(v.size())
                        : std::vector<int>(active_in.begin(), active_in.end());
  const Eigen::MatrixXd H = numeric_hessian(f, v, active);
  if (!H.allFinite()) {
    throw Error(ErrorCode::numeric_failure, "Hessian contains non-finite entries");
  }

  const Eigen::Index m = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd info(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) info(a, b) = -H(active[a], active[b]);
  }
  info = symmetrized(info);

  CovarianceResult out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  Eigen::VectorXd inv_lambda(m);
  bool singular = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (lambda[i] > tol) {
      inv_lambda[i] = 1.0 / lambda[i];
    } else {
      inv_lambda[i] = 0.0;
      singular = true;
    }
  }
  if (singular) out.warnings.push_back("information matrix singular");
  const Eigen::MatrixXd cov_active =
      symmetrized(eig.eigenvectors() * inv_lambda.asDiagonal() * eig.eigenvectors().transpose());

  out.cov_free = Eigen::MatrixXd::Zero(v.size(), v.size());
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) out.cov_free(active[a], active[b]) = cov_active(a, b);
  }

  const Eigen::MatrixXd J = numeric_jacobian(
      [&spec](const Eigen::VectorXd& w) { return structural_vector(unpack(w, spec)); }, v);
  out.cov_structural = symmetrized(J * out.cov_free * J.transpose());
  if (!out.cov_structural.allFinite()) {
    throw Error(ErrorCode::numeric_failure, "covariance contains non-finite entries");
  }
  return out;
}

CovarianceResult covariance(const FreeVector& fit_point, const CellTable& cells,
                            std::span<const Stratum> strata, const NonresponseDesign& nr,
                            std::span<const int> active) {
  const LoglikObjective objective(cells, std::vector<Stratum>(strata.begin(), strata.end()), nr);
  return covariance_of([&](const Eigen::VectorXd& w) { return objective(w); }, fit_point,
                       cells.spec(), active);
}

FitResult fit(const CellTable& cells, std::span<const Stratum> strata,
              const NonresponseDesign& nr, const FitConfig& config) {
  config.validate();
  const ModelSpec& spec = cells.spec();
  const int dim = free_dimension(spec);
  const LoglikObjective objective(cells, std::vector<Stratum>(strata.begin(), strata.end()), nr);
  const ScalarFunction f = [&objective](const Eigen::VectorXd& w) { return objective(w); };

  std::vector<int> active;
  for (int i = 0; i < dim; ++i) {
    if (config.fix_rho_at && i == rho_index(spec)) continue;
    active.push_back(i);
  }

  FitResult result;
  FreeVector start;
  if (config.start) {
    if (config.start->size() != dim) {
      throw Error(ErrorCode::length_mismatch, "start vector length does not match the model");
    }
    start = *config.start;
  } else {
    InitialValues init = initial_values(cells, strata, nr);
    start = std::move(init.free);
    result.warnings = std::move(init.warnings);
  }
  if (config.fix_rho_at) start[rho_index(spec)] = std::atanh(*config.fix_rho_at);

  const double gtol = config.gradient_tolerance * std::max(1.0, cells.total_count());
  std::vector<OptimizerResult> runs(config.n_restarts);
  parallel_for(runs.size(), [&](std::size_t r) {
    FreeVector x0 = start;
    if (r > 0) {
      Xoshiro256 rng(config.seed, r);
      for (int i : active) x0[i] += config.jitter * rng.normal();
    }
    runs[r] = maximize_bfgs(f, x0, active, config.max_iterations, gtol, config.step_tolerance);
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const bool better = std::isfinite(runs[r].value) &&
                        (!std::isfinite(runs[best].value) || runs[r].value > runs[best].value);
    if (better) best = r;
  }
  const OptimizerResult& run = runs[best];
  for (const auto& r : runs) result.any_converged = result.any_converged || r.converged;

  result.free = run.x;
  result.params = unpack(run.x, spec);
  result.loglik = run.value;
  result.converged = run.converged;
  result.iterations = run.iterations;
  result.gradient_norm = run.gradient_norm;
  result.restarts = config.n_restarts;
  result.loglik_trace = run.trace;
  if (!run.converged) result.warnings.push_back("optimizer did not converge: " + run.message);

  result.cov_free = Eigen::MatrixXd::Constant(dim, dim, kNaN);
  result.cov_structural = Eigen::MatrixXd::Constant(dim, dim, kNaN);
  if (std::isfinite(run.value)) {
    try {
      CovarianceResult cov = covariance_of(f, run.x, spec, active);
      result.cov_free = std::move(cov.cov_free);
      result.cov_structural = std::move(cov.cov_structural);
      for (auto& w : cov.warnings) result.warnings.push_back(std::move(w));
    } catch (const Error& e) {
      result.warnings.push_back(std::string("covariance unavailable: ") + e.what());
    }
  } else {
    result.warnings.push_back("log-likelihood is not finite at every start");
  }
  result.se_structural = result.cov_structural.diagonal().cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (std::isnan(result.cov_structural(i, i))) result.se_structural[i] = kNaN;
  }
  return result;
}

DeltaMethodResult delta_method(const VectorFunction& g, const FreeVector& at,
                               const Eigen::MatrixXd& cov_free) {
  DeltaMethodResult out;
  out.values = g(at);
  const Eigen::MatrixXd G = numeric_jacobian(g, at);
  out.cov = symmetrized(G * cov_free * G.transpose());
  out.se = out.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

DeltaMethodResult delta_method(const VectorFunction& g, const FitResult& fit) {
  return delta_method(g, fit.free, fit.cov_free);
}

}  // namespace ovrp
