#include "fixtures.hpp"

#include <random>
#include <string>

namespace fixture {

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(values.size());
  int i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace

Design standard_design(double rho) {
  Design d;
  d.spec = ovrp::ModelSpec{5, 7, 4, 4};
  const double share_a[] = {0.5, 0.3, 0.2};
  const double share_b[] = {0.4, 0.3, 0.2, 0.1};
  const double share_c[] = {0.1, 0.2, 0.3, 0.25, 0.15};
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 4; ++b) {
      for (int c = 0; c < 5; ++c) {
        ovrp::Stratum s;
        s.id = "a" + std::to_string(a) + "b" + std::to_string(b) + "c" + std::to_string(c);
        s.x = vec({1.0, a == 1 ? 1.0 : 0.0, a == 2 ? 1.0 : 0.0, c / 4.0});
        s.z = vec({1.0, b == 1 ? 1.0 : 0.0, b == 2 ? 1.0 : 0.0, b == 3 ? 1.0 : 0.0});
        s.share = share_a[a] * share_b[b] * share_c[c];
        d.strata.push_back(std::move(s));
      }
    }
  }
  d.truth.alpha = vec({-0.5, 0.4, -0.3, 0.6});
  d.truth.beta = vec({-0.1, 0.3, -0.2, 0.4});
  d.truth.gamma = vec({-1.6, -1.0, -0.5, 0.0});
  d.truth.theta = vec({-1.6, -1.2, -0.85, -0.6, -0.36, -0.18, 0.0});
  d.truth.rho = rho;
  return d;
}

Design small_design(double rho) {
  Design d;
  d.spec = ovrp::ModelSpec{3, 3, 2, 2};
  const double share_a[] = {0.6, 0.4};
  const double share_b[] = {0.5, 0.3, 0.2};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 3; ++b) {
      ovrp::Stratum s;
      s.id = "a" + std::to_string(a) + "b" + std::to_string(b);
      s.x = vec({1.0, static_cast<double>(a)});
      s.z = vec({1.0, b / 2.0});
      s.share = share_a[a] * share_b[b];
      d.strata.push_back(std::move(s));
    }
  }
  d.truth.alpha = vec({-0.4, 0.5});
  d.truth.beta = vec({-0.2, 0.6});
  d.truth.gamma = vec({-0.9, 0.0});
  d.truth.theta = vec({-1.0, -0.5, 0.0});
  d.truth.rho = rho;
  return d;
}

ovrp::SimOutput simulate(const Design& d, long n_population, std::uint64_t seed) {
  ovrp::SimConfig cfg;
  cfg.spec = d.spec;
  cfg.truth = d.truth;
  cfg.strata = d.strata;
  cfg.n_population = n_population;
  cfg.seed = seed;
  return ovrp::draw_population(cfg);
}

ovrp::ParamSet random_params(const ovrp::ModelSpec& spec, std::uint64_t seed,
                             double max_abs_rho) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::uniform_real_distribution<double> gap(0.1, 1.5);
  std::uniform_real_distribution<double> corr(-max_abs_rho, max_abs_rho);
  ovrp::ParamSet p;
  p.alpha.resize(spec.dx);
  p.beta.resize(spec.dz);
  for (int i = 0; i < spec.dx; ++i) p.alpha[i] = coef(gen);
  for (int i = 0; i < spec.dz; ++i) p.beta[i] = coef(gen);
  p.gamma.resize(spec.Y - 1);
  p.gamma[spec.Y - 2] = 0.0;
  for (int j = spec.Y - 3; j >= 0; --j) p.gamma[j] = p.gamma[j + 1] - gap(gen);
  p.theta.resize(spec.R);
  p.theta[spec.R - 1] = 0.0;
  for (int j = spec.R - 2; j >= 0; --j) p.theta[j] = p.theta[j + 1] - gap(gen);
  p.rho = corr(gen);
  return p;
}

Eigen::VectorXd random_vector(int n, std::uint64_t seed, double scale) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(gen);
  return v;
}

}  // namespace fixture
