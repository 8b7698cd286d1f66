#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ovrp/bvn.hpp"
#include "ovrp/error.hpp"

using Catch::Matchers::WithinAbs;
using ovrp::kInf;

namespace {

// Plackett: dPhi2/drho = phi2, integrated over t = asin(r) by Simpson's rule.
double plackett(double a, double b, double rho) {
  const double upper = std::asin(rho);
  const int n = 2000;
  const double h = upper / n;
  auto f = [&](double t) {
    const double c = std::cos(t);
    return std::exp(-(a * a - 2.0 * a * b * std::sin(t) + b * b) / (2.0 * c * c));
  };
  double s = f(0.0) + f(upper);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4.0 : 2.0);
  return oracle::phi_cdf(a) * oracle::phi_cdf(b) + s * h / 3.0 / (2.0 * M_PI);
}

}  // namespace

TEST_CASE("std_normal_cdf reference values", "[bvn]") {
  CHECK(ovrp::std_normal_cdf(0.0) == 0.5);
  CHECK(ovrp::std_normal_cdf(kInf) == 1.0);
  CHECK(ovrp::std_normal_cdf(-kInf) == 0.0);
  CHECK_THAT(ovrp::std_normal_cdf(1.959963985), WithinAbs(0.975, 1e-9));
  CHECK_THROWS_AS(ovrp::std_normal_cdf(std::nan("")), ovrp::Error);
  for (double x = -8.0; x <= 8.0; x += 0.37) {
    CHECK_THAT(ovrp::std_normal_cdf(x), WithinAbs(oracle::phi_cdf(x), 1e-15));
  }
}

TEST_CASE("std_normal_quantile inverts the CDF", "[bvn]") {
  for (double p : {1e-12, 1e-6, 0.01, 0.2, 0.5, 0.75, 0.975, 1 - 1e-9}) {
    const double x = ovrp::std_normal_quantile(p);
    CHECK_THAT(ovrp::std_normal_cdf(x), WithinAbs(p, 1e-14 + 1e-13 * p));
  }
  CHECK(ovrp::std_normal_quantile(0.0) == -kInf);
  CHECK(ovrp::std_normal_quantile(1.0) == kInf);
}

TEST_CASE("bvn_cdf closed forms", "[bvn]") {
  CHECK_THAT(ovrp::bvn_cdf(0, 0, 0), WithinAbs(0.25, 1e-15));
  CHECK_THAT(ovrp::bvn_cdf(0, 0, 0.5), WithinAbs(1.0 / 3.0, 1e-12));
  for (double rho : {-0.999, -0.95, -0.93, -0.9, -0.5, 0.0, 0.29, 0.31, 0.49, 0.5, 0.74, 0.76, 0.95, 0.999}) {
    CHECK_THAT(ovrp::bvn_cdf(0, 0, rho), WithinAbs(0.25 + std::asin(rho) / (2 * M_PI), 1e-12));
  }
}

TEST_CASE("bvn_cdf matches Plackett integration", "[bvn]") {
  double worst = 0.0;
  for (double a : {-4.0, -2.5, -1.0, -0.2, 0.0, 0.6, 1.7, 3.1}) {
    for (double b : {-3.3, -1.2, 0.0, 0.45, 2.2}) {
      for (double rho : {-0.99, -0.94, -0.92, -0.6, -0.1, 0.2, 0.5, 0.8, 0.93, 0.97, 0.995}) {
        worst = std::max(worst, std::abs(ovrp::bvn_cdf(a, b, rho) - plackett(a, b, rho)));
      }
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("bvn_cdf against the conditional Monte Carlo oracle", "[bvn]") {
  const ovrp::RectBounds b{-kInf, 0.7, -kInf, -0.3};
  CHECK_THAT(ovrp::bvn_cdf(0.7, -0.3, 0.49), WithinAbs(oracle::mc_rect_prob(b, 0.49, 10'000'000, 7), 3e-4));
}

TEST_CASE("bvn_cdf symmetry, marginals and monotonicity", "[bvn]") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> coord(-4.0, 4.0), corr(-0.999, 0.999);
  for (int i = 0; i < 500; ++i) {
    const double a = coord(gen), b = coord(gen), rho = corr(gen), d = std::abs(coord(gen)) / 4;
    CHECK(ovrp::bvn_cdf(a, b, rho) == ovrp::bvn_cdf(b, a, rho));
    CHECK(ovrp::bvn_cdf(a + d, b, rho) >= ovrp::bvn_cdf(a, b, rho) - 1e-15);
    CHECK(ovrp::bvn_cdf(a, b + d, rho) >= ovrp::bvn_cdf(a, b, rho) - 1e-15);
  }
  for (int i = 0; i < 100; ++i) {
    const double a = -5.0 + i * 0.1;
    for (double rho : {-0.99, -0.9, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9, 0.99}) {
      CHECK_THAT(ovrp::bvn_cdf(a, kInf, rho), WithinAbs(ovrp::std_normal_cdf(a), 1e-12));
      CHECK_THAT(ovrp::bvn_cdf(kInf, a, rho), WithinAbs(ovrp::std_normal_cdf(a), 1e-12));
    }
  }
}

TEST_CASE("bvn_cdf degenerate and invalid correlations", "[bvn]") {
  CHECK_THAT(ovrp::bvn_cdf(0.3, -0.4, 1.0), WithinAbs(ovrp::std_normal_cdf(-0.4), 1e-15));
  CHECK_THAT(ovrp::bvn_cdf(0.3, 0.4, -1.0),
             WithinAbs(ovrp::std_normal_cdf(0.3) - ovrp::std_normal_cdf(-0.4), 1e-15));
  CHECK(ovrp::bvn_cdf(-0.3, -0.4, -1.0) == 0.0);
  CHECK_THROWS_AS(ovrp::bvn_cdf(0, 0, 1.01), ovrp::Error);
  CHECK_THROWS_AS(ovrp::bvn_cdf(std::nan(""), 0, 0.2), ovrp::Error);
}

TEST_CASE("rect_prob examples", "[bvn]") {
  CHECK_THAT(ovrp::rect_prob({-kInf, kInf, -kInf, kInf}, 0.7), WithinAbs(1.0, 1e-15));
  CHECK_THAT(ovrp::rect_prob({-1, 1, 0, kInf}, 0.0),
             WithinAbs((ovrp::std_normal_cdf(1) - ovrp::std_normal_cdf(-1)) * 0.5, 1e-8));
  const ovrp::RectBounds b{-0.5, 0.2, -0.8, 1.1};
  CHECK_THAT(ovrp::rect_prob(b, 0.49), WithinAbs(oracle::mc_rect_prob(b, 0.49, 10'000'000, 11), 3e-4));
}

TEST_CASE("rect_prob partitions sum to one", "[bvn]") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> cut(-3.0, 3.0), corr(-0.99, 0.99);
  for (int trial = 0; trial < 40; ++trial) {
    const int I = 2 + trial % 6, J = 2 + (trial * 7) % 8;
    std::vector<double> xs{-kInf}, ys{-kInf};
    for (int i = 0; i < I - 1; ++i) xs.push_back(cut(gen));
    for (int j = 0; j < J - 1; ++j) ys.push_back(cut(gen));
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    xs.push_back(kInf);
    ys.push_back(kInf);
    const double rho = corr(gen);
    const ovrp::BvnKernel kernel(rho);
    double total = 0.0;
    for (int i = 0; i < I; ++i) {
      for (int j = 0; j < J; ++j) {
        const ovrp::RectBounds b{xs[i], xs[i + 1], ys[j], ys[j + 1]};
        const double p = ovrp::rect_prob(b, kernel);
        CHECK(p >= 0.0);
        CHECK(p == ovrp::rect_prob(b, rho));
        total += p;
      }
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("BvnKernel flip evaluates the negated correlation", "[bvn]") {
  const ovrp::BvnKernel k(0.62);
  for (double a : {-1.5, 0.0, 0.8}) {
    for (double b : {-0.4, 1.9}) {
      CHECK_THAT(k.cdf(a, b, true), WithinAbs(ovrp::bvn_cdf(a, b, -0.62), 1e-15));
      CHECK_THAT(k.upper(a, b), WithinAbs(ovrp::bvn_cdf(-a, -b, 0.62), 1e-15));
    }
  }
}
