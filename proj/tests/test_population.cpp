#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "ovrp/bvn.hpp"
#include "ovrp/error.hpp"
#include "ovrp/population.hpp"

using Catch::Matchers::WithinAbs;
using ovrp::Target;

namespace {

ovrp::ParamSet covariate_free(double rho) {
  ovrp::ParamSet p;
  p.alpha = Eigen::VectorXd::Zero(1);
  p.beta = Eigen::VectorXd::Zero(1);
  p.gamma = Eigen::Vector2d(-1.0, 0.0);
  p.theta = Eigen::Vector2d(-0.5, 0.0);
  p.rho = rho;
  return p;
}

std::vector<ovrp::Stratum> single(const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  return {{"only", x, z, 1.0}};
}

void check_distribution(const Eigen::VectorXd& v) {
  CHECK_THAT(v.sum(), WithinAbs(1.0, 1e-9));
  CHECK(v.minCoeff() >= 0.0);
  CHECK(v.maxCoeff() <= 1.0);
}

}  // namespace

TEST_CASE("population distribution examples", "[population]") {
  const auto p = covariate_free(0.3);
  std::vector<ovrp::Stratum> strata = {{"a", Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 0.3},
                                       {"b", Eigen::VectorXd::Ones(1) * 2, Eigen::VectorXd::Ones(1), 0.7}};
  const Eigen::VectorXd dist = ovrp::outcome_dist_population(p, strata);
  CHECK_THAT(dist[0], WithinAbs(0.15866, 1e-5));
  CHECK_THAT(dist[1], WithinAbs(0.34134, 1e-5));
  CHECK_THAT(dist[2], WithinAbs(0.5, 1e-15));

  const ovrp::ParamSet q = fixture::random_params({4, 2, 2, 1}, 3);
  const Eigen::Vector2d x(1.0, 0.4);
  const Eigen::VectorXd one = ovrp::outcome_dist_population(q, single(x, Eigen::VectorXd::Ones(1)));
  const Eigen::MatrixXd by_stratum =
      ovrp::conditional_by_stratum(q, single(x, Eigen::VectorXd::Ones(1)), Target::population);
  CHECK((one.transpose() - by_stratum.row(0)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THAT(one.sum(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("population distribution matches simulated outcome frequencies", "[population]") {
  const auto d = fixture::standard_design(0.5);
  const auto sim = fixture::simulate(d, 1'000'000, 77);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(d.spec.Y);
  for (const auto& row : sim.full_truth) freq[row.y - 1] += 1.0;
  freq /= static_cast<double>(sim.full_truth.size());
  const Eigen::VectorXd model = ovrp::outcome_dist_population(d.truth, d.strata);
  CHECK((model - freq).cwiseAbs().maxCoeff() <= 2e-3);
}

TEST_CASE("independence makes every target coincide", "[population]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ovrp::ParamSet p = fixture::random_params({5, 4, 4, 4}, seed);
    p.rho = 0.0;
    const auto d = fixture::standard_design(0.0);
    const Eigen::MatrixXd pop = ovrp::conditional_by_stratum(p, d.strata, Target::population);
    const Eigen::MatrixXd resp = ovrp::conditional_by_stratum(p, d.strata, Target::respondents);
    const Eigen::MatrixXd non = ovrp::conditional_by_stratum(p, d.strata, Target::nonrespondents);
    CHECK((pop - resp).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((pop - non).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(ovrp::mixture_check(p, d.strata).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("mixture identity over a random sweep", "[population]") {
  const auto d = fixture::standard_design(0.0);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ovrp::ParamSet p = fixture::random_params(d.spec, seed, 0.98);
    worst = std::max(worst, ovrp::mixture_check(p, d.strata).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd non = ovrp::conditional_by_stratum(p, d.strata, Target::nonrespondents);
    for (Eigen::Index k = 0; k < non.rows(); ++k) CHECK_THAT(non.row(k).sum(), WithinAbs(1.0, 1e-10));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("nonrespondent numerators add up to the nonresponse probability", "[population]") {
  const auto d = fixture::standard_design(0.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ovrp::ParamSet p = fixture::random_params(d.spec, seed + 50, 0.95);
    for (const auto& s : d.strata) {
      const double ax = p.alpha.dot(s.x), bz = p.beta.dot(s.z);
      double total = 0.0;
      for (int j = 0; j < d.spec.Y; ++j) {
        const double lo = j == 0 ? -ovrp::kInf : p.gamma[j - 1] - ax;
        const double hi = j == d.spec.Y - 1 ? ovrp::kInf : p.gamma[j] - ax;
        total += ovrp::rect_prob({lo, hi, -bz, ovrp::kInf}, p.rho);
      }
      CHECK_THAT(total, WithinAbs(ovrp::nonresponse_prob(s.z, p), 1e-10));
    }
  }
}

TEST_CASE("strong positive selection shifts nonrespondents up", "[population]") {
  const auto p = covariate_free(0.99);
  const auto strata = single(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
  const Eigen::VectorXd non = ovrp::outcome_dist_conditional(p, strata, Target::nonrespondents);
  const Eigen::VectorXd resp = ovrp::outcome_dist_conditional(p, strata, Target::respondents);
  // First-order stochastic dominance: every lower tail is thinner.
  double cn = 0.0, cr = 0.0;
  for (int j = 0; j < 2; ++j) {
    cn += non[j];
    cr += resp[j];
    CHECK(cn < cr);
  }
}

TEST_CASE("conditional distributions match simulated subpopulations", "[population]") {
  SECTION("one stratum: printed and reweighted agree") {
    fixture::Design d = fixture::small_design(0.6);
    d.strata = single(d.strata[4].x, d.strata[4].z);
    for (bool nonresp : {true, false}) {
      const Target t = nonresp ? Target::nonrespondents : Target::respondents;
      const Eigen::VectorXd printed = ovrp::outcome_dist_conditional(d.truth, d.strata, t);
      const Eigen::VectorXd rew =
          ovrp::outcome_dist_conditional(d.truth, d.strata, t, ovrp::Aggregation::reweighted);
      CHECK((printed - rew).cwiseAbs().maxCoeff() < 1e-15);
      const Eigen::VectorXd mc = oracle::mc_conditional_freqs(d.truth, d.strata, nonresp, 1'000'000, 3);
      CHECK((printed - mc).cwiseAbs().maxCoeff() <= 3e-3);
    }
  }
  SECTION("many strata: the reweighted aggregation is the subpopulation distribution") {
    const auto d = fixture::standard_design(0.5);
    for (bool nonresp : {true, false}) {
      const Target t = nonresp ? Target::nonrespondents : Target::respondents;
      const Eigen::VectorXd rew =
          ovrp::outcome_dist_conditional(d.truth, d.strata, t, ovrp::Aggregation::reweighted);
      const Eigen::VectorXd mc = oracle::mc_conditional_freqs(d.truth, d.strata, nonresp, 1'000'000, 4);
      CHECK((rew - mc).cwiseAbs().maxCoeff() <= 3e-3);
      check_distribution(ovrp::outcome_dist_conditional(d.truth, d.strata, t));
    }
  }
}

TEST_CASE("degenerate strata are rejected", "[population]") {
  ovrp::ParamSet p = covariate_free(0.4);
  p.beta[0] = -40.0;
  const auto strata = single(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1));
  try {
    ovrp::outcome_dist_conditional(p, strata, Target::nonrespondents);
    FAIL("expected an error");
  } catch (const ovrp::Error& e) {
    CHECK(e.code() == ovrp::ErrorCode::degenerate_stratum);
  }
  CHECK_NOTHROW(ovrp::outcome_dist_conditional(p, strata, Target::respondents));
}

TEST_CASE("baseline proportions", "[population]") {
  std::vector<ovrp::RespondentRecord> records;
  for (int y : {1, 1, 2}) records.push_back({y, 1, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 1.0});
  const Eigen::VectorXd raw = ovrp::baseline_proportions(records, 2, Target::raw);
  CHECK_THAT(raw[0], WithinAbs(2.0 / 3.0, 1e-15));
  CHECK_THAT(raw[1], WithinAbs(1.0 / 3.0, 1e-15));
  CHECK((ovrp::baseline_proportions(records, 2, Target::weighted) - raw).cwiseAbs().maxCoeff() <= 1e-15);
  records[2].weight = 2.0;
  const Eigen::VectorXd w = ovrp::baseline_proportions(records, 2, Target::weighted);
  CHECK_THAT(w[0], WithinAbs(0.5, 1e-15));
  CHECK_THAT(w[1], WithinAbs(0.5, 1e-15));
  CHECK_THROWS_AS(ovrp::baseline_proportions({}, 2, Target::raw), ovrp::Error);
}

TEST_CASE("model distributions carry delta-method errors", "[population]") {
  const auto d = fixture::small_design(0.4);
  const auto sim = fixture::simulate(d, 8000, 19);
  const auto cells = ovrp::CellTable::build(sim.respondents, d.spec);
  ovrp::FitConfig cfg;
  cfg.n_restarts = 1;
  const auto fit = ovrp::fit(cells, d.strata, {static_cast<double>(sim.n_miss)}, cfg);
  std::vector<std::string> warnings;
  const auto dists = ovrp::model_distributions(fit, d.strata, sim.n_miss, ovrp::Aggregation::printed, &warnings);
  REQUIRE(dists.size() == 3);
  CHECK(dists[0].target == Target::population);
  CHECK(dists[1].target == Target::respondents);
  CHECK(dists[2].target == Target::nonrespondents);
  for (const auto& e : dists) {
    check_distribution(e.proportions);
    REQUIRE(e.se.size() == d.spec.Y);
    CHECK(e.se.minCoeff() > 0.0);
    CHECK(e.n_miss_assumed == sim.n_miss);
  }
  CHECK((dists[0].proportions - ovrp::outcome_dist_population(fit.params, d.strata)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sensitivity grid keeps input order and survives bad rates", "[population]") {
  const auto d = fixture::small_design(0.4);
  const auto sim = fixture::simulate(d, 4000, 23);
  const auto cells = ovrp::CellTable::build(sim.respondents, d.spec);
  ovrp::FitConfig cfg;
  cfg.n_restarts = 1;
  const std::vector<double> rates = {0.7, 0.0, 0.2, 0.5};
  const auto grid = ovrp::sensitivity_grid(cells, d.strata, rates, cfg);
  REQUIRE(grid.size() == rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    CHECK(grid[i].rate == rates[i]);
    CHECK_THAT(grid[i].n_miss, WithinAbs(cells.total_count() * rates[i] / (1 - rates[i]), 1e-9));
  }
  // Rate 0: no nonresponse mass, so the nonrespondent target is dropped.
  CHECK(grid[1].n_miss == 0.0);
  for (const auto& e : grid[1].distributions) CHECK(e.target != Target::nonrespondents);
  const std::vector<double> bad = {0.2, 1.0};
  CHECK_THROWS_AS(ovrp::sensitivity_grid(cells, d.strata, bad, cfg), ovrp::Error);
}
