#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "ovrp/error.hpp"
#include "ovrp/model.hpp"

using Catch::Matchers::WithinAbs;

namespace {

bool has_error(const ovrp::ValidationReport& r, const std::string& text) {
  for (const auto& e : r.errors) {
    if (e.message.find(text) != std::string::npos) return true;
  }
  return false;
}

ovrp::RespondentRecord record(int y, int r, int dx = 1, int dz = 1) {
  return {y, r, Eigen::VectorXd::Ones(dx), Eigen::VectorXd::Ones(dz), 1.0};
}

}  // namespace

TEST_CASE("free dimension counts the two normalized zeros out", "[model]") {
  CHECK(ovrp::free_dimension({2, 1, 3, 2}) == 3 + 2 + 1);
  CHECK(ovrp::free_dimension({5, 7, 4, 4}) == 4 + 4 + 3 + 6 + 1);
  CHECK(ovrp::structural_names({5, 7, 4, 4}).size() == 18u);
}

TEST_CASE("pack examples", "[model]") {
  ovrp::ParamSet p;
  p.alpha = Eigen::VectorXd::Constant(1, 0.3);
  p.beta = Eigen::VectorXd::Constant(1, -0.2);
  p.gamma = Eigen::Vector3d(-1.3, -0.4, 0.0);
  p.theta = Eigen::Vector2d(-0.7, 0.0);
  p.rho = 0.0;
  const ovrp::FreeVector v = ovrp::pack(p);
  REQUIRE(v.size() == 1 + 1 + 2 + 1 + 1);
  CHECK_THAT(v[2], WithinAbs(std::log(0.9), 1e-15));
  CHECK_THAT(v[3], WithinAbs(std::log(0.4), 1e-15));
  CHECK_THAT(v[4], WithinAbs(std::log(0.7), 1e-15));
  CHECK(v[5] == 0.0);

  ovrp::ParamSet binary;
  binary.alpha = Eigen::VectorXd::Zero(2);
  binary.beta = Eigen::VectorXd::Zero(3);
  binary.gamma = Eigen::VectorXd::Zero(1);
  binary.theta = Eigen::VectorXd::Zero(1);
  CHECK(ovrp::pack(binary).size() == 2 + 3 + 1);
}

TEST_CASE("unpack examples", "[model]") {
  const ovrp::ModelSpec spec{3, 2, 1, 1};
  const ovrp::ParamSet p = ovrp::unpack(Eigen::VectorXd::Zero(ovrp::free_dimension(spec)), spec);
  CHECK(p.alpha[0] == 0.0);
  CHECK(p.beta[0] == 0.0);
  CHECK(p.gamma[0] == -1.0);
  CHECK(p.gamma[1] == 0.0);
  CHECK(p.theta[0] == -1.0);
  CHECK(p.theta[1] == 0.0);
  CHECK(p.rho == 0.0);

  Eigen::VectorXd v = Eigen::VectorXd::Zero(ovrp::free_dimension(spec));
  v[ovrp::rho_index(spec)] = std::atanh(0.49);
  CHECK_THAT(ovrp::unpack(v, spec).rho, WithinAbs(0.49, 1e-15));
  CHECK_THROWS_AS(ovrp::unpack(Eigen::VectorXd::Zero(3), spec), ovrp::Error);
}

TEST_CASE("pack and unpack are mutually inverse", "[model]") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const ovrp::ModelSpec spec{2 + static_cast<int>(seed % 6), 1 + static_cast<int>(seed % 8),
                               1 + static_cast<int>(seed % 3), 1 + static_cast<int>(seed % 4)};
    const ovrp::ParamSet p = fixture::random_params(spec, seed, 0.99);
    const ovrp::ParamSet q = ovrp::unpack(ovrp::pack(p), spec);
    CHECK((q.alpha - p.alpha).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((q.beta - p.beta).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((q.gamma - p.gamma).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((q.theta - p.theta).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(q.rho - p.rho) <= 1e-12);

    // atanh loses ~eps / (1 - rho^2) near |rho| = 1, so keep the rho
    // coordinate in the range real fits visit.
    const Eigen::VectorXd v = fixture::random_vector(ovrp::free_dimension(spec), seed, 1.0);
    CHECK((ovrp::pack(ovrp::unpack(v, spec)) - v).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("unpack yields valid parameters for extreme free vectors", "[model]") {
  const ovrp::ModelSpec spec{6, 5, 2, 2};
  std::vector<Eigen::VectorXd> cases;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    cases.push_back(fixture::random_vector(ovrp::free_dimension(spec), seed, 3.0));
  }
  for (double c : {-1e6, -60.0, 25.0, 1e6}) {
    cases.push_back(Eigen::VectorXd::Constant(ovrp::free_dimension(spec), c));
  }
  for (const auto& v : cases) {
    const ovrp::ParamSet p = ovrp::unpack(v, spec);
    CHECK_NOTHROW(p.validate());
    for (int j = 1; j < p.gamma.size(); ++j) CHECK(p.gamma[j] > p.gamma[j - 1]);
    for (int j = 1; j < p.theta.size(); ++j) CHECK(p.theta[j] > p.theta[j - 1]);
    CHECK(std::abs(p.rho) <= 1.0);
  }
}

TEST_CASE("ParamSet validation rejects broken invariants", "[model]") {
  ovrp::ParamSet p = fixture::random_params({4, 3, 2, 2}, 9);
  CHECK_NOTHROW(p.validate());
  ovrp::ParamSet bad = p;
  bad.gamma[2] = 0.1;
  CHECK_THROWS_AS(bad.validate(), ovrp::Error);
  bad = p;
  std::swap(bad.theta[0], bad.theta[1]);
  CHECK_THROWS_AS(bad.validate(), ovrp::Error);
  bad = p;
  bad.rho = 1.0;
  CHECK_THROWS_AS(bad.validate(), ovrp::Error);
  CHECK_THROWS_AS(ovrp::pack(bad), ovrp::Error);
}

TEST_CASE("validate_dataset reports every problem", "[model]") {
  const ovrp::ModelSpec spec{2, 4, 1, 1};
  std::vector<ovrp::RespondentRecord> records;
  for (int r : {1, 2, 4}) {
    records.push_back(record(1, r));
    records.push_back(record(2, r));
  }
  std::vector<ovrp::Stratum> strata = {{"s1", Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 0.5},
                                       {"s2", Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), 0.48}};
  const auto report = ovrp::validate_dataset(records, strata, spec);
  CHECK_FALSE(report.ok());
  CHECK(has_error(report, "proxy category 3 empty"));
  CHECK(has_error(report, "shares sum 0.98 ≠ 1"));

  records.push_back(record(1, 3));
  records.back().weight = 0.0;
  strata[1].share = 0.5;
  const auto good = ovrp::validate_dataset(records, strata, spec);
  CHECK(good.ok());
  CHECK(good.errors.empty());
  CHECK(good.zero_weight_records == 1);
  CHECK(good.response_counts == std::vector<long>{2, 2, 1, 2});
}

TEST_CASE("validate_dataset flags dimensions and ranges", "[model]") {
  const ovrp::ModelSpec spec{3, 2, 2, 1};
  std::vector<ovrp::RespondentRecord> records = {record(1, 1, 2), record(2, 2, 2), record(3, 1, 2),
                                                 record(4, 1, 2), record(1, 2, 1)};
  const std::vector<ovrp::Stratum> strata = {{"s", Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(1), 1.0}};
  const auto report = ovrp::validate_dataset(records, strata, spec);
  CHECK(report.errors.size() >= 2);
}

TEST_CASE("standard synthetic design is valid", "[model]") {
  const auto d = fixture::standard_design(0.5);
  const auto sim = fixture::simulate(d, 5000, 1);
  CHECK(ovrp::validate_dataset(sim.respondents, d.strata, d.spec).ok());
}
