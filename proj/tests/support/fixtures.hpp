#pragma once

// Synthetic designs shared by unit and acceptance tests.

#include <cstdint>
#include <vector>

#include "ovrp/model.hpp"
#include "ovrp/simulate.hpp"

namespace fixture {

/// 60 strata: factor A (3 levels) x B (4 levels) x C (5 levels) with
/// product shares. x = [1, A=1, A=2, C/4] drives the outcome; z = [1, B=1,
/// B=2, B=3] drives response only, so B is an exclusion restriction and
/// respondent composition over (A, C) matches the population.
struct Design {
  ovrp::ModelSpec spec;
  std::vector<ovrp::Stratum> strata;
  ovrp::ParamSet truth;
};

/// Y = 5, R = 7, roughly 50% nonresponse, correlation rho.
Design standard_design(double rho);

/// Y = 3, R = 3, 6 strata; fast enough for unit tests that refit often.
Design small_design(double rho);

ovrp::SimOutput simulate(const Design& d, long n_population, std::uint64_t seed);

/// A random valid parameter set for the given spec.
ovrp::ParamSet random_params(const ovrp::ModelSpec& spec, std::uint64_t seed,
                             double max_abs_rho = 0.95);

Eigen::VectorXd random_vector(int n, std::uint64_t seed, double scale = 1.0);

}  // namespace fixture
