#pragma once

// Run manifests: a TOML file whose every field can be overridden by a
// command-line flag. Relative paths resolve against the config file's
// directory (or the working directory for flags).

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ovrp/estimator.hpp"
#include "ovrp/io.hpp"
#include "ovrp/simulate.hpp"

namespace ovrp {

struct NonresponseCount {
  double count = 0.0;
};
struct NonresponseRate {
  double rate = 0.0;
};
struct NonresponseGrid {
  std::vector<double> rates;
};
using NonresponseSource = std::variant<std::monostate, NonresponseCount, NonresponseRate, NonresponseGrid>;

struct SimulateSettings {
  std::filesystem::path strata;
  long n_population = 0;
  std::uint64_t seed = 1;
  std::optional<ParamSet> truth;
};

struct RunConfig {
  std::filesystem::path respondents;
  std::filesystem::path strata;
  std::filesystem::path output;      // JSON result (fit, sensitivity) or CSV (simulate)
  std::filesystem::path output_csv;  // long-format distributions
  ColumnMapping mapping;
  NonresponseSource nonresponse;
  FitConfig fit;
  bool emit_conditional = true;
  bool reweighted = false;
  SimulateSettings simulate;
};

/// Parses a TOML manifest. Throws ErrorCode::config with the offending key.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir);

}  // namespace ovrp
