#pragma once

// CSV ingestion with reference-coded categorical covariates, and result
// serialization (JSON documents, long-format distribution CSV).

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ovrp/estimator.hpp"
#include "ovrp/model.hpp"
#include "ovrp/population.hpp"

namespace ovrp {

inline constexpr int kSchemaVersion = 1;

/// A covariate column and how it enters the design.
struct CovariateSpec {
  std::string column;
  bool categorical = false;
};

/// Parses "name" (numeric) or "name:cat" (categorical).
CovariateSpec parse_covariate(const std::string& text);

struct ColumnMapping {
  std::string y = "y";
  std::string r = "r";
  std::optional<std::string> weight;
  std::vector<CovariateSpec> outcome;
  std::vector<CovariateSpec> response;
  bool intercept = true;
  /// Declared category counts; 0 means infer from the data.
  int Y = 0;
  int R = 0;
  /// Pinned level orders per categorical column (first is the reference).
  std::map<std::string, std::vector<std::string>> levels;
};

/// Level order of each categorical column; index 0 is the reference level
/// and level i > 0 maps to indicator column i - 1.
struct Codebook {
  std::map<std::string, std::vector<std::string>> levels;

  int level_index(const std::string& column, const std::string& level) const;
};

/// Design-matrix column names for x and z.
struct DesignNames {
  std::vector<std::string> x;
  std::vector<std::string> z;
};

struct RespondentData {
  std::vector<RespondentRecord> records;
  ModelSpec spec;
  Codebook codebook;
  DesignNames names;
  std::vector<std::string> warnings;
};

struct StrataData {
  std::vector<Stratum> strata;
  std::vector<std::string> warnings;
};

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF, UTF-8 BOM.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based source line of each row (header is line 1).
  std::vector<long> lines;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);
std::string csv_escape(const std::string& field);

/// Codebook from pinned levels, extended by first-observed order in `table`.
Codebook build_codebook(const CsvTable& table, const ColumnMapping& mapping);
DesignNames design_names(const ColumnMapping& mapping, const Codebook& codebook);

RespondentData load_respondents(const std::filesystem::path& path, const ColumnMapping& mapping);

/// Strata CSV: a `share` column, an optional `stratum` id column and the
/// covariate columns of the mapping, expanded with `codebook`.
StrataData load_strata(const std::filesystem::path& path, const ColumnMapping& mapping,
                       const Codebook& codebook);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// printf %.17g; lossless for every finite double.
std::string format_double(double v);

nlohmann::json params_json(const ParamSet& p);
nlohmann::json fit_json(const FitResult& fit, const DesignNames& names);
nlohmann::json distributions_json(const std::vector<DistributionEstimate>& dists);

struct DistributionRow {
  std::string target;
  double rate = 0.0;
  int category = 1;
  double proportion = 0.0;
  std::optional<double> se;
};

/// Long format with header exactly `target,rate,category,proportion,se`.
std::string distributions_csv(const std::vector<DistributionRow>& rows);
void append_distribution_rows(std::vector<DistributionRow>& rows,
                              const std::vector<DistributionEstimate>& dists, double rate);

}  // namespace ovrp
