#include "ovrp/io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "ovrp/error.hpp"

namespace ovrp {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "."; }

std::string where(const fs::path& path, long line, const std::string& column) {
  return path.filename().string() + " line " + std::to_string(line) + ", column '" + column + "'";
}

bool parse_int(const std::string& s, long& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_real(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

void require_columns(const CsvTable& t, const fs::path& path, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (t.column(n) < 0) {
      throw Error(ErrorCode::schema_mismatch, path.filename().string() + ": missing column '" + n + "'");
    }
  }
}

std::vector<std::string> covariate_columns(const ColumnMapping& m) {
  std::vector<std::string> cols;
  for (const auto* list : {&m.outcome, &m.response}) {
    for (const auto& c : *list) {
      if (std::find(cols.begin(), cols.end(), c.column) == cols.end()) cols.push_back(c.column);
    }
  }
  return cols;
}

// Appends the design columns of `covs` for one row.
void expand(const std::vector<CovariateSpec>& covs, bool intercept, const Codebook& codebook,
            const CsvTable& t, std::size_t row, const fs::path& path, Eigen::VectorXd& out) {
  std::vector<double> values;
  if (intercept) values.push_back(1.0);
  for (const auto& c : covs) {
    const std::string& cell = t.rows[row][t.column(c.column)];
    if (is_missing(cell)) {
      throw Error(ErrorCode::schema_mismatch,
                  where(path, t.lines[row], c.column) + ": missing covariate value");
    }
    if (c.categorical) {
      const int idx = codebook.level_index(c.column, cell);
      if (idx < 0) {
        throw Error(ErrorCode::unknown_level, where(path, t.lines[row], c.column) +
                                                  ": unidentified level '" + cell + "'");
      }
      const int n_levels = static_cast<int>(codebook.levels.at(c.column).size());
      for (int l = 1; l < n_levels; ++l) values.push_back(idx == l ? 1.0 : 0.0);
    } else {
      double v = 0.0;
      if (!parse_real(cell, v)) {
        throw Error(ErrorCode::schema_mismatch,
                    where(path, t.lines[row], c.column) + ": not a number '" + cell + "'");
      }
      values.push_back(v);
    }
  }
  out = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int parse_category(const CsvTable& t, std::size_t row, const std::string& column,
                   const fs::path& path, int declared) {
  const std::string& cell = t.rows[row][t.column(column)];
  if (is_missing(cell)) {
    throw Error(ErrorCode::schema_mismatch,
                where(path, t.lines[row], column) + ": missing category (row " +
                    std::to_string(row + 1) + ")");
  }
  long v = 0;
  if (!parse_int(cell, v)) {
    throw Error(ErrorCode::schema_mismatch,
                where(path, t.lines[row], column) + ": not an integer category '" + cell + "'");
  }
  if (v < 1 || (declared > 0 && v > declared)) {
    std::string range = declared > 0 ? "1.." + std::to_string(declared) : ">= 1";
    throw Error(ErrorCode::category_range, where(path, t.lines[row], column) + ": category " +
                                               std::to_string(v) + " outside " + range +
                                               " (row " + std::to_string(row + 1) + ")");
  }
  return static_cast<int>(v);
}

// Inferred category count; every code in 1..max must occur.
int infer_categories(const std::vector<int>& codes, const std::string& column, const fs::path& path) {
  const int max_code = *std::max_element(codes.begin(), codes.end());
  std::vector<bool> seen(max_code + 1, false);
  for (int c : codes) seen[c] = true;
  for (int c = 1; c <= max_code; ++c) {
    if (!seen[c]) {
      throw Error(ErrorCode::category_range,
                  path.filename().string() + ", column '" + column +
                      "': non-consecutive category codes, " + std::to_string(c) + " never occurs");
    }
  }
  return max_code;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

CovariateSpec parse_covariate(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) return {trim(text), false};
  const std::string kind = trim(text.substr(colon + 1));
  if (kind == "cat" || kind == "categorical") return {trim(text.substr(0, colon)), true};
  if (kind == "num" || kind == "numeric") return {trim(text.substr(0, colon)), false};
  throw Error(ErrorCode::config, "unknown covariate kind '" + kind + "' in '" + text + "'");
}

int Codebook::level_index(const std::string& column, const std::string& level) const {
  const auto it = levels.find(column);
  if (it == levels.end()) return -1;
  const auto pos = std::find(it->second.begin(), it->second.end(), level);
  return pos == it->second.end() ? -1 : static_cast<int>(pos - it->second.begin());
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);

  std::vector<std::vector<std::string>> records;
  std::vector<long> lines;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  long line = 1;
  long record_line = 1;
  auto end_record = [&] {
    record.push_back(trim(field));
    field.clear();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      records.push_back(std::move(record));
      lines.push_back(record_line);
    }
    record.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (!any) record_line = line;
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(trim(field));
      field.clear();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::schema_mismatch, path.filename().string() + ": unterminated quote");
  if (any) end_record();

  if (records.empty()) throw Error(ErrorCode::empty_input, path.filename().string() + ": empty file");
  CsvTable t;
  t.header = std::move(records[0]);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw Error(ErrorCode::schema_mismatch,
                  path.filename().string() + " line " + std::to_string(lines[r]) + ": expected " +
                      std::to_string(t.header.size()) + " fields, found " +
                      std::to_string(records[r].size()));
    }
    t.rows.push_back(std::move(records[r]));
    t.lines.push_back(lines[r]);
  }
  return t;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Codebook build_codebook(const CsvTable& table, const ColumnMapping& mapping) {
  Codebook cb;
  for (const auto* list : {&mapping.outcome, &mapping.response}) {
    for (const auto& c : *list) {
      if (!c.categorical || cb.levels.count(c.column)) continue;
      auto& levels = cb.levels[c.column];
      if (auto pinned = mapping.levels.find(c.column); pinned != mapping.levels.end()) {
        levels = pinned->second;
      }
      const int col = table.column(c.column);
      if (col < 0) continue;
      for (const auto& row : table.rows) {
        const std::string& v = row[col];
        if (is_missing(v)) continue;
        if (std::find(levels.begin(), levels.end(), v) == levels.end()) levels.push_back(v);
      }
    }
  }
  return cb;
}

DesignNames design_names(const ColumnMapping& mapping, const Codebook& codebook) {
  auto names = [&](const std::vector<CovariateSpec>& covs) {
    std::vector<std::string> out;
    if (mapping.intercept) out.push_back("(intercept)");
    for (const auto& c : covs) {
      if (!c.categorical) {
        out.push_back(c.column);
        continue;
      }
      const auto& levels = codebook.levels.at(c.column);
      for (std::size_t l = 1; l < levels.size(); ++l) out.push_back(c.column + "=" + levels[l]);
    }
    return out;
  };
  return {names(mapping.outcome), names(mapping.response)};
}

RespondentData load_respondents(const fs::path& path, const ColumnMapping& mapping) {
  const CsvTable t = read_csv(path);
  if (t.rows.empty()) throw Error(ErrorCode::empty_input, path.filename().string() + ": no data rows");
  std::vector<std::string> needed = {mapping.y, mapping.r};
  if (mapping.weight) needed.push_back(*mapping.weight);
  for (const auto& c : covariate_columns(mapping)) needed.push_back(c);
  require_columns(t, path, needed);

  RespondentData data;
  data.codebook = build_codebook(t, mapping);
  data.names = design_names(mapping, data.codebook);
  for (const auto& [column, levels] : data.codebook.levels) {
    if (levels.size() < 2) {
      data.warnings.push_back("categorical column '" + column +
                              "' has a single level and contributes no design column");
    }
  }

  std::vector<int> ys, rs;
  data.records.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    RespondentRecord rec;
    rec.y = parse_category(t, i, mapping.y, path, mapping.Y);
    rec.r = parse_category(t, i, mapping.r, path, mapping.R);
    if (mapping.weight) {
      const std::string& cell = t.rows[i][t.column(*mapping.weight)];
      if (!parse_real(cell, rec.weight) || rec.weight < 0.0) {
        throw Error(ErrorCode::schema_mismatch,
                    where(path, t.lines[i], *mapping.weight) + ": invalid weight '" + cell + "'");
      }
    }
    expand(mapping.outcome, mapping.intercept, data.codebook, t, i, path, rec.x);
    expand(mapping.response, mapping.intercept, data.codebook, t, i, path, rec.z);
    ys.push_back(rec.y);
    rs.push_back(rec.r);
    data.records.push_back(std::move(rec));
  }

  data.spec.Y = mapping.Y > 0 ? mapping.Y : infer_categories(ys, mapping.y, path);
  data.spec.R = mapping.R > 0 ? mapping.R : infer_categories(rs, mapping.r, path);
  data.spec.dx = static_cast<int>(data.names.x.size());
  data.spec.dz = static_cast<int>(data.names.z.size());
  if (data.spec.dx == 0 || data.spec.dz == 0) {
    throw Error(ErrorCode::config, "empty design: add an intercept or covariates to both equations");
  }
  return data;
}

StrataData load_strata(const fs::path& path, const ColumnMapping& mapping, const Codebook& codebook) {
  const CsvTable t = read_csv(path);
  if (t.rows.empty()) throw Error(ErrorCode::empty_input, path.filename().string() + ": no data rows");
  std::vector<std::string> needed = {"share"};
  for (const auto& c : covariate_columns(mapping)) needed.push_back(c);
  require_columns(t, path, needed);
  const int share_col = t.column("share");
  const int id_col = t.column("stratum");

  StrataData data;
  double sum = 0.0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    Stratum s;
    s.id = id_col >= 0 ? t.rows[i][id_col] : "s" + std::to_string(i + 1);
    const std::string& cell = t.rows[i][share_col];
    if (!parse_real(cell, s.share) || s.share < 0.0) {
      throw Error(ErrorCode::schema_mismatch, where(path, t.lines[i], "share") + ": invalid share '" + cell + "'");
    }
    expand(mapping.outcome, mapping.intercept, codebook, t, i, path, s.x);
    expand(mapping.response, mapping.intercept, codebook, t, i, path, s.z);
    sum += s.share;
    data.strata.push_back(std::move(s));
  }
  if (!(sum >= 0.999 && sum <= 1.001)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", sum);
    throw Error(ErrorCode::share_sum, path.filename().string() + ": shares sum " + buf + " ≠ 1");
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", sum);
    data.warnings.push_back(std::string("strata shares sum to ") + buf + "; renormalized to 1");
  }
  if (sum != 1.0) {
    for (auto& s : data.strata) s.share /= sum;
  }
  return data;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  static std::atomic<unsigned> counter{0};
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  fs::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()) + "." +
                        std::to_string(counter++));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::io, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json params_json(const ParamSet& p) {
  return {{"alpha", vector_json(p.alpha)},
          {"beta", vector_json(p.beta)},
          {"gamma", vector_json(p.gamma)},
          {"theta", vector_json(p.theta)},
          {"rho", p.rho}};
}

nlohmann::json fit_json(const FitResult& fit, const DesignNames& names) {
  const ModelSpec spec = fit.params.spec();
  nlohmann::json j;
  j["params"] = params_json(fit.params);
  j["design"] = {{"x", names.x}, {"z", names.z}};
  j["structural"] = {{"names", structural_names(spec)},
                     {"values", vector_json(structural_vector(fit.params))}};
  j["se"] = vector_json(fit.se_structural);
  nlohmann::json lower = nlohmann::json::array();
  for (Eigen::Index r = 0; r < fit.cov_structural.rows(); ++r) {
    for (Eigen::Index c = 0; c <= r; ++c) lower.push_back(fit.cov_structural(r, c));
  }
  j["cov"] = lower;
  j["loglik"] = fit.loglik;
  j["convergence"] = {{"converged", fit.converged},
                      {"any_converged", fit.any_converged},
                      {"iterations", fit.iterations},
                      {"gradient_norm", fit.gradient_norm},
                      {"restarts", fit.restarts},
                      {"loglik_trace", fit.loglik_trace}};
  return j;
}

nlohmann::json distributions_json(const std::vector<DistributionEstimate>& dists) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& d : dists) {
    nlohmann::json e = {{"target", target_name(d.target)},
                        {"proportions", vector_json(d.proportions)},
                        {"n_miss_assumed", d.n_miss_assumed}};
    e["se"] = d.se.size() ? vector_json(d.se) : nlohmann::json(nullptr);
    a.push_back(std::move(e));
  }
  return a;
}

std::string distributions_csv(const std::vector<DistributionRow>& rows) {
  std::string out = "target,rate,category,proportion,se\n";
  for (const auto& r : rows) {
    out += csv_escape(r.target) + "," + format_double(r.rate) + "," + std::to_string(r.category) +
           "," + format_double(r.proportion) + "," + (r.se ? format_double(*r.se) : "") + "\n";
  }
  return out;
}

void append_distribution_rows(std::vector<DistributionRow>& rows,
                              const std::vector<DistributionEstimate>& dists, double rate) {
  for (const auto& d : dists) {
    for (Eigen::Index j = 0; j < d.proportions.size(); ++j) {
      DistributionRow row;
      row.target = target_name(d.target);
      row.rate = rate;
      row.category = static_cast<int>(j) + 1;
      row.proportion = d.proportions[j];
      if (d.se.size() > j && std::isfinite(d.se[j])) row.se = d.se[j];
      rows.push_back(std::move(row));
    }
  }
}

}  // namespace ovrp
