#include "ovrp/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "ovrp/bvn.hpp"
#include "ovrp/config.hpp"
#include "ovrp/error.hpp"
#include "ovrp/io.hpp"
#include "ovrp/likelihood.hpp"
#include "ovrp/population.hpp"
#include "ovrp/simulate.hpp"

namespace ovrp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> respondents, strata, output, csv;
  std::optional<double> count, rate, fix_rho, gtol;
  std::vector<double> rates;
  std::optional<std::uint64_t> seed;
  std::optional<int> restarts, max_iterations;
  std::optional<long> n_population;
  bool reweighted = false;
  bool no_conditional = false;
};

void add_data_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "TOML run manifest");
  cmd->add_option("--respondents", o.respondents, "respondent CSV");
  cmd->add_option("--strata", o.strata, "strata CSV");
}

void add_fit_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-o,--output", o.output, "result JSON path (default: stdout)");
  cmd->add_option("--csv", o.csv, "long-format distribution CSV path");
  cmd->add_option("--seed", o.seed, "restart jitter seed");
  cmd->add_option("--restarts", o.restarts, "number of optimizer restarts");
  cmd->add_option("--max-iterations", o.max_iterations, "iterations per restart");
  cmd->add_option("--gradient-tolerance", o.gtol, "per-respondent gradient tolerance");
  cmd->add_option("--fix-rho", o.fix_rho, "hold rho fixed at this value");
  cmd->add_flag("--reweighted", o.reweighted,
                "aggregate conditional distributions over the target subpopulation's strata mix");
  cmd->add_flag("--no-conditional", o.no_conditional, "skip model-based distributions");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.respondents) cfg.respondents = *o.respondents;
  if (o.strata) cfg.strata = *o.strata;
  if (o.output) cfg.output = *o.output;
  if (o.csv) cfg.output_csv = *o.csv;
  const int sources = (o.count ? 1 : 0) + (o.rate ? 1 : 0) + (o.rates.empty() ? 0 : 1);
  if (sources > 1) throw Error(ErrorCode::config, "give exactly one of --count, --rate, --rates");
  if (o.count) cfg.nonresponse = NonresponseCount{*o.count};
  if (o.rate) cfg.nonresponse = NonresponseRate{*o.rate};
  if (!o.rates.empty()) cfg.nonresponse = NonresponseGrid{o.rates};
  if (o.seed) {
    cfg.fit.seed = *o.seed;
    cfg.simulate.seed = *o.seed;
  }
  if (o.restarts) cfg.fit.n_restarts = *o.restarts;
  if (o.max_iterations) cfg.fit.max_iterations = *o.max_iterations;
  if (o.gtol) cfg.fit.gradient_tolerance = *o.gtol;
  if (o.fix_rho) cfg.fit.fix_rho_at = *o.fix_rho;
  if (o.n_population) cfg.simulate.n_population = *o.n_population;
  if (o.reweighted) cfg.reweighted = true;
  if (o.no_conditional) cfg.emit_conditional = false;
  return cfg;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json document(const std::string& command) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["timestamp"] = timestamp();
  return j;
}

void emit(const json& j, const fs::path& path, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    out << text;
  } else {
    write_file_atomic(path, text);
  }
}

void print_error(std::ostream& err, const std::string& code, const std::string& message) {
  err << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
}

void print_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) err << json{{"warning", {{"message", w}}}}.dump() << "\n";
}

struct LoadedData {
  RespondentData respondents;
  StrataData strata;
  std::vector<std::string> warnings;
};

LoadedData load_data(const RunConfig& cfg) {
  if (cfg.respondents.empty()) throw Error(ErrorCode::config, "no respondent file given");
  if (cfg.strata.empty()) throw Error(ErrorCode::config, "no strata file given");
  LoadedData d;
  d.respondents = load_respondents(cfg.respondents, cfg.mapping);
  d.strata = load_strata(cfg.strata, cfg.mapping, d.respondents.codebook);
  d.warnings = d.respondents.warnings;
  d.warnings.insert(d.warnings.end(), d.strata.warnings.begin(), d.strata.warnings.end());
  return d;
}

// Validation failures are data errors: report them all and stop.
void require_valid(const LoadedData& d) {
  const ValidationReport report =
      validate_dataset(d.respondents.records, d.strata.strata, d.respondents.spec);
  if (report.ok()) return;
  std::string msg;
  for (const auto& e : report.errors) msg += (msg.empty() ? "" : "; ") + e.message;
  throw Error(ErrorCode::schema_mismatch, msg);
}

json model_json(const ModelSpec& spec, const DesignNames& names) {
  return {{"Y", spec.Y}, {"R", spec.R}, {"dx", spec.dx}, {"dz", spec.dz},
          {"x", names.x}, {"z", names.z}};
}

std::vector<DistributionEstimate> baselines(const LoadedData& d) {
  std::vector<DistributionEstimate> out;
  for (Target t : {Target::raw, Target::weighted}) {
    DistributionEstimate e;
    e.target = t;
    e.proportions = baseline_proportions(d.respondents.records, d.respondents.spec.Y, t);
    out.push_back(std::move(e));
  }
  return out;
}

int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.fit.validate();
  LoadedData d = load_data(cfg);
  require_valid(d);
  const double n_resp = static_cast<double>(d.respondents.records.size());
  double n_miss = 0.0;
  if (const auto* c = std::get_if<NonresponseCount>(&cfg.nonresponse)) {
    if (!(c->count >= 0.0)) throw Error(ErrorCode::config, "nonresponse count must be nonnegative");
    n_miss = c->count;
  } else if (const auto* r = std::get_if<NonresponseRate>(&cfg.nonresponse)) {
    n_miss = n_miss_from_rate(n_resp, r->rate);
  } else {
    throw Error(ErrorCode::config, "fit needs a nonresponse count or rate");
  }
  const CellTable cells = CellTable::build(d.respondents.records, d.respondents.spec);
  const NonresponseDesign nr{n_miss};
  const FitResult result = fit(cells, d.strata.strata, nr, cfg.fit);
  const double rate = n_miss / (n_miss + n_resp);

  std::vector<std::string> warnings = d.warnings;
  warnings.insert(warnings.end(), result.warnings.begin(), result.warnings.end());
  std::vector<DistributionEstimate> dists;
  if (cfg.emit_conditional) {
    dists = model_distributions(result, d.strata.strata, n_miss,
                                cfg.reweighted ? Aggregation::reweighted : Aggregation::printed,
                                &warnings);
  }
  for (auto& b : baselines(d)) dists.push_back(std::move(b));

  json j = document("fit");
  j["model"] = model_json(d.respondents.spec, d.respondents.names);
  j["data"] = {{"n_respondents", d.respondents.records.size()},
               {"n_strata", d.strata.strata.size()},
               {"n_miss", n_miss},
               {"rate", rate}};
  j.update(fit_json(result, d.respondents.names));
  j["distributions"] = distributions_json(dists);
  j["warnings"] = warnings;
  emit(j, cfg.output, out);
  if (!cfg.output_csv.empty()) {
    std::vector<DistributionRow> rows;
    append_distribution_rows(rows, dists, rate);
    write_file_atomic(cfg.output_csv, distributions_csv(rows));
  }
  print_warnings(err, warnings);
  if (!result.any_converged) {
    print_error(err, "not-converged", "no optimizer restart converged");
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_sensitivity(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.fit.validate();
  std::vector<double> rates;
  if (const auto* g = std::get_if<NonresponseGrid>(&cfg.nonresponse)) {
    rates = g->rates;
  } else if (const auto* r = std::get_if<NonresponseRate>(&cfg.nonresponse)) {
    rates = {r->rate};
  } else {
    throw Error(ErrorCode::config, "sensitivity needs a grid of nonresponse rates");
  }
  if (rates.empty()) throw Error(ErrorCode::config, "empty nonresponse rate grid");
  LoadedData d = load_data(cfg);
  require_valid(d);
  const CellTable cells = CellTable::build(d.respondents.records, d.respondents.spec);
  const auto results =
      sensitivity_grid(cells, d.strata.strata, rates, cfg.fit,
                       cfg.reweighted ? Aggregation::reweighted : Aggregation::printed);
  const auto base = baselines(d);

  json j = document("sensitivity");
  j["model"] = model_json(d.respondents.spec, d.respondents.names);
  j["data"] = {{"n_respondents", d.respondents.records.size()},
               {"n_strata", d.strata.strata.size()}};
  j["baselines"] = distributions_json(base);
  json arr = json::array();
  std::vector<DistributionRow> rows;
  bool all_converged = true;
  for (const auto& res : results) {
    json e = {{"rate", res.rate}, {"n_miss", res.n_miss}};
    if (res.fit.free.size() > 0) {
      e.update(fit_json(res.fit, d.respondents.names));
      all_converged = all_converged && res.fit.any_converged;
    } else {
      all_converged = false;
    }
    std::vector<std::string> warnings = res.fit.warnings;
    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
    std::vector<DistributionEstimate> dists = cfg.emit_conditional ? res.distributions
                                                                   : std::vector<DistributionEstimate>{};
    e["distributions"] = distributions_json(dists);
    e["warnings"] = warnings;
    arr.push_back(std::move(e));
    for (const auto& b : base) dists.push_back(b);
    append_distribution_rows(rows, dists, res.rate);
  }
  j["results"] = std::move(arr);
  j["warnings"] = d.warnings;
  emit(j, cfg.output, out);
  if (!cfg.output_csv.empty()) write_file_atomic(cfg.output_csv, distributions_csv(rows));
  print_warnings(err, d.warnings);
  if (!all_converged) {
    print_error(err, "not-converged", "at least one rate had no converged optimizer restart");
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  LoadedData d = load_data(cfg);
  const ValidationReport report =
      validate_dataset(d.respondents.records, d.strata.strata, d.respondents.spec);
  json j = document("check");
  j["model"] = model_json(d.respondents.spec, d.respondents.names);
  auto issues = [](const std::vector<ValidationIssue>& list) {
    json a = json::array();
    for (const auto& i : list) a.push_back({{"code", i.code}, {"message", i.message}});
    return a;
  };
  j["ok"] = report.ok();
  j["errors"] = issues(report.errors);
  std::vector<ValidationIssue> warnings = report.warnings;
  for (const auto& w : d.warnings) warnings.push_back({"load", w});
  j["warnings"] = issues(warnings);
  j["outcome_counts"] = report.outcome_counts;
  j["response_counts"] = report.response_counts;
  j["share_sum"] = report.share_sum;
  j["zero_weight_records"] = report.zero_weight_records;
  j["n_respondents"] = d.respondents.records.size();
  j["n_strata"] = d.strata.strata.size();
  emit(j, cfg.output, out);
  for (const auto& e : report.errors) print_error(err, e.code, e.message);
  return report.ok() ? kExitOk : kExitDataError;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const SimulateSettings& sim = cfg.simulate;
  if (!sim.truth) throw Error(ErrorCode::config, "simulate needs [simulate.truth]");
  if (sim.strata.empty()) throw Error(ErrorCode::config, "simulate needs a strata file");
  if (sim.n_population < 1) throw Error(ErrorCode::config, "simulate.n_population must be positive");
  if (cfg.output.empty()) throw Error(ErrorCode::config, "simulate needs an output path");

  const CsvTable table = read_csv(sim.strata);
  const Codebook codebook = build_codebook(table, cfg.mapping);
  const StrataData strata = load_strata(sim.strata, cfg.mapping, codebook);

  SimConfig sc;
  sc.truth = *sim.truth;
  sc.truth.validate();
  sc.spec = sc.truth.spec();
  if ((cfg.mapping.Y > 0 && cfg.mapping.Y != sc.spec.Y) || (cfg.mapping.R > 0 && cfg.mapping.R != sc.spec.R)) {
    throw Error(ErrorCode::config, "declared Y/R do not match the truth thresholds");
  }
  const DesignNames names = design_names(cfg.mapping, codebook);
  if (static_cast<int>(names.x.size()) != sc.spec.dx || static_cast<int>(names.z.size()) != sc.spec.dz) {
    throw Error(ErrorCode::schema_mismatch,
                "truth has " + std::to_string(sc.spec.dx) + " outcome and " + std::to_string(sc.spec.dz) +
                    " response coefficients but the design has " + std::to_string(names.x.size()) +
                    " and " + std::to_string(names.z.size()));
  }
  sc.strata = strata.strata;
  sc.n_population = sim.n_population;
  sc.seed = sim.seed;
  const SimOutput so = draw_population(sc);

  // Raw covariate columns, copied from each respondent's stratum row.
  std::vector<std::string> columns;
  for (const auto* list : {&cfg.mapping.outcome, &cfg.mapping.response}) {
    for (const auto& c : *list) {
      if (std::find(columns.begin(), columns.end(), c.column) == columns.end()) columns.push_back(c.column);
    }
  }
  const std::string y_col = cfg.mapping.y, r_col = cfg.mapping.r;
  const std::string w_col = cfg.mapping.weight.value_or("weight");
  std::string csv = "stratum," + csv_escape(y_col) + "," + csv_escape(r_col) + "," + csv_escape(w_col);
  for (const auto& c : columns) csv += "," + csv_escape(c);
  csv += "\n";
  for (std::size_t i = 0; i < so.respondents.size(); ++i) {
    const std::size_t k = so.respondent_stratum[i];
    const RespondentRecord& rec = so.respondents[i];
    csv += csv_escape(strata.strata[k].id) + "," + std::to_string(rec.y) + "," + std::to_string(rec.r) +
           "," + format_double(rec.weight);
    for (const auto& c : columns) csv += "," + csv_escape(table.rows[k][table.column(c)]);
    csv += "\n";
  }
  write_file_atomic(cfg.output, csv);

  json j = document("simulate");
  j["n_population"] = sim.n_population;
  j["n_respondents"] = so.respondents.size();
  j["n_miss"] = so.n_miss;
  j["rate"] = static_cast<double>(so.n_miss) / static_cast<double>(sim.n_population);
  j["seed"] = sim.seed;
  j["warnings"] = strata.warnings;
  out << j.dump(2) << "\n";
  return kExitOk;
}

// Plackett's identity integrated in t = asin(r), which removes the
// endpoint singularity: Phi2(a,b;rho) = Phi(a)Phi(b) + int_0^asin(rho)
// exp(-(a^2 - 2ab sin t + b^2) / (2 cos^2 t)) / (2 pi) dt.
double plackett_reference(double a, double b, double rho) {
  const double upper = std::asin(rho);
  const int n = 4000;
  const double h = upper / n;
  auto f = [&](double t) {
    const double c = std::cos(t);
    if (c <= 0.0) return 0.0;
    return std::exp(-(a * a - 2.0 * a * b * std::sin(t) + b * b) / (2.0 * c * c));
  };
  double s = f(0.0) + f(upper);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4.0 : 2.0);
  return std_normal_cdf(a) * std_normal_cdf(b) + s * h / 3.0 / (2.0 * M_PI);
}

int cmd_bvn_selftest(const fs::path& output, std::ostream& out, std::ostream& err) {
  constexpr double kTolerance = 1e-9;
  json closed = json::array();
  double max_closed = 0.0;
  for (double rho : {-0.99, -0.95, -0.5, 0.0, 0.49, 0.5, 0.95, 0.99}) {
    const double exact = 0.25 + std::asin(rho) / (2.0 * M_PI);
    const double got = bvn_cdf(0.0, 0.0, rho);
    max_closed = std::max(max_closed, std::abs(got - exact));
    closed.push_back({{"rho", rho}, {"value", got}, {"exact", exact}, {"error", got - exact}});
  }
  double max_degenerate = 0.0;
  for (double a : {-2.0, -0.3, 0.0, 1.1}) {
    for (double b : {-1.0, 0.4, 2.5}) {
      const double pos = std_normal_cdf(std::min(a, b));
      const double neg = std::max(0.0, std_normal_cdf(a) - std_normal_cdf(-b));
      max_degenerate = std::max(max_degenerate, std::abs(bvn_cdf(a, b, 1.0) - pos));
      max_degenerate = std::max(max_degenerate, std::abs(bvn_cdf(a, b, -1.0) - neg));
    }
  }
  double max_reference = 0.0;
  json worst;
  const double points[] = {-3.5, -2.0, -0.7, 0.0, 0.4, 1.3, 2.8};
  const double rhos[] = {-0.97, -0.9, -0.6, -0.2, 0.1, 0.35, 0.74, 0.8, 0.93, 0.99};
  for (double a : points) {
    for (double b : points) {
      for (double rho : rhos) {
        const double ref = plackett_reference(a, b, rho);
        const double got = bvn_cdf(a, b, rho);
        if (std::abs(got - ref) >= max_reference) {
          max_reference = std::abs(got - ref);
          worst = {{"a", a}, {"b", b}, {"rho", rho}, {"value", got}, {"reference", ref}};
        }
      }
    }
  }
  const bool pass = max_closed <= kTolerance && max_degenerate <= kTolerance && max_reference <= kTolerance;
  json j = document("bvn-selftest");
  j["tolerance"] = kTolerance;
  j["closed_form"] = {{"cases", closed}, {"max_error", max_closed}};
  j["degenerate"] = {{"max_error", max_degenerate}};
  j["plackett_reference"] = {{"cases", std::size(points) * std::size(points) * std::size(rhos)},
                             {"max_error", max_reference},
                             {"worst", worst}};
  j["pass"] = pass;
  emit(j, output, out);
  if (!pass) {
    print_error(err, error_code_name(ErrorCode::numeric_failure), "bvn kernel outside tolerance");
    return kExitDataError;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonignorable nonresponse adjustment with an ordered response-propensity proxy", "ovrp"};
  app.require_subcommand(1);
  Overrides o;

  auto* fit_cmd = app.add_subcommand("fit", "single estimation, JSON result");
  add_data_options(fit_cmd, o);
  add_fit_options(fit_cmd, o);
  fit_cmd->add_option("--count", o.count, "known number of unit nonrespondents");
  fit_cmd->add_option("--rate", o.rate, "assumed nonresponse rate in [0, 1)");

  auto* sens_cmd = app.add_subcommand("sensitivity", "refit over a grid of nonresponse rates");
  add_data_options(sens_cmd, o);
  add_fit_options(sens_cmd, o);
  sens_cmd->add_option("--rates", o.rates, "comma-separated nonresponse rates")->delimiter(',');

  auto* sim_cmd = app.add_subcommand("simulate", "draw a synthetic respondent CSV");
  sim_cmd->add_option("-c,--config", o.config, "TOML run manifest")->required();
  sim_cmd->add_option("-o,--output", o.output, "output CSV path");
  sim_cmd->add_option("--seed", o.seed, "simulation seed");
  sim_cmd->add_option("--n-population", o.n_population, "population size");

  auto* check_cmd = app.add_subcommand("check", "validation report only");
  add_data_options(check_cmd, o);
  check_cmd->add_option("-o,--output", o.output, "report JSON path (default: stdout)");

  auto* self_cmd = app.add_subcommand("bvn-selftest", "bivariate normal kernel accuracy report");
  self_cmd->add_option("-o,--output", o.output, "report JSON path (default: stdout)");

  std::vector<const char*> argv;
  argv.push_back("ovrp");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, error_code_name(ErrorCode::invalid_argument), e.what());
    return kExitDataError;
  }

  try {
    if (self_cmd->parsed()) return cmd_bvn_selftest(o.output.value_or(""), out, err);
    const RunConfig cfg = resolve_config(o);
    if (fit_cmd->parsed()) return cmd_fit(cfg, out, err);
    if (sens_cmd->parsed()) return cmd_sensitivity(cfg, out, err);
    if (sim_cmd->parsed()) return cmd_simulate(cfg, out);
    return cmd_check(cfg, out, err);
  } catch (const Error& e) {
    print_error(err, error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    print_error(err, error_code_name(ErrorCode::internal_error), e.what());
  }
  return kExitDataError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ovrp
