#include "ovrp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "toml.hpp"

#include "ovrp/error.hpp"

namespace ovrp {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::config, "config key '" + key + "': " + what);
}

void check_keys(const toml::table& t, const std::string& section, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : t) {
    if (!allowed.count(std::string(k.str()))) {
      fail(section.empty() ? std::string(k.str()) : section + "." + std::string(k.str()), "unknown key");
    }
  }
}

const toml::table* section(const toml::table& root, const std::string& name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) fail(name, "expected a table");
  return n->as_table();
}

std::optional<std::string> get_string(const toml::table& t, const std::string& sec, const std::string& key) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_string()) fail(sec + "." + key, "expected a string");
  return n->value<std::string>();
}

std::optional<double> get_real(const toml::table& t, const std::string& sec, const std::string& key) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_number()) fail(sec + "." + key, "expected a number");
  return n->value<double>();
}

std::optional<long> get_int(const toml::table& t, const std::string& sec, const std::string& key) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_integer()) fail(sec + "." + key, "expected an integer");
  return n->value<long>();
}

std::optional<bool> get_bool(const toml::table& t, const std::string& sec, const std::string& key) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_boolean()) fail(sec + "." + key, "expected true or false");
  return n->value<bool>();
}

std::vector<std::string> get_strings(const toml::table& t, const std::string& sec, const std::string& key) {
  std::vector<std::string> out;
  const toml::node* n = t.get(key);
  if (!n) return out;
  if (!n->is_array()) fail(sec + "." + key, "expected an array of strings");
  for (const auto& e : *n->as_array()) {
    if (!e.is_string()) fail(sec + "." + key, "expected an array of strings");
    out.push_back(*e.value<std::string>());
  }
  return out;
}

std::optional<std::vector<double>> get_reals(const toml::table& t, const std::string& sec,
                                             const std::string& key) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if (!n->is_array()) fail(sec + "." + key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : *n->as_array()) {
    if (!e.is_number()) fail(sec + "." + key, "expected an array of numbers");
    out.push_back(*e.value<double>());
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig parse_config(const std::string& toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw Error(ErrorCode::config, msg.str());
  }
  check_keys(root, "", {"data", "model", "nonresponse", "fit", "output", "simulate"});

  RunConfig cfg;
  if (const auto* t = section(root, "data")) {
    check_keys(*t, "data", {"respondents", "strata", "y", "r", "weight", "Y", "R"});
    if (auto v = get_string(*t, "data", "respondents")) cfg.respondents = resolve(base_dir, *v);
    if (auto v = get_string(*t, "data", "strata")) cfg.strata = resolve(base_dir, *v);
    if (auto v = get_string(*t, "data", "y")) cfg.mapping.y = *v;
    if (auto v = get_string(*t, "data", "r")) cfg.mapping.r = *v;
    cfg.mapping.weight = get_string(*t, "data", "weight");
    if (auto v = get_int(*t, "data", "Y")) cfg.mapping.Y = static_cast<int>(*v);
    if (auto v = get_int(*t, "data", "R")) cfg.mapping.R = static_cast<int>(*v);
  }
  if (const auto* t = section(root, "model")) {
    check_keys(*t, "model", {"outcome", "response", "intercept", "levels"});
    for (const auto& s : get_strings(*t, "model", "outcome")) cfg.mapping.outcome.push_back(parse_covariate(s));
    for (const auto& s : get_strings(*t, "model", "response")) cfg.mapping.response.push_back(parse_covariate(s));
    if (auto v = get_bool(*t, "model", "intercept")) cfg.mapping.intercept = *v;
    if (const toml::node* lv = t->get("levels")) {
      if (!lv->is_table()) fail("model.levels", "expected a table");
      for (const auto& [k, v] : *lv->as_table()) {
        const std::string col(k.str());
        cfg.mapping.levels[col] = get_strings(*lv->as_table(), "model.levels", col);
      }
    }
  }
  if (const auto* t = section(root, "nonresponse")) {
    check_keys(*t, "nonresponse", {"count", "rate", "grid"});
    int given = 0;
    if (auto v = get_real(*t, "nonresponse", "count")) {
      cfg.nonresponse = NonresponseCount{*v};
      ++given;
    }
    if (auto v = get_real(*t, "nonresponse", "rate")) {
      cfg.nonresponse = NonresponseRate{*v};
      ++given;
    }
    if (auto v = get_reals(*t, "nonresponse", "grid")) {
      cfg.nonresponse = NonresponseGrid{*v};
      ++given;
    }
    if (given > 1) fail("nonresponse", "give exactly one of count, rate, grid");
  }
  if (const auto* t = section(root, "fit")) {
    check_keys(*t, "fit", {"max_iterations", "gradient_tolerance", "step_tolerance", "n_restarts",
                           "fix_rho_at", "seed", "jitter"});
    if (auto v = get_int(*t, "fit", "max_iterations")) cfg.fit.max_iterations = static_cast<int>(*v);
    if (auto v = get_real(*t, "fit", "gradient_tolerance")) cfg.fit.gradient_tolerance = *v;
    if (auto v = get_real(*t, "fit", "step_tolerance")) cfg.fit.step_tolerance = *v;
    if (auto v = get_int(*t, "fit", "n_restarts")) cfg.fit.n_restarts = static_cast<int>(*v);
    cfg.fit.fix_rho_at = get_real(*t, "fit", "fix_rho_at");
    if (auto v = get_int(*t, "fit", "seed")) cfg.fit.seed = static_cast<std::uint64_t>(*v);
    if (auto v = get_real(*t, "fit", "jitter")) cfg.fit.jitter = *v;
  }
  if (const auto* t = section(root, "output")) {
    check_keys(*t, "output", {"path", "csv", "conditional", "reweighted"});
    if (auto v = get_string(*t, "output", "path")) cfg.output = resolve(base_dir, *v);
    if (auto v = get_string(*t, "output", "csv")) cfg.output_csv = resolve(base_dir, *v);
    if (auto v = get_bool(*t, "output", "conditional")) cfg.emit_conditional = *v;
    if (auto v = get_bool(*t, "output", "reweighted")) cfg.reweighted = *v;
  }
  if (const auto* t = section(root, "simulate")) {
    check_keys(*t, "simulate", {"strata", "n_population", "seed", "truth"});
    if (auto v = get_string(*t, "simulate", "strata")) cfg.simulate.strata = resolve(base_dir, *v);
    if (auto v = get_int(*t, "simulate", "n_population")) cfg.simulate.n_population = *v;
    if (auto v = get_int(*t, "simulate", "seed")) cfg.simulate.seed = static_cast<std::uint64_t>(*v);
    if (const toml::node* tr = t->get("truth")) {
      if (!tr->is_table()) fail("simulate.truth", "expected a table");
      const toml::table& tt = *tr->as_table();
      check_keys(tt, "simulate.truth", {"alpha", "beta", "gamma", "theta", "rho"});
      ParamSet p;
      const char* keys[] = {"alpha", "beta", "gamma", "theta"};
      Eigen::VectorXd* dest[] = {&p.alpha, &p.beta, &p.gamma, &p.theta};
      for (int i = 0; i < 4; ++i) {
        auto v = get_reals(tt, "simulate.truth", keys[i]);
        if (!v) fail(std::string("simulate.truth.") + keys[i], "required");
        *dest[i] = to_vector(*v);
      }
      auto rho = get_real(tt, "simulate.truth", "rho");
      if (!rho) fail("simulate.truth.rho", "required");
      p.rho = *rho;
      cfg.simulate.truth = std::move(p);
    }
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

}  // namespace ovrp
