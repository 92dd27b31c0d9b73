#include <fstream>
#include <set>
#include <string>

#include "abgreg/cli.hpp"
#include "abgreg/error.hpp"

namespace abgreg::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(where + "." + key + " is missing or has the wrong type");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return get<T>(obj, key, where);
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() ? p.lexically_normal() : (base / p).lexically_normal();
}

PriorConfig::Kind prior_kind_from_string(const std::string& s) {
  if (s == "flat") return PriorConfig::Kind::Flat;
  if (s == "laplace") return PriorConfig::Kind::Laplace;
  if (s == "horseshoe") return PriorConfig::Kind::Horseshoe;
  config_error("prior.kind must be flat, laplace or horseshoe, got '" + s + "'");
}

std::string to_string(PriorConfig::Kind k) {
  switch (k) {
    case PriorConfig::Kind::Flat: return "flat";
    case PriorConfig::Kind::Laplace: return "laplace";
    case PriorConfig::Kind::Horseshoe: return "horseshoe";
  }
  return "flat";
}

PairwisePolicy pairwise_from_string(const std::string& s) {
  if (s == "srs") return PairwisePolicy::ExactSrs;
  if (s == "independence") return PairwisePolicy::IndependenceProduct;
  config_error("dataset.pairwise must be 'srs' or 'independence', got '" + s + "'");
}

std::string to_string(PairwisePolicy p) { return p == PairwisePolicy::ExactSrs ? "srs" : "independence"; }

Command command_from_string(const std::string& s) {
  if (s == "simulate") return Command::Simulate;
  if (s == "estimate") return Command::Estimate;
  if (s == "posterior") return Command::Posterior;
  config_error("command must be simulate, estimate or posterior, got '" + s + "'");
}

void parse_scenario(const json& s, ScenarioConfig& sc) {
  const std::string w = "scenario";
  reject_unknown(s, {"kind", "N", "p_star", "p", "n", "rho", "design", "reps", "beta0", "noise_var",
                     "size_noise_rate", "signal_scale", "threads"},
                 w);
  sc.kind = scenario_kind_from_string(get_or<std::string>(s, "kind", to_string(sc.kind), w));
  sc.N = get_or<Index>(s, "N", sc.N, w);
  sc.p_star = get_or<Index>(s, "p_star", sc.p_star, w);
  sc.p = get_or<Index>(s, "p", std::min<Index>(sc.p, sc.p_star), w);
  sc.n = get_or<Index>(s, "n", sc.n, w);
  sc.rho = get_or<double>(s, "rho", sc.rho, w);
  sc.design = design_kind_from_string(get_or<std::string>(s, "design", to_string(sc.design), w));
  sc.reps = get_or<int>(s, "reps", sc.reps, w);
  if (s.contains("beta0")) sc.beta0 = get<double>(s, "beta0", w);
  sc.noise_var = get_or<double>(s, "noise_var", sc.noise_var, w);
  sc.signal_scale = get_or<double>(s, "signal_scale", sc.signal_scale, w);
  if (s.contains("size_noise_rate")) sc.size_noise_rate = get<double>(s, "size_noise_rate", w);
  sc.threads = get_or<int>(s, "threads", sc.threads, w);
}

DatasetSpec parse_dataset(const json& d, const fs::path& base) {
  const std::string w = "dataset";
  reject_unknown(d, {"path", "response", "weight", "auxiliaries", "domain", "totals", "population_size",
                     "pairwise", "model"},
                 w);
  DatasetSpec ds;
  ds.path = resolve(get<std::string>(d, "path", w), base);
  ds.response = get<std::string>(d, "response", w);
  ds.weight = get<std::string>(d, "weight", w);
  ds.auxiliaries = get_or<std::vector<std::string>>(d, "auxiliaries", {}, w);
  if (d.contains("domain") && !d.at("domain").is_null()) ds.domain = get<std::string>(d, "domain", w);
  if (!d.contains("totals")) config_error("dataset.totals is required");
  const json& t = d.at("totals");
  reject_unknown(t, {"kind", "path"}, "dataset.totals");
  const std::string kind = get<std::string>(t, "kind", "dataset.totals");
  if (kind == "means") {
    ds.totals.kind = TotalsSource::Kind::Means;
  } else if (kind == "population") {
    ds.totals.kind = TotalsSource::Kind::Population;
  } else {
    config_error("dataset.totals.kind must be 'means' or 'population', got '" + kind + "'");
  }
  ds.totals.path = resolve(get<std::string>(t, "path", "dataset.totals"), base);
  if (d.contains("population_size") && !d.at("population_size").is_null()) {
    ds.population_size = get<double>(d, "population_size", w);
  }
  ds.pairwise = pairwise_from_string(get_or<std::string>(d, "pairwise", "independence", w));
  ds.model = scenario_kind_from_string(get_or<std::string>(d, "model", "linear", w));
  return ds;
}

void validate(const RunConfig& cfg) {
  cfg.mcmc.validate();
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) config_error("level must lie in (0, 1)");
  if (cfg.cv_folds < 2) config_error("cv_folds must be at least 2");
  if (cfg.prior.a && !(*cfg.prior.a > 0.0)) config_error("prior.a must be positive");
  if (cfg.prior.b && !(*cfg.prior.b > 0.0)) config_error("prior.b must be positive");
  if (cfg.command == Command::Simulate) {
    cfg.scenario.validate();
    return;
  }
  if (!cfg.dataset) config_error("command '" + to_string(cfg.command) + "' needs a dataset block");
  const DatasetSpec& ds = *cfg.dataset;
  if (!fs::exists(ds.path)) config_error("dataset file does not exist: " + ds.path.string());
  if (!fs::exists(ds.totals.path)) config_error("totals file does not exist: " + ds.totals.path.string());
  if (ds.model == ScenarioKind::Logistic && ds.totals.kind != TotalsSource::Kind::Population) {
    config_error("the logistic working model needs totals.kind = population");
  }
  if (ds.domain && ds.totals.kind != TotalsSource::Kind::Population) {
    config_error("domain estimation needs totals.kind = population");
  }
  if (ds.domain && ds.model != ScenarioKind::Linear) {
    config_error("domain estimation supports the linear working model only");
  }
  if (ds.population_size && !(*ds.population_size > 0.0)) config_error("dataset.population_size must be positive");
  if (cfg.command == Command::Estimate) {
    for (Method m : cfg.methods) {
      if (is_bayesian(m)) config_error("estimate runs frequentist methods only; use posterior for " + abgreg::to_string(m));
      if (m == Method::GregSelect && ds.model != ScenarioKind::Linear) {
        config_error("GREG-V is defined for the linear working model only");
      }
    }
  }
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Estimate: return "estimate";
    case Command::Posterior: return "posterior";
  }
  return "simulate";
}

RunConfig parse_config(const json& input, const fs::path& base_dir) {
  const json& doc = (input.is_object() && input.contains("config") && input.contains("results"))
                        ? input.at("config")
                        : input;
  reject_unknown(doc, {"command", "seed", "scenario", "methods", "prior", "mcmc", "dataset", "level", "cv_folds",
                       "output"},
                 "config");
  RunConfig cfg;
  cfg.command = command_from_string(get<std::string>(doc, "command", "config"));
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed, "config");
  cfg.level = get_or<double>(doc, "level", cfg.level, "config");
  cfg.cv_folds = get_or<int>(doc, "cv_folds", cfg.cv_folds, "config");

  if (doc.contains("scenario")) parse_scenario(doc.at("scenario"), cfg.scenario);
  if (doc.contains("dataset")) cfg.dataset = parse_dataset(doc.at("dataset"), base_dir);

  if (doc.contains("methods")) {
    for (const auto& tag : get<std::vector<std::string>>(doc, "methods", "config")) {
      cfg.methods.push_back(method_from_string(tag));
    }
    if (cfg.methods.empty()) config_error("methods must be nonempty");
  } else if (cfg.command == Command::Simulate) {
    for (Method m : cfg.scenario.methods) {
      if (!(cfg.scenario.kind == ScenarioKind::Logistic && m == Method::GregSelect)) cfg.methods.push_back(m);
    }
  } else {
    cfg.methods = {Method::Greg};
  }

  if (doc.contains("prior")) {
    const json& p = doc.at("prior");
    reject_unknown(p, {"kind", "a", "b"}, "prior");
    cfg.prior.kind = prior_kind_from_string(get_or<std::string>(p, "kind", "flat", "prior"));
    if (p.contains("a") && !p.at("a").is_null()) cfg.prior.a = get<double>(p, "a", "prior");
    if (p.contains("b") && !p.at("b").is_null()) cfg.prior.b = get<double>(p, "b", "prior");
  }

  if (doc.contains("mcmc")) {
    const json& m = doc.at("mcmc");
    reject_unknown(m, {"n_draws", "burn_in", "thin"}, "mcmc");
    cfg.mcmc.n_draws = get_or<int>(m, "n_draws", cfg.mcmc.n_draws, "mcmc");
    cfg.mcmc.burn_in = get_or<int>(m, "burn_in", cfg.mcmc.burn_in, "mcmc");
    cfg.mcmc.thin = get_or<int>(m, "thin", cfg.mcmc.thin, "mcmc");
  }

  if (doc.contains("output")) {
    const json& o = doc.at("output");
    reject_unknown(o, {"dir"}, "output");
    cfg.output_dir = resolve(get<std::string>(o, "dir", "output"), base_dir);
  } else {
    cfg.output_dir = resolve(cfg.output_dir, base_dir);
  }

  cfg.scenario.methods = cfg.methods;
  cfg.scenario.seed = cfg.seed;
  cfg.scenario.mcmc = cfg.mcmc;
  cfg.scenario.cv_folds = cfg.cv_folds;
  cfg.scenario.level = cfg.level;
  validate(cfg);
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    config_error("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  fs::path base = fs::absolute(path).parent_path();
  return parse_config(doc, base);
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.paper_scale) {
    cfg.scenario.reps = 1000;
    cfg.mcmc.n_draws = 5000;
    cfg.mcmc.burn_in = 500;
  }
  if (o.reps) cfg.scenario.reps = *o.reps;
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = fs::absolute(*o.out).lexically_normal();
  cfg.scenario.seed = cfg.seed;
  cfg.scenario.mcmc = cfg.mcmc;
  validate(cfg);
}

json to_json(const RunConfig& cfg) {
  json j;
  j["command"] = to_string(cfg.command);
  j["seed"] = cfg.seed;
  j["level"] = cfg.level;
  j["cv_folds"] = cfg.cv_folds;
  json methods = json::array();
  for (Method m : cfg.methods) methods.push_back(abgreg::to_string(m));
  j["methods"] = methods;
  j["mcmc"] = {{"n_draws", cfg.mcmc.n_draws}, {"burn_in", cfg.mcmc.burn_in}, {"thin", cfg.mcmc.thin}};
  json prior = {{"kind", to_string(cfg.prior.kind)}};
  if (cfg.prior.a) prior["a"] = *cfg.prior.a;
  if (cfg.prior.b) prior["b"] = *cfg.prior.b;
  j["prior"] = prior;
  j["output"] = {{"dir", cfg.output_dir.string()}};
  if (cfg.command == Command::Simulate) {
    const ScenarioConfig& s = cfg.scenario;
    j["scenario"] = {{"kind", to_string(s.kind)},
                     {"N", s.N},
                     {"p_star", s.p_star},
                     {"p", s.p},
                     {"n", s.n},
                     {"rho", s.rho},
                     {"design", to_string(s.design)},
                     {"reps", s.reps},
                     {"beta0", s.effective_beta0()},
                     {"noise_var", s.noise_var},
                     {"signal_scale", s.signal_scale},
                     {"size_noise_rate", s.effective_size_noise_rate()},
                     {"threads", s.threads}};
  }
  if (cfg.dataset) {
    const DatasetSpec& d = *cfg.dataset;
    json dj = {{"path", d.path.string()},
               {"response", d.response},
               {"weight", d.weight},
               {"auxiliaries", d.auxiliaries},
               {"totals",
                {{"kind", d.totals.kind == TotalsSource::Kind::Means ? "means" : "population"},
                 {"path", d.totals.path.string()}}},
               {"pairwise", to_string(d.pairwise)},
               {"model", abgreg::to_string(d.model)}};
    if (d.domain) dj["domain"] = *d.domain;
    if (d.population_size) dj["population_size"] = *d.population_size;
    j["dataset"] = dj;
  }
  return j;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numerical: return 4;
  }
  return 1;
}

}  // namespace abgreg::cli
