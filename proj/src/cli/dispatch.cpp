#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "abgreg/cli.hpp"
#include "abgreg/error.hpp"
#include "abgreg/glm.hpp"
#include "abgreg/regfit.hpp"

namespace abgreg::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPosteriorStream = 0xB0;
constexpr std::uint64_t kDomainStream = 0xD0;

std::string sig4(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write " + path.string());
  out << text;
  if (!out) data_error("failed writing " + path.string());
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Sample plus the auxiliary information it is estimated against.
struct LoadedData {
  std::optional<Sample> sample;
  AuxTotals aux;
  std::map<int, DomainAux> domains;  // by label, auxiliaries without indicators
};

LoadedData load_data(const DatasetSpec& spec) {
  ColumnMap cm{spec.response, spec.weight, spec.auxiliaries, spec.domain};
  const Dataset ds = ingest_csv(spec.path, cm);
  const Index n = ds.rows;
  const auto p = static_cast<Index>(spec.auxiliaries.size());
  MatrixXd x(n, p);
  for (Index k = 0; k < p; ++k) {
    for (Index i = 0; i < n; ++i) x(i, k) = ds.aux[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
  }
  VectorXd y = Eigen::Map<const VectorXd>(ds.y.data(), n);
  VectorXd pi = Eigen::Map<const VectorXd>(ds.weight.data(), n).cwiseInverse();

  LoadedData out;
  double pop_size = spec.population_size.value_or(0.0);
  if (spec.totals.kind == TotalsSource::Kind::Means) {
    const Table t = read_numeric_columns(spec.totals.path, spec.auxiliaries);
    if (t.values.rows() != 1) data_error(spec.totals.path.string() + ": a means file must hold exactly one row");
    out.aux.xbar = t.values.row(0).transpose();
    if (!spec.population_size) pop_size = ds.weight.empty() ? 0.0 : pi.cwiseInverse().sum();
  } else {
    const Table t = read_numeric_columns(spec.totals.path, spec.auxiliaries, spec.domain);
    out.aux.xbar = t.values.colwise().mean().transpose();
    if (p == 0) out.aux.xbar = VectorXd::Zero(0);
    out.aux.pop_x = t.values;
    if (!spec.population_size) pop_size = static_cast<double>(t.values.rows());
    if (spec.domain) {
      std::map<int, std::vector<Index>> rows;
      for (std::size_t r = 0; r < t.labels.size(); ++r) rows[t.labels[r]].push_back(static_cast<Index>(r));
      for (const auto& [label, idx] : rows) {
        DomainAux da;
        da.pop_size = static_cast<double>(idx.size());
        da.xbar = VectorXd::Zero(p);
        for (Index r : idx) da.xbar += t.values.row(r).transpose();
        da.xbar /= da.pop_size;
        out.domains[label] = da;
      }
    }
  }
  std::vector<Index> indices(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
  out.sample.emplace(std::move(indices), std::move(y), std::move(x), std::move(pi), spec.pairwise, pop_size,
                     ds.domain);
  return out;
}

EstimationContext make_context(const RunConfig& cfg, const LoadedData& data) {
  EstimationContext ctx;
  ctx.sample = &*data.sample;
  ctx.aux = &data.aux;
  ctx.kind = cfg.dataset->model;
  ctx.mcmc = cfg.mcmc;
  ctx.mcmc.seed = derive_seed(cfg.seed, kPosteriorStream);
  ctx.cv_folds = cfg.cv_folds;
  ctx.level = cfg.level;
  ctx.seed = cfg.seed;
  return ctx;
}

json run_simulate(const RunConfig& cfg) {
  const MetricsTable table = run_study(cfg.scenario);
  std::string csv = "method,rmse,bias,cp,al\n";
  json methods = json::array();
  for (const auto& m : table.methods) {
    const std::string tag = to_string(m.method);
    csv += tag + "," + sig4(m.rmse) + "," + sig4(m.bias) + "," + sig4(m.cp) + "," + sig4(m.al) + "\n";
    json mj = {{"method", tag},           {"rmse", number_or_null(m.rmse)}, {"bias", number_or_null(m.bias)},
               {"cp", number_or_null(m.cp)}, {"al", number_or_null(m.al)},   {"completed", m.completed},
               {"failures", m.failures},  {"estimates", m.estimates},       {"lower", m.lower},
               {"upper", m.upper}};
    if (m.failures > 0) mj["first_failure"] = m.first_failure;
    methods.push_back(mj);
  }
  write_text(cfg.output_dir / "metrics.csv", csv);
  return {{"true_mean", table.true_mean}, {"reps", table.reps}, {"methods", methods}};
}

json run_estimate(const RunConfig& cfg) {
  const LoadedData data = load_data(*cfg.dataset);
  EstimationContext ctx = make_context(cfg, data);
  std::string csv = "method,point,lower,upper\n";
  json results = json::array();
  for (Method m : cfg.methods) {
    const MethodResult r = estimate_method(m, ctx);
    if (m == Method::GregLasso) ctx.lasso_lambda = r.lambda;
    csv += to_string(m) + "," + sig4(r.point) + "," + sig4(r.lower) + "," + sig4(r.upper) + "\n";
    json rj = {{"method", to_string(m)}, {"point", r.point}, {"lower", r.lower}, {"upper", r.upper},
               {"level", cfg.level}};
    if (r.lambda) rj["lambda"] = *r.lambda;
    results.push_back(rj);
  }
  write_text(cfg.output_dir / "estimates.csv", csv);
  return {{"estimates", results}, {"n", data.sample->size()}, {"population_size", data.sample->pop_size()}};
}

json summary_json(const PosteriorSummary& s) {
  return {{"point", s.point}, {"lower", s.lower}, {"upper", s.upper}, {"level", s.level}, {"n_draws", s.n_draws}};
}

// Domain-indicator augmented sample: one column per label except the smallest.
struct DomainDesign {
  std::optional<Sample> sample;
  AuxTotals aux;
  std::vector<int> labels;
  std::map<int, DomainAux> domains;
};

DomainDesign domain_design(const LoadedData& data) {
  const Sample& s = *data.sample;
  std::set<int> label_set(s.domain().begin(), s.domain().end());
  for (const auto& [label, da] : data.domains) label_set.insert(label);
  DomainDesign dd;
  dd.labels.assign(label_set.begin(), label_set.end());
  const Index p = s.num_aux();
  const auto extra = static_cast<Index>(dd.labels.size()) - 1;
  MatrixXd x(s.size(), p + extra);
  x.leftCols(p) = s.x();
  for (Index k = 0; k < extra; ++k) {
    const int label = dd.labels[static_cast<std::size_t>(k + 1)];
    for (Index i = 0; i < s.size(); ++i) x(i, p + k) = s.domain()[static_cast<std::size_t>(i)] == label ? 1.0 : 0.0;
  }
  dd.sample.emplace(s.indices(), s.y(), x, s.pi(), s.pairwise(), s.pop_size(), s.domain());

  double total = 0.0;
  for (const auto& [label, da] : data.domains) total += da.pop_size;
  dd.aux.xbar = VectorXd::Zero(p + extra);
  dd.aux.xbar.head(p) = data.aux.xbar;
  for (Index k = 0; k < extra; ++k) {
    const auto it = data.domains.find(dd.labels[static_cast<std::size_t>(k + 1)]);
    dd.aux.xbar[p + k] = it == data.domains.end() ? 0.0 : it->second.pop_size / total;
  }
  for (int label : dd.labels) {
    const auto it = data.domains.find(label);
    if (it == data.domains.end()) data_error("domain " + std::to_string(label) + " is absent from the population file");
    DomainAux da;
    da.pop_size = it->second.pop_size;
    da.xbar = VectorXd::Zero(p + extra);
    da.xbar.head(p) = it->second.xbar;
    const auto pos = std::find(dd.labels.begin(), dd.labels.end(), label) - dd.labels.begin();
    if (pos > 0) da.xbar[p + pos - 1] = 1.0;
    dd.domains[label] = da;
  }
  return dd;
}

json run_posterior_command(const RunConfig& cfg) {
  const DatasetSpec& spec = *cfg.dataset;
  const LoadedData data = load_data(spec);
  const Sample& sample = *data.sample;
  McmcConfig mcmc = cfg.mcmc;
  mcmc.seed = derive_seed(cfg.seed, kPosteriorStream);

  PriorSpec prior = FlatPrior{};
  json prior_json = {{"kind", "flat"}};
  if (cfg.prior.kind == PriorConfig::Kind::Horseshoe) {
    prior = HorseshoePrior{};
    prior_json = {{"kind", "horseshoe"}};
  } else if (cfg.prior.kind == PriorConfig::Kind::Laplace) {
    LaplacePrior lp;
    if (cfg.prior.a) {
      lp.a = *cfg.prior.a;
    } else {
      EstimationContext ctx = make_context(cfg, data);
      const MethodResult lasso = estimate_method(Method::GregLasso, ctx);
      lp.a = laplace_prior_from_lasso(*lasso.lambda, sample.weights().sum()).a;
      prior_json["lasso_lambda"] = *lasso.lambda;
    }
    lp.b = cfg.prior.b.value_or(1.0);
    prior = lp;
    prior_json["kind"] = "laplace";
    prior_json["a"] = lp.a;
    prior_json["b"] = lp.b;
  }

  PosteriorDraws draws;
  json domains = json::array();
  std::vector<std::pair<int, VectorXd>> domain_draws;
  if (spec.model == ScenarioKind::Logistic) {
    draws = run_posterior_glm(sample, *data.aux.pop_x, LogisticModel(), prior, mcmc);
  } else if (!spec.domain) {
    draws = run_posterior(sample, data.aux, prior, mcmc);
  } else {
    const DomainDesign dd = domain_design(data);
    const Sample& ds = *dd.sample;
    const RegressionFit fit = fit_wls(ds);
    CoefficientLikelihood lik = CoefficientLikelihood::from_fit(fit);
    for (Index k = sample.num_aux(); k < ds.num_aux(); ++k) lik.shrink[static_cast<std::size_t>(k)] = false;
    draws = run_chain(lik, prior, mcmc,
                      [&](const VectorXd& beta, Rng& rng) { return sample_ybar(ds, dd.aux, beta, rng); });
    Rng rng = make_rng(mcmc.seed, kDomainStream);
    const VectorXd w = ds.weights();
    for (int label : dd.labels) domain_draws.emplace_back(label, VectorXd(draws.beta.rows()));
    for (Index d = 0; d < draws.beta.rows(); ++d) {
      const VectorXd beta = draws.beta.row(d).transpose();
      const double beta0 = w.dot(ds.y() - ds.x() * beta) / w.sum();
      for (auto& [label, out] : domain_draws) {
        const DomainEstimate est = domain_greg(ds, label, dd.domains.at(label), beta0, beta);
        out[d] = est.estimate + std::sqrt(std::max(est.variance, 0.0)) * draw_normal(rng);
      }
    }
  }

  const PosteriorSummary s = summarize(draws, cfg.level);
  std::string csv = "target,point,lower,upper,n_draws\n";
  csv += "mean," + sig4(s.point) + "," + sig4(s.lower) + "," + sig4(s.upper) + "," + std::to_string(s.n_draws) + "\n";
  for (const auto& [label, out] : domain_draws) {
    PosteriorDraws dd;
    dd.ybar = out;
    const PosteriorSummary ds = summarize(dd, cfg.level);
    json dj = summary_json(ds);
    dj["domain"] = label;
    domains.push_back(dj);
    csv += "domain:" + std::to_string(label) + "," + sig4(ds.point) + "," + sig4(ds.lower) + "," + sig4(ds.upper) +
           "," + std::to_string(ds.n_draws) + "\n";
  }
  write_text(cfg.output_dir / "summary.csv", csv);

  std::string draws_csv = draws.lambda.size() > 0 ? "draw,ybar,lambda\n" : "draw,ybar\n";
  for (Index d = 0; d < draws.ybar.size(); ++d) {
    char line[96];
    if (draws.lambda.size() > 0) {
      std::snprintf(line, sizeof line, "%ld,%.17g,%.17g\n", static_cast<long>(d), draws.ybar[d], draws.lambda[d]);
    } else {
      std::snprintf(line, sizeof line, "%ld,%.17g\n", static_cast<long>(d), draws.ybar[d]);
    }
    draws_csv += line;
  }
  write_text(cfg.output_dir / "draws.csv", draws_csv);

  json results = summary_json(s);
  results["prior"] = prior_json;
  if (!domains.empty()) results["domains"] = domains;
  return results;
}

}  // namespace

json dispatch(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) data_error("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());

  json results;
  switch (cfg.command) {
    case Command::Simulate: results = run_simulate(cfg); break;
    case Command::Estimate: results = run_estimate(cfg); break;
    case Command::Posterior: results = run_posterior_command(cfg); break;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json report = {{"config", to_json(cfg)},
                 {"results", results},
                 {"seed", cfg.seed},
                 {"version", kVersion},
                 {"timings", {{"total_seconds", seconds}}}};
  write_text(cfg.output_dir / "report.json", report.dump(2) + "\n");
  return report;
}

namespace {

// Simulation metrics with rmse, bias and al scaled by 100.
std::string display_table(const json& results) {
  std::string out = "Display table (rmse, bias, al x100; cp in percent)\n";
  out += "method      rmse     bias       cp       al  failures\n";
  auto scaled = [](const json& v, double k) { return v.is_number() ? k * v.get<double>() : std::nan(""); };
  for (const auto& m : results["methods"]) {
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %7.1f %8.2f %8.1f %8.1f %9d\n", m["method"].get<std::string>().c_str(),
                  scaled(m["rmse"], 100.0), scaled(m["bias"], 100.0), scaled(m["cp"], 1.0), scaled(m["al"], 100.0),
                  m["failures"].get<int>());
    out += line;
  }
  return out;
}

int report_error(const std::string& kind, int code, const std::string& stage, const std::string& message) {
  const json err = {{"error", {{"kind", kind}, {"exit_code", code}, {"stage", stage}, {"message", message}}}};
  std::cerr << err.dump() << std::endl;
  return code;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Model-assisted survey estimation with shrinkage priors"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<std::string> out;
  bool paper_scale = false;
  app.add_option("--config", config_path, "JSON run configuration (or a report embedding one)")->required();
  app.add_option("--seed", seed, "Override the master seed");
  app.add_option("--reps", reps, "Override the number of simulation replications");
  app.add_option("--out", out, "Override the output directory");
  app.add_flag("--paper-scale", paper_scale, "Use 1000 replications and 5000/500 MCMC draws");
  app.set_version_flag("--version", kVersion);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("config", 2, "arguments", e.what());
  }

  std::string stage = "config";
  try {
    RunConfig cfg = load_config(config_path);
    Overrides o;
    o.seed = seed;
    o.reps = reps;
    if (out) o.out = fs::path(*out);
    o.paper_scale = paper_scale;
    apply_overrides(cfg, o);
    stage = to_string(cfg.command);
    const json report = dispatch(cfg);
    if (cfg.command == Command::Simulate) std::cout << display_table(report["results"]);
    return 0;
  } catch (const Error& e) {
    return report_error(abgreg::to_string(e.kind()), exit_code(e.kind()), stage, e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 1, stage, e.what());
  }
}

}  // namespace abgreg::cli
