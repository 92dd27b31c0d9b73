#ifndef ABGREG_CLI_HPP_
#define ABGREG_CLI_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "abgreg/bayes.hpp"
#include "abgreg/error.hpp"
#include "abgreg/harness.hpp"
#include "abgreg/survey.hpp"

namespace abgreg::cli {

inline constexpr const char* kVersion = "0.1.0";

enum class Command { Simulate, Estimate, Posterior };

struct TotalsSource {
  enum class Kind { Means, Population };
  Kind kind = Kind::Means;
  std::filesystem::path path;
};

struct DatasetSpec {
  std::filesystem::path path;
  std::string response;
  std::string weight;
  std::vector<std::string> auxiliaries;
  std::optional<std::string> domain;
  TotalsSource totals;
  // Unset: the population CSV row count, else the sum of the weights.
  std::optional<double> population_size;
  PairwisePolicy pairwise = PairwisePolicy::IndependenceProduct;
  ScenarioKind model = ScenarioKind::Linear;
};

struct PriorConfig {
  enum class Kind { Flat, Laplace, Horseshoe };
  Kind kind = Kind::Flat;
  // Laplace hyperparameters; unset means derived from a cross-validated lasso
  // fit on the data (shape from its lambda, rate 1).
  std::optional<double> a;
  std::optional<double> b;
};

// The full configuration after defaults and command-line overrides. Relative
// paths are resolved against the directory of the config file.
struct RunConfig {
  Command command = Command::Simulate;
  std::uint64_t seed = 1;
  ScenarioConfig scenario;
  std::vector<Method> methods;
  PriorConfig prior;
  McmcConfig mcmc;
  std::optional<DatasetSpec> dataset;
  double level = 0.95;
  int cv_folds = 10;
  std::filesystem::path output_dir = "abgreg-out";
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<std::filesystem::path> out;
  bool paper_scale = false;
};

// Accepts either a config document or a report that embeds one under "config".
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);
void apply_overrides(RunConfig& cfg, const Overrides& overrides);
nlohmann::json to_json(const RunConfig& cfg);

std::string to_string(Command c);

// A sample read from a CSV file; pi = 1 / weight.
struct Dataset {
  std::vector<double> y;
  std::vector<double> weight;
  std::vector<std::vector<double>> aux;  // one vector per auxiliary column
  std::vector<int> domain;
  Index rows = 0;
};

struct ColumnMap {
  std::string response;
  std::string weight;
  std::vector<std::string> auxiliaries;
  std::optional<std::string> domain;
};

Dataset ingest_csv(const std::filesystem::path& path, const ColumnMap& columns);

// Named numeric columns of a CSV file, row-major in the requested order.
struct Table {
  std::vector<std::string> names;
  MatrixXd values;
  std::vector<int> labels;  // optional integer label column
};
Table read_numeric_columns(const std::filesystem::path& path, const std::vector<std::string>& columns,
                           const std::optional<std::string>& label_column = std::nullopt);

// Runs the command, writes report files into cfg.output_dir, returns the report.
nlohmann::json dispatch(const RunConfig& cfg);

// Entry point behind the executable; returns the process exit status.
int run(int argc, char** argv);

int exit_code(ErrorKind kind);

}  // namespace abgreg::cli

#endif  // ABGREG_CLI_HPP_
