#pragma once

#include "hypergrad/optim.hpp"
#include "hypergrad/verify.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hypergrad {

using Json = nlohmann::ordered_json;

/// f(x) = 1/2 x'Ax with A = Q diag(logspace(1 .. cond)) Q', Q a seeded random
/// orthogonal matrix.
ProblemOracle toy_quadratic(Index n = 50, double cond = 1e4, std::uint64_t seed = 0);

/// f(x) = 1/2 x'Ax - b'x with A = Q diag(lambda) Q', eigenvalues spread
/// uniformly over [mu, L] (both endpoints attained) and b standard normal
/// (or zero).
ProblemOracle random_quadratic(Index n, double mu, double L, std::uint64_t seed, bool zero_b = false);

/// Parses a number or "<c>/L" (c times 1/L).
double parse_scaled(const Json& value, double L);

struct ProblemSpec {
  std::string name;
  ProblemKind kind = ProblemKind::Logistic;
  std::string dataset;  // LIBSVM path (dataset losses)
  double lambda = 1e-4;
  // Synthetic quadratic (toy_quadratic) when dataset is empty.
  Index n = 50;
  double cond = 1e4;
  std::uint64_t problem_seed = 0;
};

struct AlgorithmSpec {
  Algorithm algorithm = Algorithm::Gd;
  /// Parameter name -> candidate values; the run grid is their product.
  /// Keys: eta_p, eta_b, momentum, stepsize, theta, null_step, beta_range,
  /// shape, warm_start_agd.
  std::vector<std::pair<std::string, std::vector<Json>>> grid;
};

struct BenchConfig {
  std::vector<ProblemSpec> problems;
  std::vector<AlgorithmSpec> algorithms;
  std::size_t budget = 1000;
  double tol = 1e-4;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "hypergrad-out";
};

/// Throws ConfigError with a diagnostic for malformed or inconsistent
/// configurations (no problems, no algorithms, unreadable datasets, ...).
BenchConfig parse_bench_config(const Json& j, const std::filesystem::path& data_root = {});
Json to_json(const BenchConfig& c);

/// Parameter grids used by the benchmark: the HDM-Best (eta_p, eta_b) grid,
/// the heavy-ball momentum grid and the Adam/AdaGrad stepsize grid.
AlgorithmSpec default_grid(Algorithm algo);

/// Dataset paths are resolved against HYPERGRAD_DATA_DIR when it is set.
std::filesystem::path resolve_dataset(const std::string& path, const std::filesystem::path& data_root);
std::filesystem::path data_root_from_env();

ProblemOracle build_problem(const ProblemSpec& spec);

/// Applies one grid point to a run configuration.
void apply_parameter(RunConfig& config, const std::string& key, const Json& value, double L);
/// Whether a grid key affects the given algorithm.
bool parameter_applies(Algorithm algo, const std::string& key);
/// Display label per configured algorithm ("hdm-best", or "hdm-best#2" for repeats).
std::vector<std::string> algorithm_labels(const BenchConfig& config);

struct RunOutcome {
  std::size_t problem = 0;
  std::size_t algorithm = 0;
  std::uint64_t seed = 0;
  Json params = Json::object();
  Trajectory trajectory;
  std::optional<double> f_star;
};

struct SolvedCell {
  std::string algorithm;
  std::string problem;
  std::uint64_t seed = 0;
  bool solved = false;
  std::size_t oracles = 0;  // gradient oracles of the selected configuration
  double final_grad_inf = 0.0;
  Json params = Json::object();
  std::size_t run_index = 0;
};

struct SolvedTable {
  std::vector<SolvedCell> cells;
  std::map<std::string, std::size_t> totals;  // algorithm -> solved instances

  std::size_t solved(const std::string& algorithm) const;
};

/// Per (algorithm, problem, seed): the best run by fewest oracles to Solved,
/// ties broken by lower final |grad|_inf; unsolved cells keep the run with
/// the lowest final |grad|_inf.
SolvedTable build_solved_table(const BenchConfig& config, const std::vector<RunOutcome>& runs);

struct BenchResult {
  std::vector<RunOutcome> runs;
  SolvedTable table;
};

/// Expands every algorithm grid over every problem and seed and executes the
/// runs on `jobs` worker threads. Results are ordered deterministically.
BenchResult run_bench(const BenchConfig& config, std::size_t jobs = 1);

/// Trace CSV with header iter,grad_oracles,f,f_gap,grad_inf_norm,h_value,null_step.
void write_trajectory_csv(const Trajectory& t, std::ostream& out);
std::string trajectory_csv(const Trajectory& t);

Json check_to_json(const CheckReport& r);
Json table_to_json(const SolvedTable& table);

/// Writes one CSV per run plus summary.json (config echo, solved table, run
/// list and check reports) into dir.
void emit_outputs(const BenchConfig& config, const BenchResult& result, const std::vector<CheckReport>& checks,
                  const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Toy-quadratic demos.
// ---------------------------------------------------------------------------

struct DemoSeries {
  std::string name;
  Trajectory trajectory;
};

struct DemoOptions {
  Index n = 50;
  double cond = 1e2;
  std::uint64_t seed = 0;
  std::size_t iterations = 2000;
  double tol = 1e-10;
  /// Vanilla HDM learns a scalar stepsize by OGD with eta_k = vanilla_c / (L sqrt(k)).
  double vanilla_c = 20.0;
};

/// Vanilla HDM, HDM with null steps, HDM-Best, HDM-HB against fixed heavy
/// ball, and HDM-AGD against AGD, all on the toy quadratic.
std::vector<DemoSeries> run_demo(const DemoOptions& options = {});
/// Wide CSV: one f column per series (empty once a series has stopped).
void write_demo_csv(const std::vector<DemoSeries>& series, std::ostream& out);

/// Fast versions of the library's property checks; used by `verify`.
std::vector<CheckReport> verification_suite(std::uint64_t seed = 0);

/// Entry point of the command-line tool. Returns 0 on success, 1 when a
/// check fails and 2 for invalid configurations.
int cli_main(int argc, char** argv);

}  // namespace hypergrad
