#include "hypergrad/bench.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace fs = std::filesystem;

namespace hypergrad {

namespace {

Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix G(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) G(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ();
  const Matrix& R = qr.matrixQR();
  for (Index j = 0; j < n; ++j) {
    if (R(j, j) < 0.0) Q.col(j) *= -1.0;
  }
  return Q;
}

/// Separate stream from initial_point(), which seeds mt19937_64 directly.
std::mt19937_64 instance_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

Matrix with_spectrum(const Matrix& Q, const Vector& eigenvalues) {
  Matrix A = Q * eigenvalues.asDiagonal() * Q.transpose();
  return 0.5 * (A + A.transpose());
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t get_count(const Json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError("'" + what + "' must be a non-negative integer, got " + v.dump());
  }
  return v.get<std::size_t>();
}

double get_positive(const Json& v, const std::string& what) {
  if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) {
    throw ConfigError("'" + what + "' must be a positive number, got " + v.dump());
  }
  return v.get<double>();
}

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

ProblemKind parse_problem_kind(const std::string& name) {
  if (name == "quadratic") return ProblemKind::Quadratic;
  if (name == "logistic") return ProblemKind::Logistic;
  if (name == "svm" || name == "smooth_svm" || name == "smooth-svm") return ProblemKind::SmoothSvm;
  throw ConfigError("unknown problem kind '" + name + "' (expected quadratic, logistic or svm)");
}

std::string default_problem_name(const ProblemSpec& p) {
  if (p.kind == ProblemKind::Quadratic) {
    return "quadratic-n" + std::to_string(p.n) + "-cond" + format_double(p.cond) + "-s" +
           std::to_string(p.problem_seed);
  }
  return fs::path(p.dataset).stem().string() + "-" + to_string(p.kind);
}

ProblemSpec parse_problem(const Json& j, const fs::path& data_root) {
  if (!j.is_object()) throw ConfigError("each problem must be an object, got " + j.dump());
  check_keys(j, {"name", "kind", "dataset", "lambda", "n", "cond", "seed"}, "problem");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError("problem without a 'kind': " + j.dump());
  ProblemSpec p;
  p.kind = parse_problem_kind(j["kind"].get<std::string>());
  if (j.contains("lambda")) {
    const Json& l = j["lambda"];
    if (!l.is_number() || l.get<double>() < 0.0) throw ConfigError("'lambda' must be >= 0, got " + l.dump());
    p.lambda = l.get<double>();
  }
  if (p.kind == ProblemKind::Quadratic) {
    if (j.contains("dataset")) throw ConfigError("quadratic problems are synthetic and take no dataset");
    if (j.contains("n")) p.n = static_cast<Index>(get_count(j["n"], "n"));
    if (j.contains("cond")) p.cond = get_positive(j["cond"], "cond");
    if (j.contains("seed")) p.problem_seed = get_count(j["seed"], "seed");
    if (p.n < 2) throw ConfigError("quadratic problem needs n >= 2");
    if (p.cond < 1.0) throw ConfigError("quadratic problem needs cond >= 1");
  } else {
    if (!j.contains("dataset") || !j["dataset"].is_string()) {
      throw ConfigError(to_string(p.kind) + " problem needs a 'dataset' path");
    }
    const fs::path path = resolve_dataset(j["dataset"].get<std::string>(), data_root);
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw ConfigError("dataset not readable: " + path.string());
    p.dataset = path.string();
  }
  p.name = j.contains("name") ? j["name"].get<std::string>() : default_problem_name(p);
  return p;
}

const std::set<std::string> kGridKeys{"eta_p",  "eta_b", "momentum",   "stepsize",      "theta",
                                      "null_step", "beta_range", "shape", "warm_start_agd"};

AlgorithmSpec parse_algorithm_spec(const Json& j) {
  if (j.is_string()) return AlgorithmSpec{parse_algorithm(j.get<std::string>()), {}};
  if (!j.is_object()) throw ConfigError("each algorithm must be a name or an object, got " + j.dump());
  check_keys(j, {"name", "grid"}, "algorithm");
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("algorithm without a 'name': " + j.dump());
  AlgorithmSpec spec{parse_algorithm(j["name"].get<std::string>()), {}};
  if (!j.contains("grid")) return spec;
  const Json& grid = j["grid"];
  if (grid.is_string() && grid.get<std::string>() == "default") return default_grid(spec.algorithm);
  if (!grid.is_object()) throw ConfigError("'grid' must be an object or \"default\", got " + grid.dump());
  for (const auto& item : grid.items()) {
    if (!kGridKeys.count(item.key())) throw ConfigError("unknown grid parameter '" + item.key() + "'");
    std::vector<Json> values;
    if (item.value().is_array()) {
      for (const auto& v : item.value()) values.push_back(v);
    } else {
      values.push_back(item.value());
    }
    if (values.empty()) throw ConfigError("grid parameter '" + item.key() + "' has no values");
    for (const auto& v : values) {
      RunConfig probe;
      apply_parameter(probe, item.key(), v, 1.0);
    }
    spec.grid.emplace_back(item.key(), std::move(values));
  }
  return spec;
}

/// Cartesian product of the grid, one JSON object per point.
std::vector<Json> expand_grid(const AlgorithmSpec& spec) {
  std::vector<Json> points{Json::object()};
  for (const auto& [key, values] : spec.grid) {
    std::vector<Json> next;
    for (const auto& base : points) {
      for (const auto& v : values) {
        Json p = base;
        p[key] = v;
        next.push_back(std::move(p));
      }
    }
    points = std::move(next);
  }
  return points;
}

double final_grad_inf(const Trajectory& t) {
  return t.records.empty() ? std::numeric_limits<double>::infinity() : t.records.back().grad_inf;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void create_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

ProblemOracle toy_quadratic(Index n, double cond, std::uint64_t seed) {
  if (n < 2) throw ConfigError("toy_quadratic needs n >= 2");
  if (!(cond >= 1.0) || !std::isfinite(cond)) throw ConfigError("toy_quadratic needs cond >= 1");
  std::mt19937_64 rng = instance_rng(seed);
  const Matrix Q = random_orthogonal(n, rng);
  Vector eig(n);
  for (Index i = 0; i < n; ++i) eig(i) = std::pow(cond, static_cast<double>(i) / static_cast<double>(n - 1));
  return ProblemOracle::quadratic(with_spectrum(Q, eig), Vector::Zero(n));
}

ProblemOracle random_quadratic(Index n, double mu, double L, std::uint64_t seed, bool zero_b) {
  if (n < 1) throw ConfigError("random_quadratic needs n >= 1");
  if (!(mu > 0.0) || !(L >= mu)) throw ConfigError("random_quadratic needs 0 < mu <= L");
  std::mt19937_64 rng = instance_rng(seed);
  const Matrix Q = random_orthogonal(n, rng);
  Vector eig(n);
  for (Index i = 0; i < n; ++i) {
    eig(i) = n == 1 ? L : mu + (L - mu) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  Vector b = Vector::Zero(n);
  if (!zero_b) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < n; ++i) b(i) = normal(rng);
  }
  return ProblemOracle::quadratic(with_spectrum(Q, eig), b);
}

double parse_scaled(const Json& value, double L) {
  if (value.is_number()) return value.get<double>();
  if (!value.is_string()) throw ConfigError("expected a number or \"c/L\", got " + value.dump());
  std::string s = value.get<std::string>();
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  const bool per_L = s.size() >= 2 && s.compare(s.size() - 2, 2, "/L") == 0;
  const std::string head = per_L ? s.substr(0, s.size() - 2) : s;
  double c = 1.0;
  if (!head.empty()) {
    std::size_t pos = 0;
    try {
      c = std::stod(head, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != head.size()) throw ConfigError("cannot parse '" + value.get<std::string>() + "'");
  } else if (!per_L) {
    throw ConfigError("empty numeric value");
  }
  return per_L ? c / L : c;
}

BenchConfig parse_bench_config(const Json& j, const fs::path& data_root) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  check_keys(j, {"problems", "algorithms", "budget", "tol", "seeds", "output_dir"}, "configuration");
  BenchConfig c;
  if (j.contains("budget")) {
    c.budget = get_count(j["budget"], "budget");
    if (c.budget == 0) throw ConfigError("'budget' must be at least 1");
  }
  if (j.contains("tol")) c.tol = get_positive(j["tol"], "tol");
  if (j.contains("seeds")) {
    const Json& s = j["seeds"];
    c.seeds.clear();
    if (s.is_array()) {
      for (const auto& v : s) c.seeds.push_back(get_count(v, "seeds"));
    } else {
      c.seeds.push_back(get_count(s, "seeds"));
    }
    if (c.seeds.empty()) throw ConfigError("'seeds' is empty");
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("'output_dir' must be a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (!j.contains("problems") || !j["problems"].is_array() || j["problems"].empty()) {
    throw ConfigError("no problems configured");
  }
  for (const auto& p : j["problems"]) c.problems.push_back(parse_problem(p, data_root));
  if (!j.contains("algorithms") || !j["algorithms"].is_array() || j["algorithms"].empty()) {
    throw ConfigError("no algorithms configured");
  }
  for (const auto& a : j["algorithms"]) c.algorithms.push_back(parse_algorithm_spec(a));
  return c;
}

Json to_json(const BenchConfig& c) {
  Json j;
  Json problems = Json::array();
  for (const auto& p : c.problems) {
    Json q;
    q["name"] = p.name;
    q["kind"] = to_string(p.kind);
    if (p.kind == ProblemKind::Quadratic) {
      q["n"] = p.n;
      q["cond"] = p.cond;
      q["seed"] = p.problem_seed;
    } else {
      q["dataset"] = p.dataset;
      q["lambda"] = p.lambda;
    }
    problems.push_back(std::move(q));
  }
  Json algorithms = Json::array();
  for (const auto& a : c.algorithms) {
    Json entry;
    entry["name"] = to_string(a.algorithm);
    Json grid = Json::object();
    for (const auto& [key, values] : a.grid) grid[key] = values;
    entry["grid"] = std::move(grid);
    algorithms.push_back(std::move(entry));
  }
  j["problems"] = std::move(problems);
  j["algorithms"] = std::move(algorithms);
  j["budget"] = c.budget;
  j["tol"] = c.tol;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

AlgorithmSpec default_grid(Algorithm algo) {
  AlgorithmSpec spec{algo, {}};
  const std::vector<Json> stepsizes{"1/L", 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  switch (algo) {
    case Algorithm::HdmBest:
      spec.grid.emplace_back("eta_p", std::vector<Json>{"0.1/L", "1/L", "10/L", "100/L"});
      spec.grid.emplace_back("eta_b", std::vector<Json>{1.0, 3.0, 5.0, 10.0, 100.0});
      break;
    case Algorithm::HdmAgd:
      spec.grid.emplace_back("theta", std::vector<Json>{0.5, 1.0, 2.0});
      break;
    case Algorithm::GdHb:
      spec.grid.emplace_back("momentum", std::vector<Json>{0.1, 0.5, 0.9, 0.99});
      break;
    case Algorithm::Adam:
    case Algorithm::AdaGrad:
      spec.grid.emplace_back("stepsize", stepsizes);
      break;
    default:
      break;
  }
  return spec;
}

fs::path resolve_dataset(const std::string& path, const fs::path& data_root) {
  const fs::path p(path);
  if (p.is_absolute() || data_root.empty()) return p;
  const fs::path rooted = data_root / p;
  if (fs::exists(rooted) || !fs::exists(p)) return rooted;
  return p;
}

fs::path data_root_from_env() {
  const char* env = std::getenv("HYPERGRAD_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path();
}

ProblemOracle build_problem(const ProblemSpec& spec) {
  switch (spec.kind) {
    case ProblemKind::Quadratic:
      return toy_quadratic(spec.n, spec.cond, spec.problem_seed);
    case ProblemKind::Logistic:
      return ProblemOracle::logistic(load_libsvm_file(spec.dataset), spec.lambda);
    case ProblemKind::SmoothSvm:
      return ProblemOracle::smooth_svm(load_libsvm_file(spec.dataset), spec.lambda);
  }
  throw ConfigError("unknown problem kind");
}

void apply_parameter(RunConfig& config, const std::string& key, const Json& value, double L) {
  auto positive = [&](double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("'" + key + "' must be positive, got " + value.dump());
    return v;
  };
  auto boolean = [&] {
    if (!value.is_boolean()) throw ConfigError("'" + key + "' must be true or false, got " + value.dump());
    return value.get<bool>();
  };
  if (key == "eta_p") {
    config.eta_p = positive(parse_scaled(value, L));
  } else if (key == "eta_b") {
    config.eta_b = positive(parse_scaled(value, L));
  } else if (key == "stepsize") {
    config.stepsize = positive(parse_scaled(value, L));
  } else if (key == "momentum") {
    const double m = parse_scaled(value, L);
    if (!(m >= 0.0 && m < 1.0)) throw ConfigError("'momentum' must lie in [0, 1), got " + value.dump());
    config.momentum = m;
  } else if (key == "theta") {
    config.theta = positive(parse_scaled(value, L));
  } else if (key == "null_step") {
    config.null_step = boolean();
  } else if (key == "warm_start_agd") {
    config.warm_start_agd = boolean();
  } else if (key == "beta_range") {
    const std::string s = value.is_string() ? value.get<std::string>() : "";
    if (s == "pos" || s == "positive") {
      config.beta_range = BetaRange::Positive;
    } else if (s == "sym" || s == "symmetric") {
      config.beta_range = BetaRange::Symmetric;
    } else {
      throw ConfigError("'beta_range' must be \"pos\" or \"sym\", got " + value.dump());
    }
  } else if (key == "shape") {
    if (!value.is_string()) throw ConfigError("'shape' must be a string, got " + value.dump());
    config.p_shape = parse_shape(value.get<std::string>());
  } else {
    throw ConfigError("unknown parameter '" + key + "'");
  }
}

bool parameter_applies(Algorithm algo, const std::string& key) {
  if (key == "eta_p" || key == "null_step" || key == "shape") return learns_preconditioner(algo);
  if (key == "eta_b" || key == "beta_range") return algo == Algorithm::HdmHb || algo == Algorithm::HdmBest;
  if (key == "theta" || key == "warm_start_agd") return algo == Algorithm::HdmAgd;
  if (key == "momentum") return algo == Algorithm::GdHb;
  if (key == "stepsize") return algo == Algorithm::Adam || algo == Algorithm::AdaGrad;
  return false;
}

std::vector<std::string> algorithm_labels(const BenchConfig& config) {
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> seen;
  for (const auto& a : config.algorithms) {
    const std::string base = to_string(a.algorithm);
    const std::size_t count = ++seen[base];
    labels.push_back(count == 1 ? base : base + "#" + std::to_string(count));
  }
  return labels;
}

std::size_t SolvedTable::solved(const std::string& algorithm) const {
  const auto it = totals.find(algorithm);
  return it == totals.end() ? 0 : it->second;
}

SolvedTable build_solved_table(const BenchConfig& config, const std::vector<RunOutcome>& runs) {
  const auto labels = algorithm_labels(config);
  auto better = [](const Trajectory& a, const Trajectory& b) {
    const bool sa = a.status == RunStatus::Solved;
    const bool sb = b.status == RunStatus::Solved;
    if (sa != sb) return sa;
    if (sa && a.grad_oracles != b.grad_oracles) return a.grad_oracles < b.grad_oracles;
    return final_grad_inf(a) < final_grad_inf(b);
  };
  std::map<std::tuple<std::size_t, std::size_t, std::uint64_t>, std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto key = std::make_tuple(runs[i].algorithm, runs[i].problem, runs[i].seed);
    const auto it = best.find(key);
    if (it == best.end()) {
      best.emplace(key, i);
    } else if (better(runs[i].trajectory, runs[it->second].trajectory)) {
      it->second = i;
    }
  }
  SolvedTable table;
  for (const auto& label : labels) table.totals[label] = 0;
  for (const auto& [key, index] : best) {
    const RunOutcome& r = runs[index];
    SolvedCell cell;
    cell.algorithm = labels.at(std::get<0>(key));
    cell.problem = config.problems.at(std::get<1>(key)).name;
    cell.seed = std::get<2>(key);
    cell.solved = r.trajectory.status == RunStatus::Solved;
    cell.oracles = r.trajectory.grad_oracles;
    cell.final_grad_inf = final_grad_inf(r.trajectory);
    cell.params = r.params;
    cell.run_index = index;
    if (cell.solved) ++table.totals[cell.algorithm];
    table.cells.push_back(std::move(cell));
  }
  return table;
}

BenchResult run_bench(const BenchConfig& config, std::size_t jobs) {
  if (config.problems.empty()) throw ConfigError("no problems configured");
  if (config.algorithms.empty()) throw ConfigError("no algorithms configured");

  std::vector<ProblemOracle> oracles;
  oracles.reserve(config.problems.size());
  for (const auto& p : config.problems) oracles.push_back(build_problem(p));

  std::vector<RunOutcome> tasks;
  for (std::size_t p = 0; p < config.problems.size(); ++p) {
    for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
      for (const Json& params : expand_grid(config.algorithms[a])) {
        for (std::uint64_t seed : config.seeds) {
          RunOutcome r;
          r.problem = p;
          r.algorithm = a;
          r.seed = seed;
          r.params = params;
          r.f_star = oracles[p].optimal_value();
          tasks.push_back(std::move(r));
        }
      }
    }
  }

  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        RunOutcome& r = tasks[i];
        const ProblemOracle& oracle = oracles[r.problem];
        RunConfig rc;
        rc.max_grad_oracles = config.budget;
        rc.tol_grad_inf = config.tol;
        rc.seed = r.seed;
        for (const auto& item : r.params.items()) {
          apply_parameter(rc, item.key(), item.value(), oracle.smoothness());
        }
        r.trajectory = run(config.algorithms[r.algorithm].algorithm, oracle, rc,
                           initial_point(oracle.dim(), r.seed));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BenchResult result;
  result.runs = std::move(tasks);
  result.table = build_solved_table(config, result.runs);
  return result;
}

void write_trajectory_csv(const Trajectory& t, std::ostream& out) {
  out << "iter,grad_oracles,f,f_gap,grad_inf_norm,h_value,null_step\n";
  for (const auto& r : t.records) {
    out << r.iter << ',' << r.grad_oracles << ',' << format_double(r.f) << ',';
    if (r.f_gap) out << format_double(*r.f_gap);
    out << ',' << format_double(r.grad_inf) << ',';
    if (!std::isnan(r.h_value)) out << format_double(r.h_value);
    out << ',' << (r.null_step ? 1 : 0) << '\n';
  }
}

std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream out;
  write_trajectory_csv(t, out);
  return out.str();
}

Json check_to_json(const CheckReport& r) {
  Json j;
  j["name"] = r.name;
  j["passed"] = r.passed;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["margin"] = r.margin;
  j["detail"] = r.detail;
  return j;
}

Json table_to_json(const SolvedTable& table) {
  Json cells = Json::array();
  for (const auto& c : table.cells) {
    Json j;
    j["algorithm"] = c.algorithm;
    j["problem"] = c.problem;
    j["seed"] = c.seed;
    j["solved"] = c.solved;
    j["oracles"] = c.oracles;
    j["final_grad_inf"] = c.final_grad_inf;
    j["params"] = c.params;
    j["run"] = c.run_index;
    cells.push_back(std::move(j));
  }
  Json totals = Json::object();
  for (const auto& [name, count] : table.totals) totals[name] = count;
  Json j;
  j["cells"] = std::move(cells);
  j["totals"] = std::move(totals);
  return j;
}

void emit_outputs(const BenchConfig& config, const BenchResult& result, const std::vector<CheckReport>& checks,
                  const fs::path& dir) {
  create_dir(dir);
  const auto labels = algorithm_labels(config);
  Json runs = Json::array();
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const RunOutcome& r = result.runs[i];
    const Trajectory& t = r.trajectory;
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "run-%04zu", i);
    const std::string file = std::string(prefix) + "_" + sanitize(config.problems.at(r.problem).name) + "_" +
                             sanitize(labels.at(r.algorithm)) + "_s" + std::to_string(r.seed) + ".csv";
    write_text(dir / file, trajectory_csv(t));
    Json j;
    j["index"] = i;
    j["problem"] = config.problems.at(r.problem).name;
    j["algorithm"] = labels.at(r.algorithm);
    j["seed"] = r.seed;
    j["params"] = r.params;
    j["status"] = to_string(t.status);
    j["message"] = t.message;
    j["iterations"] = t.iterations();
    j["grad_oracles"] = t.grad_oracles;
    j["fval_oracles"] = t.fval_oracles;
    j["final_f"] = t.records.empty() ? std::numeric_limits<double>::quiet_NaN() : t.records.back().f;
    j["final_grad_inf"] = final_grad_inf(t);
    j["csv"] = file;
    runs.push_back(std::move(j));
  }
  Json check_list = Json::array();
  for (const auto& c : checks) check_list.push_back(check_to_json(c));
  Json summary;
  summary["config"] = to_json(config);
  summary["solved_table"] = table_to_json(result.table);
  summary["runs"] = std::move(runs);
  summary["checks"] = std::move(check_list);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Demo.
// ---------------------------------------------------------------------------

std::vector<DemoSeries> run_demo(const DemoOptions& options) {
  const ProblemOracle oracle = toy_quadratic(options.n, options.cond, options.seed);
  const double L = oracle.smoothness();
  const Vector x1 = initial_point(oracle.dim(), options.seed);

  RunConfig base;
  base.max_grad_oracles = options.iterations + 1;
  base.tol_grad_inf = options.tol;
  base.seed = options.seed;

  std::vector<DemoSeries> out;
  auto add = [&](const std::string& name, Algorithm algo, const RunConfig& c) {
    out.push_back(DemoSeries{name, run(algo, oracle, c, x1)});
  };

  RunConfig vanilla = base;
  vanilla.null_step = false;
  vanilla.p_shape = Shape::Scalar;
  vanilla.p_schedule = StepsizeSchedule::anytime(options.vanilla_c / L);
  add("hdm_vanilla", Algorithm::Hdm, vanilla);
  RunConfig guarded = vanilla;
  guarded.null_step = true;
  add("hdm_null_step", Algorithm::Hdm, guarded);
  add("hdm_best", Algorithm::HdmBest, base);
  add("hdm_hb", Algorithm::HdmHb, base);
  RunConfig hb = base;
  hb.momentum = 0.9;
  add("gd_hb", Algorithm::GdHb, hb);
  add("hdm_agd", Algorithm::HdmAgd, base);
  add("agd_cvx", Algorithm::AgdCvx, base);
  add("gd", Algorithm::Gd, base);
  return out;
}

void write_demo_csv(const std::vector<DemoSeries>& series, std::ostream& out) {
  std::size_t rows = 0;
  out << "iter";
  for (const auto& s : series) {
    out << ',' << s.name;
    rows = std::max(rows, s.trajectory.records.size());
  }
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    out << i;
    for (const auto& s : series) {
      out << ',';
      if (i < s.trajectory.records.size()) out << format_double(s.trajectory.records[i].f);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Verification suite.
// ---------------------------------------------------------------------------

std::vector<CheckReport> verification_suite(std::uint64_t seed) {
  std::vector<CheckReport> reports;

  FdCheckOptions fd;
  fd.seed = seed + 1;
  for (FeedbackOp op : {FeedbackOp::Hyper, FeedbackOp::HeavyBallP, FeedbackOp::HeavyBallB}) {
    for (Shape shape : {Shape::Scalar, Shape::Diagonal, Shape::Full}) {
      reports.push_back(fd_gradient_check(op, shape, fd));
    }
  }

  const Index n = 8;
  const std::size_t K = 150;
  for (std::uint64_t i = 0; i < 2; ++i) {
    const ProblemOracle q = random_quadratic(n, 0.5, 4.0, seed * 100 + i, true);
    const double L = q.smoothness();
    const double mu = q.strong_convexity();
    const Vector x1 = initial_point(n, seed + i);

    RunConfig rc;
    rc.max_grad_oracles = K + 1;
    rc.tol_grad_inf = 0.0;
    rc.record_feedback_points = true;
    const FeasibleSet box = DiagonalNonneg::uniform(n, 2.0 / L);
    const double D = diameter(box, n);
    rc.p_set = box;
    rc.p_schedule = StepsizeSchedule::horizon_constant(D, L, K);
    const Trajectory t = run(Algorithm::Hdm, q, rc, x1);
    const HindsightResult hind = hindsight_best(t.feedback_points, q, box);
    CheckReport r = regret_bound_check(t, hind, D, L);
    r.name += " #" + std::to_string(i);
    reports.push_back(std::move(r));

    RunConfig sc = rc;
    const FeasibleSet interval = ScalarInterval{0.0, 2.0 / L};
    const double Ds = diameter(interval, n);
    sc.p_shape = Shape::Scalar;
    sc.p_set = interval;
    sc.p_schedule = StepsizeSchedule::decaying(mu);
    const Trajectory ts = run(Algorithm::Hdm, q, sc, x1);
    const HindsightResult hs = hindsight_best(ts.feedback_points, q, interval);
    CheckReport lr = log_regret_bound_check(ts, hs, Ds, L, mu);
    lr.name += " #" + std::to_string(i);
    reports.push_back(std::move(lr));

    RunConfig red;
    red.max_grad_oracles = K + 1;
    red.tol_grad_inf = 1e-12;
    CheckReport rr = reduction_check(run(Algorithm::Hdm, q, red, x1), q);
    rr.name += " #" + std::to_string(i);
    reports.push_back(std::move(rr));
  }

  const ProblemOracle q = random_quadratic(n, 0.1, 10.0, seed * 100 + 7);
  const Vector x1 = initial_point(n, seed + 7);
  RunConfig mc;
  mc.max_grad_oracles = 300;
  mc.tol_grad_inf = 1e-12;
  for (Algorithm algo : {Algorithm::Hdm, Algorithm::HdmHb, Algorithm::HdmAgd, Algorithm::HdmBest}) {
    RunConfig c = mc;
    c.record_feedback_points = algo == Algorithm::HdmHb;
    const Trajectory t = run(algo, q, c, x1);
    CheckReport m = monotonicity_check(t);
    m.name += " (" + to_string(algo) + ")";
    reports.push_back(std::move(m));
    if (algo == Algorithm::HdmHb) {
      reports.push_back(hb_potential_check(t, q));
      reports.push_back(hb_hindsight_floor_check(t, q, *t.hb));
    }
    if (algo == Algorithm::HdmAgd) reports.push_back(agd_sequence_check(t));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Command line.
// ---------------------------------------------------------------------------

namespace {

struct RunOptions {
  std::string config;
  std::string out;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget;
  std::optional<double> tol;
  std::vector<std::string> algos;
  std::vector<std::string> datasets;
  std::vector<std::string> kinds{"logistic", "svm"};
  double lambda = 1e-4;
  std::string eta_p;
  std::string eta_b;
  std::optional<double> theta;
  bool no_null_step = false;
  std::string beta_range;
  bool warm_start_agd = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "JSON benchmark configuration");
  cmd->add_option("--out", o.out, "Output directory (overrides the configuration)");
  cmd->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Seed of the initial point (replaces the seed list)");
  cmd->add_option("--budget", o.budget, "Gradient oracle budget (default 1000)")->check(CLI::PositiveNumber);
  cmd->add_option("--tol", o.tol, "Stopping tolerance on |grad f|_inf (default 1e-4)")->check(CLI::PositiveNumber);
  cmd->add_option("--algo", o.algos, "Algorithm name (repeatable; 'all' for every algorithm)");
  cmd->add_option("--dataset", o.datasets, "LIBSVM dataset (repeatable)");
  cmd->add_option("--problem", o.kinds, "Losses built on each dataset (logistic, svm)");
  cmd->add_option("--lambda", o.lambda, "L2 regularization of dataset losses")->check(CLI::NonNegativeNumber);
  cmd->add_option("--eta-p", o.eta_p, "Preconditioner learning rate (number or c/L)");
  cmd->add_option("--eta-b", o.eta_b, "Momentum learning rate (number or c/L)");
  cmd->add_option("--theta", o.theta, "HDM-AGD theta");
  cmd->add_flag("--no-null-step", o.no_null_step, "Disable the null step");
  cmd->add_option("--beta-range", o.beta_range, "Momentum range")->check(CLI::IsMember({"pos", "sym"}));
  cmd->add_flag("--warm-start-agd", o.warm_start_agd, "Warm-start HDM-AGD with plain AGD");
}

Json scaled_flag(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

BenchConfig config_from_options(const RunOptions& o, bool grid_mode) {
  BenchConfig config;
  const fs::path root = data_root_from_env();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot read configuration " + o.config);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError("invalid JSON in " + o.config + ": " + e.what());
    }
    config = parse_bench_config(j, root);
  } else {
    if (o.datasets.empty()) {
      ProblemSpec p;
      p.kind = ProblemKind::Quadratic;
      p.name = default_problem_name(p);
      config.problems.push_back(p);
    }
    for (const auto& d : o.datasets) {
      for (const auto& k : o.kinds) {
        Json j{{"kind", k}, {"dataset", d}, {"lambda", o.lambda}};
        config.problems.push_back(parse_problem(j, root));
      }
    }
    std::vector<std::string> names = o.algos;
    if (names.empty() && grid_mode) names.push_back("all");
    for (const auto& name : names) {
      if (name == "all") {
        for (Algorithm a : all_algorithms()) config.algorithms.push_back(AlgorithmSpec{a, {}});
      } else {
        config.algorithms.push_back(AlgorithmSpec{parse_algorithm(name), {}});
      }
    }
    if (config.algorithms.empty()) throw ConfigError("no algorithms selected (use --algo or --config)");
  }
  if (grid_mode) {
    for (auto& a : config.algorithms) {
      if (a.grid.empty()) a = default_grid(a.algorithm);
    }
  }

  std::vector<std::pair<std::string, Json>> overrides;
  if (!o.eta_p.empty()) overrides.emplace_back("eta_p", scaled_flag(o.eta_p));
  if (!o.eta_b.empty()) overrides.emplace_back("eta_b", scaled_flag(o.eta_b));
  if (o.theta) overrides.emplace_back("theta", *o.theta);
  if (o.no_null_step) overrides.emplace_back("null_step", false);
  if (!o.beta_range.empty()) overrides.emplace_back("beta_range", o.beta_range);
  if (o.warm_start_agd) overrides.emplace_back("warm_start_agd", true);
  for (const auto& [key, value] : overrides) {
    RunConfig probe;
    apply_parameter(probe, key, value, 1.0);
    for (auto& a : config.algorithms) {
      if (!parameter_applies(a.algorithm, key)) continue;
      auto it = std::find_if(a.grid.begin(), a.grid.end(), [&](const auto& e) { return e.first == key; });
      if (it == a.grid.end()) {
        a.grid.emplace_back(key, std::vector<Json>{value});
      } else {
        it->second = {value};
      }
    }
  }
  if (o.budget) config.budget = *o.budget;
  if (o.tol) config.tol = *o.tol;
  if (o.seed) config.seeds = {*o.seed};
  if (!o.out.empty()) config.output_dir = o.out;
  return config;
}

int run_command(const RunOptions& o, bool grid_mode) {
  const BenchConfig config = config_from_options(o, grid_mode);
  const BenchResult result = run_bench(config, o.jobs);
  emit_outputs(config, result, {}, config.output_dir);
  if (grid_mode) {
    std::cout << "best configuration per problem (fewest oracles to solve, then lowest final |grad|_inf):\n";
    for (const auto& c : result.table.cells) {
      std::cout << "  " << c.problem << "  " << c.algorithm << "  seed " << c.seed << "  "
                << (c.solved ? "solved" : "unsolved") << "  oracles " << c.oracles << "  grad_inf "
                << format_double(c.final_grad_inf) << "  " << c.params.dump() << '\n';
    }
  }
  std::cout << "solved instances:\n";
  for (const auto& [name, count] : result.table.totals) std::cout << "  " << name << ' ' << count << '\n';
  std::cout << "wrote " << result.runs.size() << " runs to " << config.output_dir << '\n';
  return 0;
}

int demo_command(const DemoOptions& options, const std::string& out) {
  const auto series = run_demo(options);
  const fs::path dir(out);
  create_dir(dir);
  std::ostringstream wide;
  write_demo_csv(series, wide);
  write_text(dir / "demo.csv", wide.str());
  for (const auto& s : series) {
    write_text(dir / (s.name + ".csv"), trajectory_csv(s.trajectory));
    const auto& r = s.trajectory.records;
    double peak = r.front().f;
    for (const auto& rec : r) peak = std::max(peak, rec.f);
    std::cout << s.name << ": " << to_string(s.trajectory.status) << ", " << s.trajectory.iterations()
              << " iterations, f(x1) " << format_double(r.front().f) << ", max f " << format_double(peak)
              << ", final f " << format_double(r.back().f) << '\n';
  }
  std::cout << "wrote " << (dir / "demo.csv").string() << '\n';
  return 0;
}

int verify_command(std::uint64_t seed, const std::string& out) {
  const auto reports = verification_suite(seed);
  bool ok = true;
  Json list = Json::array();
  for (const auto& r : reports) {
    ok = ok && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  lhs " << format_double(r.lhs) << "  rhs "
              << format_double(r.rhs);
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ')';
    std::cout << '\n';
    list.push_back(check_to_json(r));
  }
  if (!out.empty()) {
    create_dir(out);
    Json summary;
    summary["checks"] = std::move(list);
    write_text(fs::path(out) / "verify.json", summary.dump(2) + "\n");
  }
  std::cout << (ok ? "all checks passed" : "some checks failed") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Hypergradient descent methods: benchmark harness, demos and verification"};
  app.require_subcommand(1);

  RunOptions run_opts;
  RunOptions grid_opts;
  auto* run_cmd = app.add_subcommand("run", "Run a benchmark configuration");
  add_run_options(run_cmd, run_opts);
  auto* grid_cmd = app.add_subcommand("grid", "Sweep the parameter grids and report the best configuration");
  add_run_options(grid_cmd, grid_opts);

  DemoOptions demo;
  std::string demo_out = "hypergrad-demo";
  auto* demo_cmd = app.add_subcommand("demo", "Toy-quadratic comparison of the methods");
  demo_cmd->add_option("--out", demo_out, "Output directory");
  demo_cmd->add_option("--seed", demo.seed, "Seed of the instance and the initial point");
  demo_cmd->add_option("--iterations", demo.iterations, "Iterations per method")->check(CLI::PositiveNumber);
  demo_cmd->add_option("--n", demo.n, "Dimension")->check(CLI::Range(2, 100000));
  demo_cmd->add_option("--cond", demo.cond, "Condition number")->check(CLI::Range(1.0, 1e300));

  std::uint64_t verify_seed = 0;
  std::string verify_out;
  auto* verify_cmd = app.add_subcommand("verify", "Run the property checks; exit 1 on any failure");
  verify_cmd->add_option("--seed", verify_seed, "Seed of the random instances");
  verify_cmd->add_option("--out", verify_out, "Directory for verify.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) return run_command(run_opts, false);
    if (*grid_cmd) return run_command(grid_opts, true);
    if (*demo_cmd) return demo_command(demo, demo_out);
    if (*verify_cmd) return verify_command(verify_seed, verify_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const LibsvmParseError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace hypergrad
