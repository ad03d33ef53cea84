#pragma once

#include "hypergrad/feedback.hpp"
#include "hypergrad/online.hpp"
#include "hypergrad/problems.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hypergrad {

enum class Algorithm { Hdm, HdmHb, HdmAgd, HdmBest, Gd, GdHb, AgdCvx, AgdScvx, Adam, AdaGrad };

std::string to_string(Algorithm algo);
/// Accepts the names produced by to_string ("hdm", "hdm-hb", "gd-hb", ...).
Algorithm parse_algorithm(const std::string& name);
const std::vector<Algorithm>& all_algorithms();
bool learns_preconditioner(Algorithm algo);

enum class RunStatus { Solved, BudgetExhausted, StationaryError, NumericalError };
std::string to_string(RunStatus status);

enum class BetaRange { Positive, Symmetric };  // [0, 0.9995] or [-0.9995, 0.9995]

/// Unset optionals are filled from the problem (mostly from L) by
/// resolve_config().
struct RunConfig {
  std::size_t max_grad_oracles = 1000;
  double tol_grad_inf = 1e-4;  // 0 runs until the budget is used up
  std::uint64_t seed = 0;

  // Learned preconditioner P (HDM family).
  bool null_step = true;
  Shape p_shape = Shape::Diagonal;
  std::optional<LearnerKind> p_learner;        // AdaGrad for HDM-Best, OGD otherwise
  std::optional<StepsizeSchedule> p_schedule;  // OGD only; constant(eta_p) when unset
  std::optional<double> eta_p;                 // 1/L (HDM-Best: 10/L)
  std::optional<FeasibleSet> p_set;
  std::optional<ShapedMatrix> p_init;          // (1/L) I

  // Learned momentum B (HDM-HB, HDM-Best).
  Shape b_shape = Shape::Scalar;
  std::optional<LearnerKind> b_learner;
  std::optional<StepsizeSchedule> b_schedule;
  std::optional<double> eta_b;                 // OGD: L, AdaGrad: 5
  BetaRange beta_range = BetaRange::Positive;
  std::optional<FeasibleSet> b_set;
  std::optional<double> beta_init;             // HDM-Best 0.95, HDM-HB 0.5
  std::optional<HBConstants> hb;               // omega = 3L, tau = 16L^2
  std::optional<bool> drop_omega;              // true for HDM-Best only
  double learner_epsilon = 1e-12;

  // HDM-AGD.
  double theta = 0.5;
  bool warm_start_agd = false;

  // Baselines.
  double momentum = 0.9;               // GD-HB
  std::optional<double> stepsize;      // Adam / AdaGrad, default 1/L
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double adagrad_epsilon = 1e-10;

  // Recording.
  bool record_feedback_points = false;
  std::size_t snapshot_every = 0;  // 0: max(1, budget / 100)
};

/// Fills every unset optional for the given algorithm and problem and
/// validates the result; throws ConfigError on inconsistent settings.
RunConfig resolve_config(Algorithm algo, const ProblemOracle& oracle, RunConfig config);

/// Point at which a feedback function was evaluated (y for HDM-AGD).
struct FeedbackPoint {
  Vector x;
  Vector gx;
  std::optional<Vector> x_prev;
};

struct StepInfo {
  double h_value = std::numeric_limits<double>::quiet_NaN();  // NaN when the method has no feedback
  bool null_step = false;
  std::optional<FeedbackPoint> point;
};

// ---------------------------------------------------------------------------
// Single steps of the learned-preconditioner methods.
// ---------------------------------------------------------------------------

struct HdmState {
  Vector x;
  Vector gx;
  double fx = 0.0;
  LearnerState p;
  bool null_step = true;
};

/// One iteration: feedback at (x, P), accept x+ unless the null step rejects
/// it, then update P. Costs one gradient call.
StepInfo hdm_step(HdmState& state, const ProblemOracle& oracle);

struct MomentumState {
  Vector x;
  Vector x_prev;
  Vector gx;
  double fx = 0.0;
  LearnerState p;
  LearnerState b;
  HBConstants c{0.0, 0.0};
  bool null_step = true;
  bool drop_omega = false;
  double potential() const { return fx + 0.5 * c.omega * (x - x_prev).squaredNorm(); }
};

/// Heavy-ball step with null step on the potential psi: when rejected the
/// pair (x, x_prev) is kept.
StepInfo hdm_hb_step(MomentumState& state, const ProblemOracle& oracle);
/// Practical variant: null step on f, and a rejected step sets x_prev = x.
StepInfo hdm_best_step(MomentumState& state, const ProblemOracle& oracle);

/// A_{k+1} = A_k + (1 + sqrt(4 A_k + 1)) / 2, the positive root of
/// A_{k+1} = (A_{k+1} - A_k)^2.
double agd_sequence_next(double A);
/// v = max{1 / (2 max{-h, 1/(2L)}), L / (2 theta)}.
double agd_v(double h, double L, double theta);

struct AgdState {
  Vector x;
  double fx = 0.0;
  Vector z;
  double A = 1.0;       // A_k; A_1 = 1 follows from A_0 = 0
  std::size_t k = 1;
  double theta = 0.5;
  double L = 1.0;
  std::optional<LearnerState> p;  // unset: plain monotone AGD
  // Extrapolated point of the current iteration and its gradient.
  Vector y;
  Vector gy;
  bool y_ready = false;
  // Last known (point, gradient) pair, reused when y coincides with it.
  Vector cached_point;
  Vector cached_grad;
};

/// Computes y_k and grad f(y_k) if not done yet (reusing the cache when y_k
/// equals the cached point). Costs at most one gradient call.
void agd_prepare(AgdState& state, const ProblemOracle& oracle);
/// One HDM-AGD iteration (or plain AGD when state.p is unset).
StepInfo hdm_agd_step(AgdState& state, const ProblemOracle& oracle);

// ---------------------------------------------------------------------------
// Generic optimizer interface and the run loop.
// ---------------------------------------------------------------------------

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Initializes at x1; evaluates f and grad f there.
  virtual void start(const Vector& x1) = 0;
  /// Gradient used by the stopping test (grad f(y_k) for AGD-type methods).
  virtual const Vector& stop_gradient() = 0;
  /// Point whose gradient is stop_gradient().
  virtual const Vector& stop_point() const = 0;
  virtual StepInfo step() = 0;
  /// f at the current iterate.
  virtual double current_f() const = 0;
  virtual std::optional<double> potential() const { return std::nullopt; }
  virtual const ShapedMatrix* preconditioner() const { return nullptr; }
  virtual const ShapedMatrix* momentum() const { return nullptr; }
  /// A_k for AGD-type methods.
  virtual std::optional<double> agd_A() const { return std::nullopt; }
};

/// `oracle` must outlive the optimizer; `config` must be resolved.
std::unique_ptr<Optimizer> make_optimizer(Algorithm algo, const ProblemOracle& oracle, const RunConfig& config);

struct IterationRecord {
  std::size_t iter = 0;
  std::size_t grad_oracles = 0;
  double f = 0.0;
  std::optional<double> f_gap;
  double grad_inf = 0.0;
  double h_value = std::numeric_limits<double>::quiet_NaN();
  bool null_step = false;
  std::optional<double> potential;
  std::optional<double> agd_A;
};

struct Trajectory {
  Algorithm algorithm = Algorithm::Gd;
  RunStatus status = RunStatus::BudgetExhausted;
  std::string message;
  std::vector<IterationRecord> records;  // records[0] is the initial point
  std::vector<double> feedback_values;   // h at every step that evaluated feedback
  std::vector<FeedbackPoint> feedback_points;  // when requested
  std::vector<std::pair<std::size_t, ShapedMatrix>> p_snapshots;
  std::vector<std::pair<std::size_t, ShapedMatrix>> b_snapshots;
  std::optional<StepsizeSchedule> p_schedule;  // OGD preconditioner learner only
  std::optional<FeasibleSet> p_set;
  std::optional<HBConstants> hb;
  Vector x1;
  Vector final_x;
  std::size_t grad_oracles = 0;
  std::size_t fval_oracles = 0;

  std::size_t iterations() const { return records.empty() ? 0 : records.size() - 1; }
};

/// Seeded standard normal vector scaled to unit length.
Vector initial_point(Index dim, std::uint64_t seed);

/// Iterates until |grad|_inf <= tol (Solved) or the gradient budget is used
/// up (BudgetExhausted). Oracle errors end the run with the matching status
/// and keep the records gathered so far.
Trajectory run(Algorithm algo, const ProblemOracle& oracle, const RunConfig& config, const Vector& x1);

}  // namespace hypergrad
