#pragma once

#include "hypergrad/optim.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hypergrad {

/// Outcome of one inequality check lhs <= rhs (+ tolerance).
struct CheckReport {
  std::string name;
  bool passed = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs; negative when violated
  std::string detail;
};

CheckReport make_report(std::string name, double lhs, double rhs, double tolerance, std::string detail = {});

// ---------------------------------------------------------------------------
// Finite-difference gradient checks.
// ---------------------------------------------------------------------------

/// max_i |a_i - fd_i| / max(1, |fd|_inf) for central differences of `value`
/// around `c` with step `step`.
double fd_relative_error(const std::function<double(const Vector&)>& value, const Vector& analytic,
                         const Vector& c, double step);

enum class FeedbackOp { Hyper, HeavyBallP, HeavyBallB };
std::string to_string(FeedbackOp op);

struct FdCheckOptions {
  std::size_t samples = 50;
  double tol = 1e-6;
  std::uint64_t seed = 1;
  Index dim = 6;
  /// Added to every analytic gradient coordinate (negative controls).
  double perturbation = 0.0;
  bool drop_omega = false;
};

/// Analytic feedback gradients against central differences of the feedback
/// value, over random quadratics, points and parameters of the given shape.
CheckReport fd_gradient_check(FeedbackOp op, Shape shape, const FdCheckOptions& options = {});

// ---------------------------------------------------------------------------
// Hindsight optimum of the cumulative feedback.
// ---------------------------------------------------------------------------

struct HindsightOptions {
  double step_tol = 1e-10;
  std::size_t max_iterations = 10000;
};

struct HindsightResult {
  ShapedMatrix best_param = ShapedMatrix::scalar(0.0);
  double best_value = 0.0;   // G at best_param (an upper bound on the minimum)
  double lower_bound = 0.0;  // best_value minus the Frank-Wolfe gap (a lower bound on the minimum)
  double gamma_star = 0.0;   // -best_value / K
  std::size_t iterations = 0;
  bool approximate = false;  // iteration cap hit before the step tolerance
};

/// Minimizes G(P) = sum_k h_{x^k}(P) over the set by accelerated projected
/// gradient with backtracking, re-querying the oracle at x^k - P g^k.
HindsightResult hindsight_best(const std::vector<FeedbackPoint>& points, const ProblemOracle& oracle,
                               const FeasibleSet& set, const HindsightOptions& options = {});

/// sum_k h_{x^k}(P) for a fixed P.
double cumulative_feedback(const std::vector<FeedbackPoint>& points, const ProblemOracle& oracle,
                           const ShapedMatrix& P);

// ---------------------------------------------------------------------------
// Trajectory checks.
// ---------------------------------------------------------------------------

/// Regret of a horizon-constant OGD run against D (L D + 1) sqrt(K). The
/// regret is measured against the hindsight lower bound, so a pass is sound
/// even when the hindsight solve is inexact.
CheckReport regret_bound_check(const Trajectory& trajectory, const HindsightResult& hindsight, double D, double L);

/// Regret of a 1/(k mu) OGD run against ((L D + 1)^2 / (2 mu)) (ln K + 1).
CheckReport log_regret_bound_check(const Trajectory& trajectory, const HindsightResult& hindsight, double D,
                                   double L, double mu);

/// Both reduction bounds (sublinear with Delta and linear with mu) at every
/// prefix of an HDM run on a strongly convex quadratic. Delta is replaced by
/// its upper bound sqrt(2 (f(x1) - f*) / mu).
CheckReport reduction_check(const Trajectory& trajectory, const ProblemOracle& oracle);

/// Potential bound of the heavy-ball method on a strongly convex quadratic:
/// psi(x^{K+1}, x^K) - f* <= gap1 / (1 + V sum_k max(-h_k, 0)),
/// V = min{gap1 / (4 Delta^2), tau / (4 omega)}.
CheckReport hb_potential_check(const Trajectory& trajectory, const ProblemOracle& oracle);

/// Gap contraction ratios r_k = (f(x^{k+1}) - f*) / (f(x^k) - f*).
struct SuperlinearMetrics {
  std::vector<double> ratios;
  std::vector<std::size_t> iters;  // iteration index k of each ratio
};

/// Ratios over consecutive records; the sequence stops at the first gap that
/// is <= floor. Null steps are skipped when skip_null_steps is set.
SuperlinearMetrics superlinear_metrics(const Trajectory& trajectory, double f_star, double floor = 0.0,
                                       bool skip_null_steps = true);

/// Geometric mean of each of `windows` contiguous chunks of the ratios.
std::vector<double> window_geomeans(const std::vector<double>& ratios, std::size_t windows);

/// |P_k - A_inv|_F for every recorded preconditioner snapshot.
std::vector<double> precond_distance_trace(const Trajectory& trajectory, const Matrix& A_inv);

/// Full-matrix HDM restarted at x = A^{-1} e_j (so that the first gradient
/// of episode j is e_j) for j = 1..n, `rounds` times over, with P carried
/// from one episode to the next. Needs a quadratic with b = 0. Returns
/// |P - A^{-1}|_F before the first episode and after every episode.
std::vector<double> rotating_gradient_trace(const ProblemOracle& quadratic, const RunConfig& config,
                                            std::size_t rounds, std::size_t steps_per_episode);

/// Average heavy-ball feedback at the fixed pair (1/(4L) I, 1/2 I) over the
/// recorded points must be <= -1/(8L). Requires omega = 3L and tau = 16L^2.
CheckReport hb_hindsight_floor_check(const Trajectory& trajectory, const ProblemOracle& oracle,
                                     const HBConstants& c);

/// f (or psi when recorded) nonincreasing over all records.
CheckReport monotonicity_check(const Trajectory& trajectory);

/// A_k >= k^2/4 and A_{k+1} - A_k <= k + 1 at every record of an AGD-type run.
CheckReport agd_sequence_check(const Trajectory& trajectory);

/// Reporting-only dynamic regret against a competitor sequence Q_1..Q_K.
struct DynamicRegretReport {
  double regret = 0.0;       // sum_k h(P_k) - sum_k h(Q_k)
  double path_length = 0.0;  // sum_k |Q_{k+1} - Q_k|_F
};
DynamicRegretReport dynamic_regret(const Trajectory& trajectory, const ProblemOracle& oracle,
                                   const std::vector<ShapedMatrix>& competitors);

}  // namespace hypergrad
