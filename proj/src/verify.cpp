#include "hypergrad/verify.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace hypergrad {

CheckReport make_report(std::string name, double lhs, double rhs, double tolerance, std::string detail) {
  CheckReport r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.margin = rhs - lhs;
  r.passed = std::isfinite(lhs) && std::isfinite(rhs) && lhs <= rhs + tolerance;
  r.detail = std::move(detail);
  return r;
}

// ---------------------------------------------------------------------------
// Finite differences.
// ---------------------------------------------------------------------------

double fd_relative_error(const std::function<double(const Vector&)>& value, const Vector& analytic,
                         const Vector& c, double step) {
  if (analytic.size() != c.size()) throw DimensionError("fd_relative_error: gradient length mismatch");
  Vector fd(c.size());
  Vector probe = c;
  for (Index i = 0; i < c.size(); ++i) {
    probe[i] = c[i] + step;
    const double up = value(probe);
    probe[i] = c[i] - step;
    const double down = value(probe);
    probe[i] = c[i];
    fd[i] = (up - down) / (2.0 * step);
  }
  return (analytic - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, inf_norm(fd));
}

std::string to_string(FeedbackOp op) {
  switch (op) {
    case FeedbackOp::Hyper: return "hypergradient";
    case FeedbackOp::HeavyBallP: return "heavy-ball-P";
    case FeedbackOp::HeavyBallB: return "heavy-ball-B";
  }
  return "unknown";
}

namespace {

Matrix random_spd(Index n, std::mt19937_64& rng, double lo, double hi) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(lo, hi);
  Matrix G(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) G(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  const Matrix Q = qr.householderQ();
  Vector eig(n);
  for (Index i = 0; i < n; ++i) eig[i] = uni(rng);
  return Q * eig.asDiagonal() * Q.transpose();
}

Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

ShapedMatrix random_param(Shape shape, Index n, std::mt19937_64& rng, double center, double spread) {
  std::uniform_real_distribution<double> uni(center - spread, center + spread);
  switch (shape) {
    case Shape::Scalar: return ShapedMatrix::scalar(uni(rng));
    case Shape::Diagonal: {
      Vector d(n);
      for (Index i = 0; i < n; ++i) d[i] = uni(rng);
      return ShapedMatrix::diagonal(d);
    }
    case Shape::Full: {
      Matrix m = center * Matrix::Identity(n, n);
      std::normal_distribution<double> normal(0.0, spread / std::sqrt(static_cast<double>(n)));
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) m(i, j) += normal(rng);
      return ShapedMatrix::full(m);
    }
  }
  throw ConfigError("bad shape");
}

}  // namespace

CheckReport fd_gradient_check(FeedbackOp op, Shape shape, const FdCheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> uni(0.5, 5.0);
  double worst = 0.0;
  for (std::size_t s = 0; s < o.samples; ++s) {
    const Index n = o.dim;
    const ProblemOracle oracle = ProblemOracle::quadratic(random_spd(n, rng, 0.2, 4.0), random_vector(n, rng));
    const double L = oracle.smoothness();
    const Vector x = random_vector(n, rng);
    const Vector gx = oracle.gradient(x);
    const Vector x_prev = x + random_vector(n, rng, 0.5);
    const HBConstants c{uni(rng) * L, uni(rng) * L * L};

    double err = 0.0;
    if (op == FeedbackOp::Hyper) {
      const ShapedMatrix P = random_param(shape, n, rng, 0.5 / L, 0.5 / L);
      const Vector analytic = hyper_feedback_grad(hyper_feedback(oracle, x, gx, P), shape).coordinates();
      auto value = [&](const Vector& coords) {
        return hyper_feedback(oracle, x, gx, P.with_coordinates(coords)).h_value;
      };
      const Vector c0 = P.coordinates();
      err = fd_relative_error(value, analytic + Vector::Constant(analytic.size(), o.perturbation), c0,
                              1e-5 * (1.0 + inf_norm(c0)));
    } else {
      const bool vary_p = op == FeedbackOp::HeavyBallP;
      const Shape p_shape = vary_p ? shape : Shape::Diagonal;
      const Shape b_shape = vary_p ? Shape::Scalar : shape;
      const ShapedMatrix P = random_param(p_shape, n, rng, 0.5 / L, 0.5 / L);
      const ShapedMatrix B = random_param(b_shape, n, rng, 0.5, 0.4);
      const auto sample = hb_feedback(oracle, x, gx, x_prev, P, B, c);
      const auto grads = hb_feedback_grad(sample, c, p_shape, b_shape, o.drop_omega);
      const Vector analytic = (vary_p ? grads.p : grads.b).coordinates();
      const ShapedMatrix& varied = vary_p ? P : B;
      auto value = [&](const Vector& coords) {
        const ShapedMatrix moved = varied.with_coordinates(coords);
        return vary_p ? hb_feedback(oracle, x, gx, x_prev, moved, B, c).h_value
                      : hb_feedback(oracle, x, gx, x_prev, P, moved, c).h_value;
      };
      const Vector c0 = varied.coordinates();
      err = fd_relative_error(value, analytic + Vector::Constant(analytic.size(), o.perturbation), c0,
                              1e-5 * (1.0 + inf_norm(c0)));
    }
    worst = std::max(worst, err);
  }
  std::ostringstream detail;
  detail << o.samples << " samples, dim " << o.dim;
  return make_report("fd-gradient " + to_string(op) + " " + to_string(shape), worst, o.tol, 0.0, detail.str());
}

// ---------------------------------------------------------------------------
// Hindsight.
// ---------------------------------------------------------------------------

namespace {

class CumulativeFeedback {
 public:
  CumulativeFeedback(const std::vector<FeedbackPoint>& points, const ProblemOracle& oracle)
      : points_(points), oracle_(oracle) {
    f_.reserve(points.size());
    for (const auto& p : points) f_.push_back(oracle.value(p.x));
  }

  double value(const ShapedMatrix& P) const {
    double total = 0.0;
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const auto& p = points_[k];
      total += (oracle_.value(p.x - P.apply(p.gx)) - f_[k]) / p.gx.squaredNorm();
    }
    return total;
  }

  double value_and_grad(const ShapedMatrix& P, Vector& grad) const {
    double total = 0.0;
    grad = Vector::Zero(P.coordinates().size());
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const auto& p = points_[k];
      const FeedbackSample s = hyper_feedback(oracle_, p.x, p.gx, P, f_[k]);
      total += s.h_value;
      grad += hyper_feedback_grad(s, P.shape()).coordinates();
    }
    return total;
  }

 private:
  const std::vector<FeedbackPoint>& points_;
  const ProblemOracle& oracle_;
  std::vector<double> f_;
};

}  // namespace

double cumulative_feedback(const std::vector<FeedbackPoint>& points, const ProblemOracle& oracle,
                           const ShapedMatrix& P) {
  return CumulativeFeedback(points, oracle).value(P);
}

HindsightResult hindsight_best(const std::vector<FeedbackPoint>& points, const ProblemOracle& oracle,
                               const FeasibleSet& set, const HindsightOptions& options) {
  const Index n = oracle.dim();
  const double L = oracle.smoothness();
  HindsightResult result;
  if (points.empty()) throw ConfigError("hindsight_best needs at least one feedback point");
  const CumulativeFeedback G(points, oracle);
  const auto K = static_cast<double>(points.size());

  ShapedMatrix P = project(ShapedMatrix::identity_scaled(set.shape(), n, 1.0 / L), set);
  Vector grad;
  double g_value = G.value_and_grad(P, grad);
  ShapedMatrix Y = P;
  Vector grad_y = grad;
  double y_value = g_value;
  double t = 1.0;
  double s = 1.0 / (K * L);
  bool converged = false;
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    ShapedMatrix next = P;
    double next_value = 0.0;
    for (int bt = 0; bt < 200; ++bt) {
      next = project(Y.with_coordinates(Y.coordinates() - s * grad_y), set);
      next_value = G.value(next);
      const Vector d = next.coordinates() - Y.coordinates();
      if (next_value <= y_value + grad_y.dot(d) + d.squaredNorm() / (2.0 * s) + 1e-14 * std::abs(y_value)) break;
      s *= 0.5;
    }
    if (next_value > g_value) {
      if (t == 1.0) {
        // No decrease even from the anchor: stationary up to rounding.
        converged = true;
        break;
      }
      // Momentum overshoot: restart from the last accepted point.
      t = 1.0;
      Y = P;
      y_value = G.value_and_grad(Y, grad_y);
      continue;
    }
    const Vector step = next.coordinates() - P.coordinates();
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    Y = next.with_coordinates(next.coordinates() + ((t - 1.0) / t_next) * step);
    P = std::move(next);
    g_value = next_value;
    t = t_next;
    if (step.norm() <= options.step_tol * (1.0 + P.coordinates().norm())) {
      converged = true;
      break;
    }
    y_value = G.value_and_grad(Y, grad_y);
    s *= 1.25;
  }
  g_value = G.value_and_grad(P, grad);
  const double gap = std::max(0.0, max_linear_decrease(ShapedMatrix(P.with_coordinates(grad)), P, set, n));
  result.best_param = P;
  result.best_value = g_value;
  result.lower_bound = g_value - gap;
  result.gamma_star = -g_value / K;
  result.iterations = it;
  result.approximate = !converged;
  return result;
}

// ---------------------------------------------------------------------------
// Trajectory checks.
// ---------------------------------------------------------------------------

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void require_schedule(const Trajectory& t, StepsizeSchedule::Kind kind) {
  if (!t.p_schedule || t.p_schedule->kind() != kind) {
    throw ConfigError("regret check expects a " + to_string(kind) + " OGD schedule");
  }
}

struct QuadraticGap {
  double f_star;
  double gap1;
  double mu;
  double tol;
};

QuadraticGap quadratic_gap(const Trajectory& t, const ProblemOracle& oracle) {
  if (oracle.kind() != ProblemKind::Quadratic || !oracle.optimal_value()) {
    throw ConfigError("check needs a strongly convex quadratic with known f*");
  }
  if (t.records.empty()) throw ConfigError("empty trajectory");
  QuadraticGap q{};
  q.f_star = *oracle.optimal_value();
  q.gap1 = t.records.front().f - q.f_star;
  q.mu = oracle.strong_convexity();
  // f - f* near the optimum carries rounding error proportional to |f|.
  q.tol = 1e-12 * std::max({1.0, std::abs(q.f_star), std::abs(t.records.front().f)});
  return q;
}

}  // namespace

CheckReport regret_bound_check(const Trajectory& t, const HindsightResult& hindsight, double D, double L) {
  require_schedule(t, StepsizeSchedule::Kind::HorizonConstant);
  const std::size_t K = t.feedback_values.size();
  const double lhs = measured_regret(t.feedback_values, hindsight.lower_bound);
  const double rhs = horizon_regret_bound(D, L, K);
  std::ostringstream detail;
  detail << "K=" << K << " regret vs hindsight value " << measured_regret(t.feedback_values, hindsight.best_value);
  return make_report("regret-horizon-constant", lhs, rhs, 1e-8, detail.str());
}

CheckReport log_regret_bound_check(const Trajectory& t, const HindsightResult& hindsight, double D, double L,
                                   double mu) {
  require_schedule(t, StepsizeSchedule::Kind::Decaying);
  const std::size_t K = t.feedback_values.size();
  const double lhs = measured_regret(t.feedback_values, hindsight.lower_bound);
  const double rhs = decaying_regret_bound(D, L, mu, K);
  std::ostringstream detail;
  detail << "K=" << K;
  return make_report("regret-decaying", lhs, rhs, 1e-8, detail.str());
}

CheckReport reduction_check(const Trajectory& t, const ProblemOracle& oracle) {
  const QuadraticGap q = quadratic_gap(t, oracle);
  if (!(q.mu > 0.0)) throw ConfigError("reduction check needs mu > 0");
  const double delta_sq = 2.0 * q.gap1 / q.mu;
  double worst_margin = std::numeric_limits<double>::infinity();
  double worst_lhs = 0.0, worst_rhs = 0.0;
  std::size_t worst_k = 0;
  double neg_h_sum = 0.0;
  for (std::size_t K = 0; K < t.records.size(); ++K) {
    const auto& rec = t.records[K];
    if (K > 0) {
      if (std::isnan(rec.h_value)) throw ConfigError("reduction check needs a feedback value at every step");
      neg_h_sum -= rec.h_value;
    }
    const double lhs = rec.f - q.f_star;
    double sublinear = q.gap1;
    double linear = q.gap1;
    if (K > 0) {
      const double avg = std::max(neg_h_sum / static_cast<double>(K), 0.0);
      if (avg > 0.0) sublinear = std::min(delta_sq / (static_cast<double>(K) * avg), q.gap1);
      linear = q.gap1 * std::pow(std::max(1.0 - 2.0 * q.mu * avg, 0.0), static_cast<double>(K));
    }
    for (double rhs : {sublinear, linear}) {
      if (rhs - lhs < worst_margin) {
        worst_margin = rhs - lhs;
        worst_lhs = lhs;
        worst_rhs = rhs;
        worst_k = K;
      }
    }
  }
  std::ostringstream detail;
  detail << "tightest prefix K=" << worst_k << " of " << t.records.size() - 1;
  return make_report("reduction", worst_lhs, worst_rhs, q.tol, detail.str());
}

CheckReport hb_potential_check(const Trajectory& t, const ProblemOracle& oracle) {
  const QuadraticGap q = quadratic_gap(t, oracle);
  if (!t.hb) throw ConfigError("potential check needs the heavy-ball constants of the run");
  t.hb->validate();
  const double delta_sq = 2.0 * q.gap1 / q.mu;
  const double V = std::min(q.gap1 / (4.0 * delta_sq), t.hb->tau / (4.0 * t.hb->omega));
  double worst_margin = std::numeric_limits<double>::infinity();
  double worst_lhs = 0.0, worst_rhs = 0.0;
  double acc = 0.0;
  for (std::size_t K = 0; K < t.records.size(); ++K) {
    const auto& rec = t.records[K];
    if (!rec.potential) throw ConfigError("potential check needs recorded potentials");
    if (K > 0) acc += std::max(-rec.h_value, 0.0);
    const double lhs = *rec.potential - q.f_star;
    const double rhs = q.gap1 / (1.0 + V * acc);
    if (rhs - lhs < worst_margin) {
      worst_margin = rhs - lhs;
      worst_lhs = lhs;
      worst_rhs = rhs;
    }
  }
  return make_report("hb-potential", worst_lhs, worst_rhs, q.tol);
}

SuperlinearMetrics superlinear_metrics(const Trajectory& t, double f_star, double floor, bool skip_null_steps) {
  SuperlinearMetrics m;
  for (std::size_t k = 0; k + 1 < t.records.size(); ++k) {
    const double gap = t.records[k].f - f_star;
    if (!(gap > floor) || !(gap > 0.0)) break;
    if (skip_null_steps && t.records[k + 1].null_step) continue;
    m.ratios.push_back(std::max(t.records[k + 1].f - f_star, 0.0) / gap);
    m.iters.push_back(k + 1);
  }
  return m;
}

std::vector<double> window_geomeans(const std::vector<double>& ratios, std::size_t windows) {
  if (windows == 0 || ratios.size() < windows) throw ConfigError("not enough ratios for the requested windows");
  std::vector<double> out;
  const std::size_t n = ratios.size();
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t lo = w * n / windows;
    const std::size_t hi = (w + 1) * n / windows;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += std::log(std::max(ratios[i], 1e-300));
    out.push_back(std::exp(acc / static_cast<double>(hi - lo)));
  }
  return out;
}

std::vector<double> precond_distance_trace(const Trajectory& t, const Matrix& A_inv) {
  if (t.p_snapshots.empty()) throw ConfigError("trajectory has no preconditioner snapshots");
  std::vector<double> out;
  out.reserve(t.p_snapshots.size());
  for (const auto& [iter, P] : t.p_snapshots) out.push_back((P.dense(A_inv.rows()) - A_inv).norm());
  return out;
}

std::vector<double> rotating_gradient_trace(const ProblemOracle& quadratic, const RunConfig& config,
                                            std::size_t rounds, std::size_t steps_per_episode) {
  if (quadratic.kind() != ProblemKind::Quadratic || !quadratic.minimizer() ||
      quadratic.linear_term().norm() != 0.0) {
    throw ConfigError("rotating-gradient trace needs a positive definite quadratic with b = 0");
  }
  if (steps_per_episode == 0) throw ConfigError("steps_per_episode must be >= 1");
  const Index n = quadratic.dim();
  const Matrix A_inv = quadratic.hessian().inverse();
  RunConfig c = config;
  c.p_shape = Shape::Full;
  c.max_grad_oracles = steps_per_episode + 1;
  c.tol_grad_inf = 0.0;
  c.snapshot_every = steps_per_episode;
  c = resolve_config(Algorithm::Hdm, quadratic, c);
  std::vector<double> out{(c.p_init->dense(n) - A_inv).norm()};
  for (std::size_t r = 0; r < rounds; ++r) {
    for (Index j = 0; j < n; ++j) {
      const Trajectory t = run(Algorithm::Hdm, quadratic, c, A_inv.col(j));
      if (t.p_snapshots.empty()) throw NumericalError("episode recorded no preconditioner");
      c.p_init = t.p_snapshots.back().second;
      out.push_back((c.p_init->dense(n) - A_inv).norm());
    }
  }
  return out;
}

CheckReport hb_hindsight_floor_check(const Trajectory& t, const ProblemOracle& oracle, const HBConstants& c) {
  c.validate();
  const double L = oracle.smoothness();
  const double rel = 1e-12;
  if (std::abs(c.omega - 3.0 * L) > rel * 3.0 * L || std::abs(c.tau - 16.0 * L * L) > rel * 16.0 * L * L) {
    throw ConfigError("hindsight floor needs omega = 3L and tau = 16L^2");
  }
  if (t.feedback_points.empty()) throw ConfigError("trajectory has no recorded feedback points");
  const auto P = ShapedMatrix::scalar(1.0 / (4.0 * L));
  const auto B = ShapedMatrix::scalar(0.5);
  double total = 0.0;
  for (const auto& p : t.feedback_points) {
    if (!p.x_prev) throw ConfigError("hindsight floor needs heavy-ball feedback points");
    total += hb_feedback(oracle, p.x, p.gx, *p.x_prev, P, B, c).h_value;
  }
  const double avg = total / static_cast<double>(t.feedback_points.size());
  return make_report("hb-hindsight-floor", avg, -1.0 / (8.0 * L), 1e-10);
}

CheckReport monotonicity_check(const Trajectory& t) {
  const bool use_potential =
      !t.records.empty() && std::all_of(t.records.begin(), t.records.end(), [](const auto& r) { return r.potential.has_value(); });
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t at = 0;
  for (std::size_t k = 1; k < t.records.size(); ++k) {
    const double prev = use_potential ? *t.records[k - 1].potential : t.records[k - 1].f;
    const double cur = use_potential ? *t.records[k].potential : t.records[k].f;
    if (cur - prev > worst) {
      worst = cur - prev;
      at = k;
    }
  }
  if (t.records.size() < 2) worst = 0.0;
  std::ostringstream detail;
  detail << (use_potential ? "potential" : "f") << ", largest change at record " << at << " of "
         << t.records.size() - 1;
  return make_report("monotone " + to_string(t.algorithm), std::max(worst, 0.0), 0.0, 0.0, detail.str());
}

CheckReport agd_sequence_check(const Trajectory& t) {
  double worst = 0.0;
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    if (!t.records[i].agd_A) throw ConfigError("trajectory has no AGD sequence");
    const double k = static_cast<double>(i + 1);
    const double A = *t.records[i].agd_A;
    worst = std::max(worst, k * k / 4.0 - A);
    if (i + 1 < t.records.size()) worst = std::max(worst, (*t.records[i + 1].agd_A - A) - (k + 1.0));
  }
  return make_report("agd-sequence", worst, 0.0, 0.0);
}

DynamicRegretReport dynamic_regret(const Trajectory& t, const ProblemOracle& oracle,
                                   const std::vector<ShapedMatrix>& competitors) {
  if (competitors.size() != t.feedback_points.size() || t.feedback_points.size() != t.feedback_values.size()) {
    throw ConfigError("dynamic regret needs one competitor per recorded feedback point");
  }
  DynamicRegretReport r;
  double theirs = 0.0;
  for (std::size_t k = 0; k < competitors.size(); ++k) {
    const auto& p = t.feedback_points[k];
    theirs += hyper_feedback(oracle, p.x, p.gx, competitors[k]).h_value;
    if (k + 1 < competitors.size()) {
      r.path_length += competitors[k + 1].axpy(-1.0, competitors[k]).frobenius_norm(oracle.dim());
    }
  }
  r.regret = sum(t.feedback_values) - theirs;
  return r;
}

}  // namespace hypergrad
