#include <doctest.h>

#include "hypergrad/bench.hpp"
#include "hypergrad/verify.hpp"

#include <cmath>
#include <random>

using namespace hypergrad;

namespace {

RunConfig budget(std::size_t grads, double tol = 0.0) {
  RunConfig c;
  c.max_grad_oracles = grads;
  c.tol_grad_inf = tol;
  return c;
}

}  // namespace

TEST_CASE("finite-difference checks pass for every feedback and shape") {
  for (FeedbackOp op : {FeedbackOp::Hyper, FeedbackOp::HeavyBallP, FeedbackOp::HeavyBallB}) {
    for (Shape s : {Shape::Scalar, Shape::Diagonal, Shape::Full}) {
      const auto r = fd_gradient_check(op, s);
      CHECK_MESSAGE(r.passed, r.name << " " << r.lhs);
    }
  }
  FdCheckOptions o;
  o.drop_omega = true;
  CHECK_FALSE(fd_gradient_check(FeedbackOp::HeavyBallP, Shape::Diagonal, o).passed);
}

TEST_CASE("perturbed gradients fail the finite-difference check") {
  FdCheckOptions o;
  o.perturbation = 1e-3;
  const auto r = fd_gradient_check(FeedbackOp::Hyper, Shape::Diagonal, o);
  CHECK_FALSE(r.passed);
  CHECK(r.margin < 0.0);
  CHECK(r.lhs > 1e-4);
  CHECK(r.lhs <= 1e-3 + 1e-6);
}

TEST_CASE("hindsight optimum of a single identity-quadratic point") {
  auto o = ProblemOracle::quadratic(Matrix::Identity(2, 2), Vector::Zero(2));
  const Vector x = Eigen::Vector2d(1, 0);
  const std::vector<FeedbackPoint> pts{{x, o.gradient(x), std::nullopt}};
  const auto h = hindsight_best(pts, o, ScalarInterval{0.0, 2.0});
  CHECK(h.best_param.alpha() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(h.gamma_star == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(h.lower_bound <= h.best_value);

  const auto zero = hindsight_best(pts, o, ScalarInterval{0.0, 0.0});
  CHECK(zero.best_value == 0.0);
}

TEST_CASE("hindsight optimum over a recorded run") {
  auto q = random_quadratic(6, 0.2, 3.0, 4, true);
  const double L = q.smoothness();
  RunConfig c = budget(41);
  c.p_shape = Shape::Diagonal;
  c.record_feedback_points = true;
  const auto t = run(Algorithm::Hdm, q, c, initial_point(6, 1));
  const FeasibleSet set = DiagonalNonneg::uniform(6, 2.0 / L);
  const auto h = hindsight_best(t.feedback_points, q, set);
  const double K = static_cast<double>(t.feedback_points.size());
  // The set contains (1/L) I, whose feedback is at most -1/(2L) everywhere.
  CHECK(h.gamma_star >= 1.0 / (2.0 * L) - 1e-9);
  CHECK(h.best_value <= cumulative_feedback(t.feedback_points, q, ShapedMatrix::identity_scaled(Shape::Diagonal, 6, 1.0 / L)) + 1e-9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 2.0 / L);
  for (int i = 0; i < 200; ++i) {
    Vector d(6);
    for (Index j = 0; j < 6; ++j) d[j] = unit(rng);
    CHECK(h.lower_bound <= cumulative_feedback(t.feedback_points, q, ShapedMatrix::diagonal(d)) + 1e-9 * K);
  }
}

TEST_CASE("regret checks") {
  auto q = random_quadratic(8, 0.5, 4.0, 2, true);
  const double L = q.smoothness();
  const FeasibleSet set = DiagonalNonneg::uniform(8, 2.0 / L);
  const double D = diameter(set, 8);
  for (std::size_t K : {1, 50}) {
    RunConfig c = budget(K + 1);
    c.p_shape = Shape::Diagonal;
    c.p_set = set;
    c.p_schedule = StepsizeSchedule::horizon_constant(D, L, K);
    c.record_feedback_points = true;
    const auto t = run(Algorithm::Hdm, q, c, initial_point(8, 5));
    CHECK(t.feedback_values.size() == K);
    const auto h = hindsight_best(t.feedback_points, q, set);
    const auto r = regret_bound_check(t, h, D, L);
    CHECK_MESSAGE(r.passed, r.lhs << " vs " << r.rhs);
    CHECK_THROWS_AS(log_regret_bound_check(t, h, D, L, 0.5), ConfigError);
  }
  RunConfig c = budget(51);
  c.p_shape = Shape::Scalar;
  c.p_set = FeasibleSet(ScalarInterval{0.0, 2.0 / L});
  c.p_schedule = StepsizeSchedule::decaying(q.strong_convexity());
  c.record_feedback_points = true;
  const auto t = run(Algorithm::Hdm, q, c, initial_point(8, 6));
  const double Ds = diameter(*c.p_set, 8);
  const auto h = hindsight_best(t.feedback_points, q, *c.p_set);
  CHECK(log_regret_bound_check(t, h, Ds, L, q.strong_convexity()).passed);
}

TEST_CASE("reduction check") {
  auto q = random_quadratic(10, 0.1, 2.0, 3);
  const auto t = run(Algorithm::Hdm, q, budget(200), initial_point(10, 2));
  CHECK(reduction_check(t, q).passed);

  RunConfig frozen = budget(20);
  frozen.p_shape = Shape::Scalar;
  frozen.p_set = FeasibleSet(ScalarInterval{0.0, 0.0});
  const auto still = run(Algorithm::Hdm, q, frozen, initial_point(10, 2));
  for (double h : still.feedback_values) CHECK(h == 0.0);
  CHECK(reduction_check(still, q).passed);

  SparseDataset d;
  d.n_features = 1;
  d.rows = {{{1, 1.0}}};
  d.labels = {1.0};
  auto lg = ProblemOracle::logistic(d, 0.1);
  const auto lt = run(Algorithm::Hdm, lg, budget(5), Vector::Ones(1));
  CHECK_THROWS_AS(reduction_check(lt, lg), ConfigError);
}

TEST_CASE("superlinear metrics") {
  SUBCASE("inverse Hessian converges in one step") {
    auto q = random_quadratic(10, 0.2, 2.0, 7);
    const Matrix A_inv = q.hessian().inverse();
    RunConfig c = budget(2);
    c.p_shape = Shape::Full;
    c.p_init = ShapedMatrix::full(A_inv);
    c.p_set = FeasibleSet(FullFrobeniusBall{A_inv, 1.0});
    const auto t = run(Algorithm::Hdm, q, c, initial_point(10, 1));
    const auto m = superlinear_metrics(t, *q.optimal_value());
    REQUIRE_FALSE(m.ratios.empty());
    CHECK(m.ratios[0] <= 1e-12);
  }
  SUBCASE("gradient descent has a constant rate") {
    auto q = random_quadratic(20, 0.1, 1.0, 3, true);
    const auto t = run(Algorithm::Gd, q, budget(301), initial_point(20, 2));
    const auto m = superlinear_metrics(t, 0.0);
    const auto w = window_geomeans(m.ratios, 3);
    REQUIRE(w.size() == 3);
    CHECK(w[2] >= w[0]);
    CHECK(w[2] <= 0.81 + 1e-9);
    CHECK(w[2] >= 0.75);
  }
  SUBCASE("windows and truncation") {
    const auto w = window_geomeans({0.5, 0.5, 0.25, 0.25, 0.1, 0.1}, 3);
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(0.25));
    CHECK(w[2] == doctest::Approx(0.1));
    Trajectory t;
    for (double f : {1.0, 0.5, 0.0, 0.0}) {
      IterationRecord r;
      r.f = f;
      t.records.push_back(r);
    }
    const auto m = superlinear_metrics(t, 0.0);
    REQUIRE(m.ratios.size() == 2);
    CHECK(m.ratios[0] == 0.5);
    CHECK(m.ratios[1] == 0.0);
    CHECK(superlinear_metrics(t, 0.0, 0.6).ratios.size() == 1);
  }
}

TEST_CASE("preconditioner distance traces") {
  auto q = random_quadratic(8, 0.3, 2.0, 5, true);
  const Matrix A_inv = q.hessian().inverse();
  SUBCASE("starting at the inverse") {
    RunConfig c = budget(50);
    c.p_shape = Shape::Full;
    c.p_init = ShapedMatrix::full(A_inv);
    c.snapshot_every = 1;
    const auto t = run(Algorithm::Hdm, q, c, initial_point(8, 3));
    for (double d : precond_distance_trace(t, A_inv)) CHECK(d <= 1e-10);
  }
  SUBCASE("starting at zero") {
    RunConfig c = budget(10);
    c.p_shape = Shape::Full;
    c.p_init = ShapedMatrix::zero(Shape::Full, 8);
    const auto t = run(Algorithm::Hdm, q, c, initial_point(8, 3));
    CHECK(precond_distance_trace(t, A_inv)[0] == doctest::Approx(A_inv.norm()));
  }
  SUBCASE("rotating gradients") {
    const auto d = rotating_gradient_trace(q, RunConfig{}, 2, 3);
    CHECK(d.size() == 17);
    CHECK(d.back() <= 0.5 * d.front());
  }
  SUBCASE("missing snapshots") {
    const auto t = run(Algorithm::Gd, q, budget(5), initial_point(8, 3));
    CHECK_THROWS_AS(precond_distance_trace(t, A_inv), ConfigError);
  }
}

TEST_CASE("heavy-ball hindsight floor") {
  auto q = random_quadratic(10, 0.1, 2.0, 8);
  RunConfig c = budget(100);
  c.record_feedback_points = true;
  const auto t = run(Algorithm::HdmHb, q, c, initial_point(10, 2));
  const auto hb = HBConstants::from_smoothness(q.smoothness());
  CHECK(hb_hindsight_floor_check(t, q, hb).passed);

  RunConfig one = budget(2);
  one.record_feedback_points = true;
  const auto t1 = run(Algorithm::HdmHb, q, one, initial_point(10, 2));
  CHECK(t1.feedback_points.size() == 1);
  CHECK(hb_hindsight_floor_check(t1, q, hb).passed);

  CHECK_THROWS_AS(hb_hindsight_floor_check(t, q, HBConstants{0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(hb_hindsight_floor_check(t, q, HBConstants{1.0, 1.0}), ConfigError);
}

TEST_CASE("agd sequence check on a run") {
  auto q = toy_quadratic(10, 1e3, 1);
  CHECK(agd_sequence_check(run(Algorithm::AgdCvx, q, budget(100), initial_point(10, 0))).passed);
  CHECK(agd_sequence_check(run(Algorithm::HdmAgd, q, budget(100), initial_point(10, 0))).passed);
}

TEST_CASE("dynamic regret against the played sequence is zero") {
  auto q = random_quadratic(5, 0.3, 2.0, 2);
  RunConfig c = budget(21);
  c.p_shape = Shape::Scalar;
  c.snapshot_every = 1;
  c.record_feedback_points = true;
  const auto t = run(Algorithm::Hdm, q, c, initial_point(5, 1));
  std::vector<ShapedMatrix> played;
  for (std::size_t k = 0; k + 1 < t.p_snapshots.size(); ++k) played.push_back(t.p_snapshots[k].second);
  REQUIRE(played.size() == t.feedback_values.size());
  const auto r = dynamic_regret(t, q, played);
  CHECK(std::abs(r.regret) <= 1e-12);
  CHECK(r.path_length >= 0.0);
}

TEST_CASE("monotonicity check detects increases") {
  Trajectory t;
  IterationRecord a, b;
  a.f = 1.0;
  b.f = 2.0;
  t.records = {a, b};
  CHECK_FALSE(monotonicity_check(t).passed);
  t.records = {b, a};
  CHECK(monotonicity_check(t).passed);
}

TEST_CASE("reports") {
  const auto r = make_report("x", 1.0, 2.0, 0.0);
  CHECK(r.passed);
  CHECK(r.margin == 1.0);
  CHECK_FALSE(make_report("y", 2.0, 1.0, 0.5).passed);
  CHECK(make_report("z", 1.2, 1.0, 0.5).passed);
}
