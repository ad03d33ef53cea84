#include <doctest.h>

#include "hypergrad/bench.hpp"
#include "hypergrad/feedback.hpp"

#include <cmath>
#include <random>

using namespace hypergrad;

namespace {

Vector random_vec(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * normal(rng);
  return v;
}

ProblemOracle identity2() { return ProblemOracle::quadratic(Matrix::Identity(2, 2), Vector::Zero(2)); }

double h_value(const ProblemOracle& o, const Vector& x, const ShapedMatrix& P) {
  return hyper_feedback(o, x, o.gradient(x), P).h_value;
}

double hb_value(const ProblemOracle& o, const Vector& x, const Vector& x_prev, const ShapedMatrix& P,
                const ShapedMatrix& B, const HBConstants& c) {
  return hb_feedback(o, x, o.gradient(x), x_prev, P, B, c).h_value;
}

// Central differences in parameter coordinates.
Vector fd_param(const std::function<double(const ShapedMatrix&)>& h, const ShapedMatrix& P, double step) {
  const Vector c = P.coordinates();
  Vector out(c.size());
  for (Index i = 0; i < c.size(); ++i) {
    Vector p = c, m = c;
    p[i] += step;
    m[i] -= step;
    out[i] = (h(P.with_coordinates(p)) - h(P.with_coordinates(m))) / (2.0 * step);
  }
  return out;
}

double rel_err(const Vector& a, const Vector& fd) {
  return (a - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, inf_norm(fd));
}

}  // namespace

TEST_CASE("hypergradient feedback on the identity quadratic") {
  auto o = identity2();
  const Vector x = Eigen::Vector2d(1, 0);
  const auto s = hyper_feedback(o, x, o.gradient(x), ShapedMatrix::scalar(1.0));
  CHECK(s.h_value == doctest::Approx(-0.5));
  CHECK(s.candidate.norm() == 0.0);
  for (double a : {0.0, 0.3, 1.0, 1.7, 2.5}) {
    CHECK(h_value(o, x, ShapedMatrix::scalar(a)) == doctest::Approx((a * a - 2.0 * a) / 2.0));
  }
}

TEST_CASE("zero preconditioner gives zero feedback") {
  std::mt19937_64 rng(2);
  auto q = random_quadratic(5, 0.2, 3.0, 7);
  for (Shape s : {Shape::Scalar, Shape::Diagonal, Shape::Full}) {
    CHECK(h_value(q, random_vec(5, rng), ShapedMatrix::zero(s, 5)) == 0.0);
  }
}

TEST_CASE("safe stepsize guarantees descent of at least 1/(2L)") {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto q = random_quadratic(6, 0.1, 1.0 + static_cast<double>(seed), seed);
    const double L = q.smoothness();
    for (int trial = 0; trial < 10; ++trial) {
      CHECK(h_value(q, random_vec(6, rng), ShapedMatrix::scalar(1.0 / L)) <= -1.0 / (2.0 * L) + 1e-12);
    }
  }
}

TEST_CASE("stationary point is rejected") {
  auto o = identity2();
  CHECK_THROWS_AS(hyper_feedback(o, Vector::Zero(2), Vector::Zero(2), ShapedMatrix::scalar(1.0)),
                  StationaryPointError);
}

TEST_CASE("scalar hypergradient at zero") {
  auto o = identity2();
  const Vector x = Eigen::Vector2d(1, 0);
  const auto s = hyper_feedback(o, x, o.gradient(x), ShapedMatrix::scalar(0.0));
  CHECK(hyper_feedback_grad(s, Shape::Scalar).alpha() == doctest::Approx(-1.0));
}

TEST_CASE("hypergradients match finite differences") {
  std::mt19937_64 rng(8);
  const Index n = 5;
  for (Shape shape : {Shape::Scalar, Shape::Diagonal, Shape::Full}) {
    for (int trial = 0; trial < 50; ++trial) {
      auto q = random_quadratic(n, 0.2, 2.0, 100 + static_cast<std::uint64_t>(trial));
      const Vector x = random_vec(n, rng);
      const Vector gx = q.gradient(x);
      ShapedMatrix P = ShapedMatrix::identity_scaled(shape, n, 0.5);
      P = P.with_coordinates(P.coordinates() + random_vec(P.coordinates().size(), rng, 0.1));
      const auto s = hyper_feedback(q, x, gx, P);
      const Vector analytic = hyper_feedback_grad(s, shape).coordinates();
      const Vector fd = fd_param([&](const ShapedMatrix& p) { return hyper_feedback(q, x, gx, p).h_value; }, P, 1e-5);
      CHECK(rel_err(analytic, fd) <= 1e-6);
    }
  }
}

TEST_CASE("restricted gradients agree with the full gradient") {
  std::mt19937_64 rng(10);
  auto q = random_quadratic(4, 0.3, 2.0, 3);
  const Vector x = random_vec(4, rng);
  const auto s = hyper_feedback(q, x, q.gradient(x), ShapedMatrix::scalar(0.4));
  const Matrix full = hyper_feedback_grad(s, Shape::Full).matrix();
  const Vector diag = hyper_feedback_grad(s, Shape::Diagonal).diag();
  const double scalar = hyper_feedback_grad(s, Shape::Scalar).alpha();
  CHECK((full.diagonal() - diag).norm() <= 1e-14);
  CHECK(full.trace() == doctest::Approx(scalar).epsilon(1e-13));
}

TEST_CASE("feedback is convex in P") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto q = random_quadratic(4, 0.3, 2.0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = random_vec(4, rng);
    const auto a = ShapedMatrix::diagonal(random_vec(4, rng));
    const auto b = ShapedMatrix::diagonal(random_vec(4, rng));
    const double t = unit(rng);
    const auto mid = a.scaled(t).axpy(1.0 - t, b);
    CHECK(h_value(q, x, mid) <= t * h_value(q, x, a) + (1.0 - t) * h_value(q, x, b) + 1e-12);
  }
}

TEST_CASE("feedback gradient norm is bounded by L|P| + 1") {
  std::mt19937_64 rng(14);
  auto q = random_quadratic(4, 0.3, 2.0, 6);
  const double L = q.smoothness();
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = random_vec(4, rng);
    const auto P = ShapedMatrix::full(0.5 * Matrix::Identity(4, 4) + 0.1 * Matrix::Random(4, 4));
    const auto s = hyper_feedback(q, x, q.gradient(x), P);
    const double norm = hyper_feedback_grad(s, Shape::Full).frobenius_norm(4);
    CHECK(norm <= L * P.frobenius_norm(4) + 1.0 + 1e-12);
  }
}

TEST_CASE("heavy-ball feedback floor") {
  std::mt19937_64 rng(16);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto q = random_quadratic(6, 0.1, 2.0, seed);
    const double L = q.smoothness();
    const auto c = HBConstants::from_smoothness(L);
    for (int trial = 0; trial < 10; ++trial) {
      const Vector x = random_vec(6, rng);
      const Vector xp = x + random_vec(6, rng, 0.5);
      const double h = hb_value(q, x, xp, ShapedMatrix::scalar(1.0 / (4.0 * L)), ShapedMatrix::scalar(0.5), c);
      CHECK(h <= -1.0 / (8.0 * L) + 1e-12);
    }
  }
}

TEST_CASE("heavy-ball feedback special cases") {
  std::mt19937_64 rng(18);
  auto q = random_quadratic(5, 0.2, 3.0, 9);
  const auto c = HBConstants::from_smoothness(q.smoothness());
  const Vector x = random_vec(5, rng);
  CHECK(hb_value(q, x, x, ShapedMatrix::scalar(0.0), ShapedMatrix::scalar(0.0), c) == 0.0);
  CHECK_THROWS_AS(hb_feedback(q, Vector::Zero(5), Vector::Zero(5), Vector::Zero(5), ShapedMatrix::scalar(1.0),
                              ShapedMatrix::scalar(0.5), c),
                  StationaryPointError);
  CHECK_THROWS_AS(HBConstants({0.0, 0.0}).validate(), ConfigError);
}

TEST_CASE("heavy-ball feedback matches a direct evaluation") {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    auto q = random_quadratic(5, 0.2, 3.0, 200 + static_cast<std::uint64_t>(trial));
    const Matrix& A = q.hessian();
    const Vector& b = q.linear_term();
    const auto c = HBConstants{1.7, 2.9};
    const Vector x = random_vec(5, rng), xp = random_vec(5, rng);
    const Vector d = random_vec(5, rng, 0.3).cwiseAbs();
    const double beta = 0.4;
    auto f = [&](const Vector& u) { return 0.5 * u.dot(A * u) - b.dot(u); };
    const Vector g = A * x - b;
    const Vector xn = x - d.cwiseProduct(g) + beta * (x - xp);
    const double psi_new = f(xn) + 0.5 * c.omega * (xn - x).squaredNorm();
    const double psi_old = f(x) + 0.5 * c.omega * (x - xp).squaredNorm();
    const double expected = (psi_new - psi_old) / (g.squaredNorm() + 0.5 * c.tau * (x - xp).squaredNorm());
    CHECK(hb_value(q, x, xp, ShapedMatrix::diagonal(d), ShapedMatrix::scalar(beta), c) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("heavy-ball gradients match finite differences") {
  std::mt19937_64 rng(22);
  const Index n = 4;
  for (Shape shape : {Shape::Scalar, Shape::Diagonal, Shape::Full}) {
    for (bool drop : {false, true}) {
      for (int trial = 0; trial < 50; ++trial) {
        auto q = random_quadratic(n, 0.2, 2.0, 300 + static_cast<std::uint64_t>(trial));
        const auto c = HBConstants::from_smoothness(q.smoothness());
        // Dropping omega is only exact when omega = 0.
        const HBConstants cc = drop ? HBConstants{0.0, c.tau} : c;
        const Vector x = random_vec(n, rng), xp = random_vec(n, rng);
        const Vector gx = q.gradient(x);
        const auto P = ShapedMatrix::identity_scaled(shape, n, 0.3);
        const auto B = ShapedMatrix::identity_scaled(shape, n, 0.5);
        const auto s = hb_feedback(q, x, gx, xp, P, B, cc);
        const auto grads = hb_feedback_grad(s, cc, shape, shape, drop);
        const Vector fd_p = fd_param(
            [&](const ShapedMatrix& p) { return hb_feedback(q, x, gx, xp, p, B, cc).h_value; }, P, 1e-5);
        const Vector fd_b = fd_param(
            [&](const ShapedMatrix& bb) { return hb_feedback(q, x, gx, xp, P, bb, cc).h_value; }, B, 1e-5);
        CHECK(rel_err(grads.p.coordinates(), fd_p) <= 1e-6);
        CHECK(rel_err(grads.b.coordinates(), fd_b) <= 1e-6);
      }
    }
  }
}

TEST_CASE("momentum gradient vanishes without momentum") {
  std::mt19937_64 rng(24);
  auto q = random_quadratic(4, 0.2, 2.0, 1);
  const auto c = HBConstants::from_smoothness(q.smoothness());
  const Vector x = random_vec(4, rng);
  const auto s = hb_feedback(q, x, q.gradient(x), x, ShapedMatrix::scalar(0.3), ShapedMatrix::scalar(0.5), c);
  for (Shape shape : {Shape::Scalar, Shape::Diagonal, Shape::Full}) {
    CHECK(hb_feedback_grad(s, c, Shape::Scalar, shape).b.frobenius_norm(4) == 0.0);
  }
}

TEST_CASE("dropping omega is vacuous when omega is zero") {
  std::mt19937_64 rng(26);
  auto q = random_quadratic(4, 0.2, 2.0, 2);
  const HBConstants c{0.0, 5.0};
  const Vector x = random_vec(4, rng), xp = random_vec(4, rng);
  const auto s = hb_feedback(q, x, q.gradient(x), xp, ShapedMatrix::scalar(0.3), ShapedMatrix::scalar(0.5), c);
  const auto a = hb_feedback_grad(s, c, Shape::Diagonal, Shape::Scalar, false);
  const auto b = hb_feedback_grad(s, c, Shape::Diagonal, Shape::Scalar, true);
  CHECK(a.p == b.p);
  CHECK(a.b == b.b);
}

TEST_CASE("heavy-ball feedback reduces to plain feedback without momentum") {
  std::mt19937_64 rng(28);
  auto q = random_quadratic(4, 0.2, 2.0, 4);
  const auto c = HBConstants::from_smoothness(q.smoothness());
  const Vector x = random_vec(4, rng);
  const auto P = ShapedMatrix::scalar(0.3);
  const double plain = h_value(q, x, P);
  const auto s = hb_feedback(q, x, q.gradient(x), x, P, ShapedMatrix::scalar(0.0), c, std::nullopt);
  const double omega_term = 0.5 * c.omega * (s.candidate - x).squaredNorm() / s.denom;
  CHECK(s.h_value - omega_term == doctest::Approx(plain).epsilon(1e-12));
}
