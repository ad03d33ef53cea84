#include <doctest.h>

#include "hypergrad/bench.hpp"
#include "hypergrad/problems.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace hypergrad;

namespace {

SparseDataset random_dataset(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.6);
  SparseDataset d;
  d.n_features = n;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<SparseEntry> row;
    for (std::size_t j = 1; j <= n; ++j) {
      if (coin(rng)) row.push_back({static_cast<std::int64_t>(j), normal(rng)});
    }
    d.rows.push_back(row);
    d.labels.push_back(coin(rng) ? 1.0 : -1.0);
  }
  return d;
}

Matrix dense_design(const SparseDataset& d) {
  Matrix X = Matrix::Zero(static_cast<Index>(d.n_samples()), static_cast<Index>(d.n_features));
  for (std::size_t i = 0; i < d.n_samples(); ++i) {
    for (const auto& e : d.rows[i]) X(static_cast<Index>(i), e.index - 1) = e.value;
  }
  return X;
}

Vector random_vec(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

Vector central_difference(const ProblemOracle& o, const Vector& x) {
  const double h = 1e-6 * (1.0 + inf_norm(x));
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (o.value(p) - o.value(m)) / (2.0 * h);
  }
  return g;
}

double fd_rel_error(const ProblemOracle& o, const Vector& x) {
  const Vector fd = central_difference(o, x);
  return (o.gradient(x) - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, inf_norm(fd));
}

}  // namespace

TEST_CASE("quadratic value on the identity") {
  auto q = ProblemOracle::quadratic(Matrix::Identity(2, 2), Vector::Zero(2));
  CHECK(q.value(Eigen::Vector2d(3, 4)) == doctest::Approx(12.5));
}

TEST_CASE("logistic value at zero is ln 2") {
  auto o = ProblemOracle::logistic(random_dataset(7, 4, 3), 0.0);
  CHECK(o.value(Vector::Zero(4)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("smooth svm value matches a per-sample sum") {
  const auto d = random_dataset(3, 5, 11);
  const double lambda = 0.1;
  auto o = ProblemOracle::smooth_svm(d, lambda);
  std::mt19937_64 rng(5);
  const Vector w = random_vec(5, rng);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double dot = 0.0;
    for (const auto& e : d.rows[i]) dot += e.value * w[e.index - 1];
    const double slack = std::max(0.0, 1.0 - d.labels[i] * dot);
    total += slack * slack;
  }
  const double expected = total / 3.0 + 0.5 * lambda * w.squaredNorm();
  CHECK(o.value(w) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("quadratic gradient is Ax") {
  Matrix A = Eigen::Vector2d(1, 2).asDiagonal();
  auto q = ProblemOracle::quadratic(A, Vector::Zero(2));
  const Vector g = q.gradient(Vector::Ones(2));
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 2.0);
}

TEST_CASE("logistic gradient at zero") {
  const auto d = random_dataset(6, 4, 8);
  auto o = ProblemOracle::logistic(d, 0.0);
  const Vector g = o.gradient(Vector::Zero(4));
  const Matrix X = dense_design(d);
  Vector expected = Vector::Zero(4);
  for (std::size_t i = 0; i < 6; ++i) expected -= d.labels[i] * X.row(static_cast<Index>(i)).transpose();
  expected /= 12.0;
  CHECK((g - expected).norm() <= 1e-14);
}

TEST_CASE("gradients match central differences") {
  std::mt19937_64 rng(21);
  const auto d = random_dataset(20, 6, 2);
  std::vector<ProblemOracle> oracles;
  oracles.push_back(random_quadratic(6, 0.3, 5.0, 4));
  oracles.push_back(ProblemOracle::logistic(d, 1e-2));
  oracles.push_back(ProblemOracle::smooth_svm(d, 1e-2));
  for (const auto& o : oracles) {
    for (int trial = 0; trial < 10; ++trial) {
      const Vector x = random_vec(6, rng);
      CHECK(fd_rel_error(o, x) <= 1e-6);
    }
  }
}

TEST_CASE("smoothness bounds") {
  SUBCASE("diagonal quadratic") {
    Matrix A = Eigen::Vector2d(1, 10).asDiagonal();
    auto q = ProblemOracle::quadratic(A, Vector::Zero(2));
    CHECK(smoothness_bound(q) == doctest::Approx(10.0).epsilon(1e-8));
  }
  SUBCASE("single-sample logistic") {
    SparseDataset d;
    d.n_features = 2;
    d.rows.push_back({{1, 2.0}});
    d.labels.push_back(1.0);
    auto o = ProblemOracle::logistic(d, 0.0);
    CHECK(smoothness_bound(o) == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("random quadratic against the eigensolver") {
    std::mt19937_64 rng(9);
    Matrix M(10, 10);
    for (Index i = 0; i < 10; ++i) M.col(i) = random_vec(10, rng);
    const Matrix A = M.transpose() * M;
    auto q = ProblemOracle::quadratic(A, Vector::Zero(10));
    const double top = Eigen::SelfAdjointEigenSolver<Matrix>(A).eigenvalues().maxCoeff();
    CHECK(std::abs(smoothness_bound(q) - top) <= 1e-6 * top);
  }
  SUBCASE("dataset losses against dense singular values") {
    const auto d = random_dataset(15, 5, 31);
    const Matrix X = dense_design(d);
    const double s = Eigen::JacobiSVD<Matrix>(X).singularValues()[0];
    const double lambda = 0.05;
    CHECK(smoothness_bound(ProblemOracle::logistic(d, lambda)) ==
          doctest::Approx(s * s / (4.0 * 15.0) + lambda).epsilon(1e-7));
    CHECK(smoothness_bound(ProblemOracle::smooth_svm(d, lambda)) ==
          doctest::Approx(2.0 * s * s / 15.0 + lambda).epsilon(1e-7));
  }
}

TEST_CASE("libsvm parsing") {
  SUBCASE("basic") {
    const auto d = load_libsvm(std::string("+1 1:0.5 3:-2\n-1 2:1"));
    REQUIRE(d.n_samples() == 2);
    CHECK(d.n_features == 3);
    CHECK(d.labels[0] == 1.0);
    CHECK(d.labels[1] == -1.0);
    CHECK(d.rows[0][1].index == 3);
    CHECK(d.rows[0][1].value == -2.0);
  }
  SUBCASE("zero-one labels") {
    const auto d = load_libsvm(std::string("0 1:1\n1 2:1"));
    CHECK(d.labels[0] == -1.0);
    CHECK(d.labels[1] == 1.0);
  }
  SUBCASE("comments and blank lines") {
    const auto d = load_libsvm(std::string("# header\n\n1 1:1 # trailing\n\n-1 4:2\n"));
    CHECK(d.n_samples() == 2);
    CHECK(d.n_features == 4);
  }
  SUBCASE("errors carry the line number") {
    auto line_of = [](const std::string& text) -> std::size_t {
      try {
        load_libsvm(text);
      } catch (const LibsvmParseError& e) {
        return e.line();
      }
      return 0;
    };
    CHECK(line_of("1 3:1 2:1") == 1);
    CHECK(line_of("1 1:1\n1 0:1") == 2);
    CHECK(line_of("1 1:1\n1 1:1\nabc 1:1") == 3);
    CHECK(line_of("1 1:x") == 1);
  }
  SUBCASE("stream and file loaders agree") {
    std::istringstream in("1 1:1 2:3\n-1 2:1\n");
    const auto d = load_libsvm(in);
    const auto f = load_libsvm_file(std::string(HYPERGRAD_TEST_DATA) + "/iris.libsvm");
    CHECK(d.n_samples() == 2);
    CHECK(f.n_samples() == 150);
    CHECK(f.n_features == 4);
  }
}

TEST_CASE("convexity along random segments") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto d = random_dataset(25, 6, 41);
  std::vector<ProblemOracle> oracles;
  oracles.push_back(random_quadratic(6, 0.1, 3.0, 2));
  oracles.push_back(ProblemOracle::logistic(d, 0.0));
  oracles.push_back(ProblemOracle::smooth_svm(d, 0.0));
  for (const auto& o : oracles) {
    for (int trial = 0; trial < 50; ++trial) {
      const Vector x = random_vec(6, rng), y = random_vec(6, rng);
      const double t = unit(rng);
      const double mid = o.value(t * x + (1.0 - t) * y);
      CHECK(mid <= t * o.value(x) + (1.0 - t) * o.value(y) + 1e-12);
    }
  }
}

TEST_CASE("descent lemma with the reported smoothness") {
  std::mt19937_64 rng(23);
  const auto d = random_dataset(25, 6, 43);
  std::vector<ProblemOracle> oracles;
  oracles.push_back(random_quadratic(6, 0.1, 3.0, 3));
  oracles.push_back(ProblemOracle::logistic(d, 1e-3));
  oracles.push_back(ProblemOracle::smooth_svm(d, 1e-3));
  for (const auto& o : oracles) {
    const double L = o.smoothness();
    for (int trial = 0; trial < 50; ++trial) {
      const Vector x = random_vec(6, rng), y = random_vec(6, rng);
      const double bound = o.value(x) + o.gradient(x).dot(y - x) + 0.5 * L * (y - x).squaredNorm();
      CHECK(o.value(y) <= bound + 1e-10 * (1.0 + std::abs(bound)));
    }
  }
}

TEST_CASE("oracle counters and forks") {
  auto q = random_quadratic(4, 1.0, 2.0, 1);
  q.value(Vector::Zero(4));
  q.gradient(Vector::Zero(4));
  q.gradient(Vector::Zero(4));
  CHECK(q.fval_calls() == 1);
  CHECK(q.grad_calls() == 2);
  auto f = q.fork();
  CHECK(f.grad_calls() == 0);
  f.gradient(Vector::Zero(4));
  CHECK(q.grad_calls() == 2);
  q.reset_counters();
  CHECK(q.grad_calls() == 0);
}

TEST_CASE("dimension mismatch and non-finite input") {
  auto q = random_quadratic(3, 1.0, 2.0, 1);
  CHECK_THROWS_AS(q.value(Vector::Zero(2)), DimensionError);
  Vector bad = Vector::Zero(3);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(q.value(bad), NumericalError);
}

TEST_CASE("quadratic minimizer") {
  auto q = random_quadratic(5, 0.5, 4.0, 6);
  REQUIRE(q.minimizer());
  CHECK(q.gradient(*q.minimizer()).norm() <= 1e-12);
  CHECK(q.strong_convexity() == doctest::Approx(0.5));
  CHECK(q.smoothness() == doctest::Approx(4.0));
}
