#include "hypergrad/problems.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

namespace hypergrad {

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Quadratic: return "quadratic";
    case ProblemKind::Logistic: return "logistic";
    case ProblemKind::SmoothSvm: return "svm";
  }
  return "unknown";
}

namespace {

// log(1 + exp(-t)) without overflow.
double log1p_exp_neg(double t) {
  return t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

// 1 / (1 + exp(t))
double sigmoid_neg(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

double data_spectral_norm_sq(const SparseDataset& data) {
  const auto n = static_cast<Index>(data.n_features);
  if (n == 0 || data.n_samples() == 0) return 0.0;
  auto gram = [&data, n](const Vector& v) {
    Vector out = Vector::Zero(n);
    data.add_transpose_multiply(data.multiply(v), out);
    return out;
  };
  return power_iteration(gram, n, 1e-10).eigenvalue;
}

void require_finite_value(double v, const char* what, std::size_t sample) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << what << " is non-finite at sample " << sample;
    throw NumericalError(msg.str());
  }
}

}  // namespace

PowerIterationResult power_iteration(const std::function<Vector(const Vector&)>& apply, Index dim,
                                     double rel_tol, std::size_t max_iterations) {
  if (dim <= 0) throw DimensionError("power_iteration: empty operator");
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = normal(rng);
  v.normalize();

  double lambda = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    Vector av = apply(v);
    lambda = v.dot(av);
    if (!(lambda > 0.0)) {
      // Null operator along v; a PSD operator with zero Rayleigh quotient on
      // a random start is the zero operator with probability one.
      if (av.norm() == 0.0) return {0.0, 0.0, it};
    }
    residual = (av - lambda * v).norm() / std::max(std::abs(lambda), 1e-300);
    if (residual <= rel_tol) return {lambda, residual, it};
    const double norm = av.norm();
    if (!std::isfinite(norm) || norm == 0.0) break;
    v = av / norm;
  }
  std::ostringstream msg;
  msg << "power iteration did not converge: relative residual " << residual << " after "
      << max_iterations << " iterations";
  throw NumericalError(msg.str());
}

ProblemOracle ProblemOracle::quadratic(Matrix A, Vector b) {
  if (A.rows() != A.cols()) throw DimensionError("quadratic: A must be square");
  if (b.size() != A.rows()) throw DimensionError("quadratic: b length must match A");
  if (!A.allFinite() || !b.allFinite()) throw NumericalError("quadratic: non-finite data");
  Matrix sym = 0.5 * (A + A.transpose());

  ProblemOracle p;
  p.kind_ = ProblemKind::Quadratic;
  p.dim_ = sym.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (lmin < -1e-12 * std::max(1.0, lmax)) throw ConfigError("quadratic: A is not positive semidefinite");
  if (!(lmax > 0.0)) throw ConfigError("quadratic: A must be nonzero");
  p.smoothness_ = lmax;
  p.strong_convexity_ = std::max(lmin, 0.0);
  if (lmin > 1e-14 * lmax) {
    Vector xs = sym.ldlt().solve(b);
    p.optimal_value_ = -0.5 * b.dot(xs);
    p.minimizer_ = std::move(xs);
  }
  p.A_ = std::make_shared<const Matrix>(std::move(sym));
  p.b_ = std::make_shared<const Vector>(std::move(b));
  return p;
}

ProblemOracle ProblemOracle::from_dataset(ProblemKind kind, SparseDataset data, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("regularization lambda must be >= 0");
  if (data.n_samples() == 0 || data.n_features == 0) throw ConfigError("empty dataset");
  if (data.labels.size() != data.n_samples()) throw DimensionError("labels length != rows");

  ProblemOracle p;
  p.kind_ = kind;
  p.dim_ = static_cast<Index>(data.n_features);
  p.lambda_ = lambda;
  const double m = static_cast<double>(data.n_samples());
  const double sigma_sq = data_spectral_norm_sq(data);
  p.smoothness_ = (kind == ProblemKind::Logistic ? sigma_sq / (4.0 * m) : 2.0 * sigma_sq / m) + lambda;
  if (!(p.smoothness_ > 0.0)) throw ConfigError("dataset loss has zero curvature (all-zero data, lambda = 0)");
  p.strong_convexity_ = lambda;
  p.data_ = std::make_shared<const SparseDataset>(std::move(data));
  return p;
}

ProblemOracle ProblemOracle::logistic(SparseDataset data, double lambda) {
  return from_dataset(ProblemKind::Logistic, std::move(data), lambda);
}

ProblemOracle ProblemOracle::smooth_svm(SparseDataset data, double lambda) {
  return from_dataset(ProblemKind::SmoothSvm, std::move(data), lambda);
}

ProblemOracle ProblemOracle::fork() const {
  ProblemOracle p;
  p.kind_ = kind_;
  p.dim_ = dim_;
  p.smoothness_ = smoothness_;
  p.strong_convexity_ = strong_convexity_;
  p.lambda_ = lambda_;
  p.A_ = A_;
  p.b_ = b_;
  p.data_ = data_;
  p.minimizer_ = minimizer_;
  p.optimal_value_ = optimal_value_;
  return p;
}

const Matrix& ProblemOracle::hessian() const {
  if (!A_) throw ConfigError("hessian() is only available for quadratic oracles");
  return *A_;
}

const Vector& ProblemOracle::linear_term() const {
  if (!b_) throw ConfigError("linear_term() is only available for quadratic oracles");
  return *b_;
}

void ProblemOracle::reset_counters() const {
  counters_->grad = 0;
  counters_->fval = 0;
}

void ProblemOracle::check_dim(const Vector& x) const {
  if (x.size() != dim_) {
    throw DimensionError("oracle expects dimension " + std::to_string(dim_) + ", got " +
                         std::to_string(x.size()));
  }
}

double ProblemOracle::value(const Vector& x) const {
  check_dim(x);
  counters_->fval.fetch_add(1, std::memory_order_relaxed);
  if (kind_ == ProblemKind::Quadratic) {
    const double v = 0.5 * x.dot(*A_ * x) - b_->dot(x);
    if (!std::isfinite(v)) throw NumericalError("quadratic value is non-finite (x'Ax or b'x overflow)");
    return v;
  }
  const auto& data = *data_;
  const Vector margins = data.multiply(x);
  double loss = 0.0;
  for (std::size_t i = 0; i < data.n_samples(); ++i) {
    const double t = data.labels[i] * margins[static_cast<Index>(i)];
    double term;
    if (kind_ == ProblemKind::Logistic) {
      term = log1p_exp_neg(t);
    } else {
      const double s = std::max(0.0, 1.0 - t);
      term = s * s;
    }
    require_finite_value(term, "loss term", i);
    loss += term;
  }
  const double v = loss / static_cast<double>(data.n_samples()) + 0.5 * lambda_ * x.squaredNorm();
  if (!std::isfinite(v)) throw NumericalError("regularization term is non-finite");
  return v;
}

Vector ProblemOracle::gradient(const Vector& x) const {
  check_dim(x);
  counters_->grad.fetch_add(1, std::memory_order_relaxed);
  Vector g;
  if (kind_ == ProblemKind::Quadratic) {
    g = *A_ * x - *b_;
  } else {
    const auto& data = *data_;
    const double m = static_cast<double>(data.n_samples());
    Vector margins = data.multiply(x);
    Vector coeff(margins.size());
    for (std::size_t i = 0; i < data.n_samples(); ++i) {
      const auto ii = static_cast<Index>(i);
      const double y = data.labels[i];
      const double t = y * margins[ii];
      if (kind_ == ProblemKind::Logistic) {
        coeff[ii] = -y * sigmoid_neg(t) / m;
      } else {
        coeff[ii] = -2.0 * y * std::max(0.0, 1.0 - t) / m;
      }
      require_finite_value(coeff[ii], "loss derivative", i);
    }
    g = lambda_ * x;
    data.add_transpose_multiply(coeff, g);
  }
  if (!g.allFinite()) throw NumericalError("gradient is non-finite");
  return g;
}

double smoothness_bound(const ProblemOracle& oracle) {
  if (oracle.kind() == ProblemKind::Quadratic) {
    const Matrix& A = oracle.hessian();
    return power_iteration([&A](const Vector& v) { return Vector(A * v); }, A.rows(), 1e-8).eigenvalue;
  }
  const auto& data = *oracle.dataset();
  const double m = static_cast<double>(data.n_samples());
  const double sigma_sq = data_spectral_norm_sq(data);
  return (oracle.kind() == ProblemKind::Logistic ? sigma_sq / (4.0 * m) : 2.0 * sigma_sq / m) +
         oracle.lambda();
}

}  // namespace hypergrad
