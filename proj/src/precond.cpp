#include "hypergrad/precond.hpp"

#include <algorithm>
#include <cmath>

namespace hypergrad {

std::string to_string(Shape shape) {
  switch (shape) {
    case Shape::Scalar: return "scalar";
    case Shape::Diagonal: return "diagonal";
    case Shape::Full: return "full";
  }
  return "unknown";
}

Shape parse_shape(const std::string& name) {
  if (name == "scalar") return Shape::Scalar;
  if (name == "diagonal" || name == "diag") return Shape::Diagonal;
  if (name == "full") return Shape::Full;
  throw ConfigError("unknown preconditioner shape '" + name + "'");
}

ShapedMatrix ShapedMatrix::scalar(double alpha) { return ShapedMatrix(ScalarValue{alpha}); }
ShapedMatrix ShapedMatrix::diagonal(Vector d) { return ShapedMatrix(DiagonalValue{std::move(d)}); }
ShapedMatrix ShapedMatrix::full(Matrix m) {
  if (m.rows() != m.cols()) throw DimensionError("full preconditioner must be square");
  return ShapedMatrix(FullValue{std::move(m)});
}

ShapedMatrix ShapedMatrix::zero(Shape shape, Index dim) { return identity_scaled(shape, dim, 0.0); }

ShapedMatrix ShapedMatrix::identity_scaled(Shape shape, Index dim, double alpha) {
  switch (shape) {
    case Shape::Scalar: return scalar(alpha);
    case Shape::Diagonal: return diagonal(Vector::Constant(dim, alpha));
    case Shape::Full: return full(alpha * Matrix::Identity(dim, dim));
  }
  throw ConfigError("bad shape");
}

Shape ShapedMatrix::shape() const {
  return static_cast<Shape>(value_.index());
}

double ShapedMatrix::alpha() const {
  if (auto* s = std::get_if<ScalarValue>(&value_)) return s->alpha;
  throw ConfigError("alpha() on a non-scalar " + to_string(shape()) + " matrix");
}

const Vector& ShapedMatrix::diag() const {
  if (auto* d = std::get_if<DiagonalValue>(&value_)) return d->d;
  throw ConfigError("diag() on a non-diagonal " + to_string(shape()) + " matrix");
}

const Matrix& ShapedMatrix::matrix() const {
  if (auto* f = std::get_if<FullValue>(&value_)) return f->m;
  throw ConfigError("matrix() on a non-full " + to_string(shape()) + " matrix");
}

Vector ShapedMatrix::apply(const Vector& g) const {
  return std::visit(
      [&g](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ScalarValue>) {
          return v.alpha * g;
        } else if constexpr (std::is_same_v<T, DiagonalValue>) {
          if (v.d.size() != g.size()) throw DimensionError("diagonal preconditioner length mismatch");
          return v.d.cwiseProduct(g);
        } else {
          if (v.m.cols() != g.size()) throw DimensionError("full preconditioner dimension mismatch");
          return v.m * g;
        }
      },
      value_);
}

Matrix ShapedMatrix::dense(Index dim) const {
  switch (shape()) {
    case Shape::Scalar: return alpha() * Matrix::Identity(dim, dim);
    case Shape::Diagonal: {
      if (diag().size() != dim) throw DimensionError("diagonal length mismatch");
      return diag().asDiagonal();
    }
    case Shape::Full: {
      if (matrix().rows() != dim) throw DimensionError("full matrix dimension mismatch");
      return matrix();
    }
  }
  throw ConfigError("bad shape");
}

double ShapedMatrix::frobenius_norm(Index dim) const {
  switch (shape()) {
    case Shape::Scalar: return std::abs(alpha()) * std::sqrt(static_cast<double>(dim));
    case Shape::Diagonal: return diag().norm();
    case Shape::Full: return matrix().norm();
  }
  return 0.0;
}

double ShapedMatrix::inner(const ShapedMatrix& other, Index dim) const {
  if (shape() != other.shape()) throw DimensionError("inner(): shape mismatch");
  switch (shape()) {
    case Shape::Scalar: return alpha() * other.alpha() * static_cast<double>(dim);
    case Shape::Diagonal: return diag().dot(other.diag());
    case Shape::Full: return matrix().cwiseProduct(other.matrix()).sum();
  }
  return 0.0;
}

bool ShapedMatrix::all_finite() const {
  switch (shape()) {
    case Shape::Scalar: return std::isfinite(alpha());
    case Shape::Diagonal: return diag().allFinite();
    case Shape::Full: return matrix().allFinite();
  }
  return false;
}

ShapedMatrix ShapedMatrix::axpy(double scale, const ShapedMatrix& other) const {
  if (shape() != other.shape()) {
    throw DimensionError("shape mismatch: " + to_string(shape()) + " vs " + to_string(other.shape()));
  }
  switch (shape()) {
    case Shape::Scalar: return scalar(alpha() + scale * other.alpha());
    case Shape::Diagonal:
      if (diag().size() != other.diag().size()) throw DimensionError("diagonal length mismatch");
      return diagonal(diag() + scale * other.diag());
    case Shape::Full:
      if (matrix().rows() != other.matrix().rows()) throw DimensionError("full dimension mismatch");
      return full(matrix() + scale * other.matrix());
  }
  throw ConfigError("bad shape");
}

ShapedMatrix ShapedMatrix::scaled(double s) const {
  switch (shape()) {
    case Shape::Scalar: return scalar(s * alpha());
    case Shape::Diagonal: return diagonal(s * diag());
    case Shape::Full: return full(s * matrix());
  }
  throw ConfigError("bad shape");
}

Vector ShapedMatrix::coordinates() const {
  switch (shape()) {
    case Shape::Scalar: return Vector::Constant(1, alpha());
    case Shape::Diagonal: return diag();
    case Shape::Full: return Eigen::Map<const Vector>(matrix().data(), matrix().size());
  }
  throw ConfigError("bad shape");
}

ShapedMatrix ShapedMatrix::with_coordinates(const Vector& c) const {
  switch (shape()) {
    case Shape::Scalar:
      if (c.size() != 1) throw DimensionError("scalar coordinates must have length 1");
      return scalar(c[0]);
    case Shape::Diagonal:
      if (c.size() != diag().size()) throw DimensionError("diagonal coordinate length mismatch");
      return diagonal(c);
    case Shape::Full: {
      const Index n = matrix().rows();
      if (c.size() != n * n) throw DimensionError("full coordinate length mismatch");
      return full(Eigen::Map<const Matrix>(c.data(), n, n));
    }
  }
  throw ConfigError("bad shape");
}

bool operator==(const ShapedMatrix& a, const ShapedMatrix& b) {
  if (a.shape() != b.shape()) return false;
  switch (a.shape()) {
    case Shape::Scalar: return a.alpha() == b.alpha();
    case Shape::Diagonal: return a.diag().size() == b.diag().size() && a.diag() == b.diag();
    case Shape::Full:
      return a.matrix().rows() == b.matrix().rows() && a.matrix() == b.matrix();
  }
  return false;
}

DiagonalBox DiagonalBox::uniform(Index dim, double lo, double hi) {
  return {Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
}

DiagonalNonneg DiagonalNonneg::uniform(Index dim, double hi) { return {Vector::Constant(dim, hi)}; }

FeasibleSet::FeasibleSet(Kind kind) : kind_(std::move(kind)) {
  std::visit(
      [](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, ScalarInterval>) {
          if (!(k.lo <= k.hi)) throw ConfigError("ScalarInterval requires lo <= hi");
        } else if constexpr (std::is_same_v<T, DiagonalBox>) {
          if (k.lo.size() != k.hi.size()) throw DimensionError("DiagonalBox bounds length mismatch");
          if ((k.lo.array() > k.hi.array()).any()) throw ConfigError("DiagonalBox requires lo <= hi");
        } else if constexpr (std::is_same_v<T, DiagonalNonneg>) {
          if ((k.hi.array() < 0.0).any()) throw ConfigError("DiagonalNonneg requires hi >= 0");
        } else {
          if (k.center.rows() != k.center.cols()) throw DimensionError("ball center must be square");
          if (!(k.radius >= 0.0)) throw ConfigError("ball radius must be >= 0");
        }
      },
      kind_);
}

Shape FeasibleSet::shape() const {
  switch (kind_.index()) {
    case 0: return Shape::Scalar;
    case 1:
    case 2: return Shape::Diagonal;
    default: return Shape::Full;
  }
}

bool FeasibleSet::contains(const ShapedMatrix& p, Index dim, double tol) const {
  if (p.shape() != shape()) return false;
  (void)dim;
  return std::visit(
      [&p, tol](const auto& k) -> bool {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, ScalarInterval>) {
          return p.alpha() >= k.lo - tol && p.alpha() <= k.hi + tol;
        } else if constexpr (std::is_same_v<T, DiagonalBox>) {
          return p.diag().size() == k.lo.size() && (p.diag().array() >= k.lo.array() - tol).all() &&
                 (p.diag().array() <= k.hi.array() + tol).all();
        } else if constexpr (std::is_same_v<T, DiagonalNonneg>) {
          return p.diag().size() == k.hi.size() && (p.diag().array() >= -tol).all() &&
                 (p.diag().array() <= k.hi.array() + tol).all();
        } else {
          return p.matrix().rows() == k.center.rows() && (p.matrix() - k.center).norm() <= k.radius + tol;
        }
      },
      kind_);
}

ShapedMatrix project(const ShapedMatrix& p, const FeasibleSet& set) {
  if (p.shape() != set.shape()) {
    throw ConfigError("cannot project a " + to_string(p.shape()) + " parameter onto a " +
                      to_string(set.shape()) + " set");
  }
  return std::visit(
      [&p](const auto& k) -> ShapedMatrix {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, ScalarInterval>) {
          return ShapedMatrix::scalar(std::clamp(p.alpha(), k.lo, k.hi));
        } else if constexpr (std::is_same_v<T, DiagonalBox>) {
          if (p.diag().size() != k.lo.size()) throw DimensionError("box dimension mismatch");
          return ShapedMatrix::diagonal(p.diag().cwiseMax(k.lo).cwiseMin(k.hi));
        } else if constexpr (std::is_same_v<T, DiagonalNonneg>) {
          if (p.diag().size() != k.hi.size()) throw DimensionError("box dimension mismatch");
          return ShapedMatrix::diagonal(p.diag().cwiseMax(0.0).cwiseMin(k.hi));
        } else {
          if (p.matrix().rows() != k.center.rows()) throw DimensionError("ball dimension mismatch");
          const Matrix diff = p.matrix() - k.center;
          const double norm = diff.norm();
          if (norm <= k.radius) return p;
          return ShapedMatrix::full(k.center + (k.radius / norm) * diff);
        }
      },
      set.kind());
}

double diameter(const FeasibleSet& set, Index dim) {
  return std::visit(
      [dim](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, ScalarInterval>) {
          return (k.hi - k.lo) * std::sqrt(static_cast<double>(dim));
        } else if constexpr (std::is_same_v<T, DiagonalBox>) {
          return (k.hi - k.lo).norm();
        } else if constexpr (std::is_same_v<T, DiagonalNonneg>) {
          return k.hi.norm();
        } else {
          return 2.0 * k.radius;
        }
      },
      set.kind());
}

double max_linear_decrease(const ShapedMatrix& grad, const ShapedMatrix& p_ref, const FeasibleSet& set,
                           Index dim) {
  (void)dim;
  // max_{P in set} <grad, p_ref - P> = <grad, p_ref> - min_{P in set} <grad, P>, in coordinates.
  const Vector g = grad.coordinates();
  const double at_ref = g.dot(p_ref.coordinates());
  const double min_over_set = std::visit(
      [&g](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, ScalarInterval>) {
          return g[0] >= 0.0 ? g[0] * k.lo : g[0] * k.hi;
        } else if constexpr (std::is_same_v<T, DiagonalBox>) {
          return (g.array() >= 0.0).select(g.array() * k.lo.array(), g.array() * k.hi.array()).sum();
        } else if constexpr (std::is_same_v<T, DiagonalNonneg>) {
          return (g.array() >= 0.0).select(Eigen::ArrayXd::Zero(g.size()), g.array() * k.hi.array()).sum();
        } else {
          const Vector c = Eigen::Map<const Vector>(k.center.data(), k.center.size());
          return g.dot(c) - k.radius * g.norm();
        }
      },
      set.kind());
  return at_ref - min_over_set;
}

}  // namespace hypergrad
