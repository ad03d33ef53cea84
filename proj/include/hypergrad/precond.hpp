#pragma once

#include "hypergrad/common.hpp"

#include <string>
#include <variant>

namespace hypergrad {

enum class Shape { Scalar, Diagonal, Full };

std::string to_string(Shape shape);
Shape parse_shape(const std::string& name);

/// A matrix restricted to one of three structural families: alpha*I,
/// diag(d) or a dense n x n matrix. Used for preconditioners P, momentum
/// parameters B and for gradients of feedback functions with respect to
/// them (a gradient has the shape of the parameter it differentiates).
///
/// A Scalar value carries no dimension of its own; operations that need the
/// matrix embedding (norms, apply) take it from the vector operand or an
/// explicit `dim` argument.
class ShapedMatrix {
 public:
  static ShapedMatrix scalar(double alpha);
  static ShapedMatrix diagonal(Vector d);
  static ShapedMatrix full(Matrix m);
  static ShapedMatrix zero(Shape shape, Index dim);
  /// alpha * I represented in the requested shape.
  static ShapedMatrix identity_scaled(Shape shape, Index dim, double alpha);

  Shape shape() const;
  double alpha() const;            // Scalar only
  const Vector& diag() const;      // Diagonal only
  const Matrix& matrix() const;    // Full only

  /// P g.
  Vector apply(const Vector& g) const;
  /// Dense n x n embedding.
  Matrix dense(Index dim) const;
  /// Frobenius norm of the dense embedding.
  double frobenius_norm(Index dim) const;
  /// Frobenius inner product of the embeddings; shapes must agree.
  double inner(const ShapedMatrix& other, Index dim) const;
  bool all_finite() const;

  /// this + scale * other; shapes must agree.
  ShapedMatrix axpy(double scale, const ShapedMatrix& other) const;
  ShapedMatrix scaled(double s) const;

  /// Flattened parameter coordinates (1, n or n*n column-major entries).
  Vector coordinates() const;
  /// Inverse of coordinates() for the same shape.
  ShapedMatrix with_coordinates(const Vector& c) const;

  friend bool operator==(const ShapedMatrix& a, const ShapedMatrix& b);

 private:
  struct ScalarValue { double alpha; };
  struct DiagonalValue { Vector d; };
  struct FullValue { Matrix m; };
  using Storage = std::variant<ScalarValue, DiagonalValue, FullValue>;

  explicit ShapedMatrix(Storage s) : value_(std::move(s)) {}
  Storage value_;
};

using Preconditioner = ShapedMatrix;
using MomentumParam = ShapedMatrix;
using FeedbackGradient = ShapedMatrix;

/// Closed convex sets of parameters with cheap Euclidean projections.
struct ScalarInterval {
  double lo;
  double hi;
};
struct DiagonalBox {
  Vector lo;
  Vector hi;
  static DiagonalBox uniform(Index dim, double lo, double hi);
};
/// {diag(d) : 0 <= d <= hi}.
struct DiagonalNonneg {
  Vector hi;
  static DiagonalNonneg uniform(Index dim, double hi);
};
struct FullFrobeniusBall {
  Matrix center;
  double radius;
};

class FeasibleSet {
 public:
  using Kind = std::variant<ScalarInterval, DiagonalBox, DiagonalNonneg, FullFrobeniusBall>;

  FeasibleSet(Kind kind);  // NOLINT(google-explicit-constructor)
  FeasibleSet(ScalarInterval k) : FeasibleSet(Kind(k)) {}             // NOLINT
  FeasibleSet(DiagonalBox k) : FeasibleSet(Kind(std::move(k))) {}     // NOLINT
  FeasibleSet(DiagonalNonneg k) : FeasibleSet(Kind(std::move(k))) {}  // NOLINT
  FeasibleSet(FullFrobeniusBall k) : FeasibleSet(Kind(std::move(k))) {}  // NOLINT

  const Kind& kind() const { return kind_; }
  /// Parameter shape the set lives in.
  Shape shape() const;
  bool contains(const ShapedMatrix& p, Index dim, double tol = 0.0) const;

 private:
  Kind kind_;
};

/// Euclidean (Frobenius) projection onto the set: clamps for intervals and
/// boxes, radial shrink toward the center for the ball.
ShapedMatrix project(const ShapedMatrix& p, const FeasibleSet& set);

/// Euclidean diameter of the set's n x n matrix embedding.
double diameter(const FeasibleSet& set, Index dim);

/// Largest value of <grad, P_ref - P> over P in the set (Frank-Wolfe gap
/// ingredient). Used to lower-bound convex minima over the set.
double max_linear_decrease(const ShapedMatrix& grad, const ShapedMatrix& p_ref, const FeasibleSet& set,
                           Index dim);

}  // namespace hypergrad
