#pragma once

#include "hypergrad/precond.hpp"
#include "hypergrad/problems.hpp"

#include <optional>

namespace hypergrad {

/// One evaluation of a feedback function together with everything needed to
/// differentiate it and to accept the candidate without re-querying f.
struct FeedbackSample {
  Vector x;
  Vector gx;
  std::optional<Vector> x_prev;  // heavy-ball feedback only
  double g_norm2 = 0.0;          // |gx|^2
  double denom = 0.0;            // |gx|^2, or |gx|^2 + tau/2 |x - x_prev|^2
  Vector candidate;              // x+
  Vector g_candidate;            // grad f(x+)
  double f_x = 0.0;
  double f_candidate = 0.0;
  double psi_x = 0.0;          // f(x) + omega/2 |x - x_prev|^2 (equals f_x for plain feedback)
  double psi_candidate = 0.0;  // f(x+) + omega/2 |x+ - x|^2
  double h_value = 0.0;
};

struct HBConstants {
  double omega;
  double tau;

  /// omega = 3L, tau = 16L^2.
  static HBConstants from_smoothness(double L);
  /// Throws ConfigError unless both constants are finite and positive.
  void validate() const;
};

/// h_x(P) = (f(x - P gx) - f(x)) / |gx|^2. Costs one gradient call (at the
/// candidate) and one or two value calls; pass f(x) when it is known.
FeedbackSample hyper_feedback(const ProblemOracle& oracle, const Vector& x, const Vector& gx,
                              const Preconditioner& P, std::optional<double> f_x = std::nullopt);

/// Gradient of h_x at the sample's P, restricted to `shape`:
///   Full      -g+ gx' / |gx|^2
///   Diagonal  -(g+ o gx) / |gx|^2
///   Scalar    -<g+, gx> / |gx|^2   (derivative with respect to alpha)
FeedbackGradient hyper_feedback_grad(const FeedbackSample& sample, Shape shape);

/// Heavy-ball feedback
///   x+ = x - P gx + B (x - x_prev)
///   h  = (psi(x+, x) - psi(x, x_prev)) / (|gx|^2 + tau/2 |x - x_prev|^2)
/// with psi(u, v) = f(u) + omega/2 |u - v|^2.
FeedbackSample hb_feedback(const ProblemOracle& oracle, const Vector& x, const Vector& gx, const Vector& x_prev,
                           const Preconditioner& P, const MomentumParam& B, const HBConstants& c,
                           std::optional<double> f_x = std::nullopt);

struct HBFeedbackGradient {
  FeedbackGradient p;
  FeedbackGradient b;
};

/// With v = x+ - x:
///   grad_P h = (-g+ - omega v) gx' / denom
///   grad_B h = (g+ + omega v) (x - x_prev)' / denom
/// restricted to the requested shapes. drop_omega removes the omega v terms.
HBFeedbackGradient hb_feedback_grad(const FeedbackSample& sample, const HBConstants& c, Shape p_shape,
                                    Shape b_shape, bool drop_omega = false);

}  // namespace hypergrad
