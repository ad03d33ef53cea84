#include "hypergrad/feedback.hpp"

#include <cmath>
#include <limits>

namespace hypergrad {

HBConstants HBConstants::from_smoothness(double L) { return {3.0 * L, 16.0 * L * L}; }

void HBConstants::validate() const {
  if (!(std::isfinite(omega) && omega > 0.0) || !(std::isfinite(tau) && tau > 0.0)) {
    throw ConfigError("heavy-ball constants must be finite and positive (omega=" + std::to_string(omega) +
                      ", tau=" + std::to_string(tau) + ")");
  }
}

namespace {

// outer(u, w) restricted to a shape.
FeedbackGradient restrict_outer(const Vector& u, const Vector& w, double scale, Shape shape) {
  switch (shape) {
    case Shape::Scalar: return ShapedMatrix::scalar(scale * u.dot(w));
    case Shape::Diagonal: return ShapedMatrix::diagonal(scale * u.cwiseProduct(w));
    case Shape::Full: return ShapedMatrix::full(scale * u * w.transpose());
  }
  throw ConfigError("bad shape");
}

void check_sample_inputs(const ProblemOracle& oracle, const Vector& x, const Vector& gx) {
  if (x.size() != oracle.dim() || gx.size() != oracle.dim()) {
    throw DimensionError("feedback: x and gx must have the oracle dimension " + std::to_string(oracle.dim()));
  }
}

}  // namespace

FeedbackSample hyper_feedback(const ProblemOracle& oracle, const Vector& x, const Vector& gx,
                              const Preconditioner& P, std::optional<double> f_x) {
  check_sample_inputs(oracle, x, gx);
  FeedbackSample s;
  s.g_norm2 = gx.squaredNorm();
  if (!(s.g_norm2 >= std::numeric_limits<double>::min())) throw StationaryPointError("hypergradient feedback is undefined at a stationary point");
  s.x = x;
  s.gx = gx;
  s.denom = s.g_norm2;
  s.f_x = f_x ? *f_x : oracle.value(x);
  s.candidate = x - P.apply(gx);
  s.f_candidate = oracle.value(s.candidate);
  s.g_candidate = oracle.gradient(s.candidate);
  s.psi_x = s.f_x;
  s.psi_candidate = s.f_candidate;
  s.h_value = (s.f_candidate - s.f_x) / s.denom;
  if (!std::isfinite(s.h_value)) throw NumericalError("hypergradient feedback is non-finite");
  return s;
}

FeedbackGradient hyper_feedback_grad(const FeedbackSample& sample, Shape shape) {
  return restrict_outer(sample.g_candidate, sample.gx, -1.0 / sample.denom, shape);
}

FeedbackSample hb_feedback(const ProblemOracle& oracle, const Vector& x, const Vector& gx, const Vector& x_prev,
                           const Preconditioner& P, const MomentumParam& B, const HBConstants& c,
                           std::optional<double> f_x) {
  check_sample_inputs(oracle, x, gx);
  if (x_prev.size() != x.size()) throw DimensionError("heavy-ball feedback: x_prev dimension mismatch");
  if (!(c.omega >= 0.0) || !(c.tau >= 0.0)) throw ConfigError("heavy-ball constants must be >= 0");
  FeedbackSample s;
  const Vector d = x - x_prev;
  s.g_norm2 = gx.squaredNorm();
  s.denom = s.g_norm2 + 0.5 * c.tau * d.squaredNorm();
  if (!(s.denom >= std::numeric_limits<double>::min())) {
    throw StationaryPointError("heavy-ball feedback is undefined: zero gradient and x == x_prev");
  }
  s.x = x;
  s.gx = gx;
  s.x_prev = x_prev;
  s.f_x = f_x ? *f_x : oracle.value(x);
  s.candidate = x - P.apply(gx) + B.apply(d);
  s.f_candidate = oracle.value(s.candidate);
  s.g_candidate = oracle.gradient(s.candidate);
  s.psi_x = s.f_x + 0.5 * c.omega * d.squaredNorm();
  s.psi_candidate = s.f_candidate + 0.5 * c.omega * (s.candidate - x).squaredNorm();
  s.h_value = (s.psi_candidate - s.psi_x) / s.denom;
  if (!std::isfinite(s.h_value)) throw NumericalError("heavy-ball feedback is non-finite");
  return s;
}

HBFeedbackGradient hb_feedback_grad(const FeedbackSample& sample, const HBConstants& c, Shape p_shape,
                                    Shape b_shape, bool drop_omega) {
  if (!sample.x_prev) throw ConfigError("hb_feedback_grad needs a heavy-ball sample (x_prev missing)");
  Vector u = sample.g_candidate;
  if (!drop_omega) u += c.omega * (sample.candidate - sample.x);
  const Vector d = sample.x - *sample.x_prev;
  return {restrict_outer(u, sample.gx, -1.0 / sample.denom, p_shape),
          restrict_outer(u, d, 1.0 / sample.denom, b_shape)};
}

}  // namespace hypergrad
