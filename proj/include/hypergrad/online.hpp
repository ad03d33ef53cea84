#pragma once

#include "hypergrad/precond.hpp"

#include <cstddef>
#include <vector>

namespace hypergrad {

/// OGD stepsize eta_k for k = 1, 2, ...
class StepsizeSchedule {
 public:
  enum class Kind { Constant, HorizonConstant, Decaying, Anytime };

  static StepsizeSchedule constant(double eta);
  /// eta = D / ((L D + 1) sqrt(K)).
  static StepsizeSchedule horizon_constant(double D, double L, std::size_t K);
  /// eta_k = 1 / (k mu).
  static StepsizeSchedule decaying(double mu);
  /// eta_k = c / sqrt(k).
  static StepsizeSchedule anytime(double c);

  Kind kind() const { return kind_; }
  double eta(std::size_t k) const;
  /// Scale factor (eta for Constant/HorizonConstant, mu for Decaying, c for Anytime).
  double parameter() const { return value_; }

 private:
  StepsizeSchedule(Kind kind, double value) : kind_(kind), value_(value) {}
  Kind kind_;
  double value_;
};

std::string to_string(StepsizeSchedule::Kind kind);

enum class LearnerKind { Ogd, AdaGrad };

/// Online learner over a feasible set. Gradients are expressed in the
/// parameter's own coordinates (alpha for Scalar, d for Diagonal, entries for
/// Full), as produced by the feedback module.
struct LearnerState {
  LearnerKind kind = LearnerKind::Ogd;
  StepsizeSchedule schedule = StepsizeSchedule::constant(1.0);
  double eta = 0.0;       // AdaGrad base stepsize
  double epsilon = 0.0;   // AdaGrad denominator guard
  Vector accumulator;     // AdaGrad running sum of squared gradients (coordinates)
  std::size_t k = 1;      // index of the next step
  ShapedMatrix param = ShapedMatrix::scalar(0.0);
  FeasibleSet set = ScalarInterval{0.0, 0.0};
};

/// Initial parameters are projected onto the set.
LearnerState make_ogd(const ShapedMatrix& init, const FeasibleSet& set, const StepsizeSchedule& schedule);
LearnerState make_adagrad(const ShapedMatrix& init, const FeasibleSet& set, double eta, double epsilon = 1e-12);

/// param <- project(param - eta_k g); k <- k + 1.
LearnerState ogd_step(LearnerState state, const FeedbackGradient& g);
/// U <- U + g o g; param <- project(param - eta g / (sqrt(U) + eps)).
LearnerState adagrad_step(LearnerState state, const FeedbackGradient& g);
/// Dispatches on state.kind.
LearnerState learner_step(LearnerState state, const FeedbackGradient& g);

/// sum_k h_k - hindsight_best.
double measured_regret(const std::vector<double>& feedback_values, double hindsight_best);

/// D (L D + 1) sqrt(K): regret of OGD with the horizon-constant stepsize.
double horizon_regret_bound(double D, double L, std::size_t K);
/// ((L D + 1)^2 / (2 mu)) (ln K + 1): regret of OGD with eta_k = 1/(k mu)
/// on mu-strongly convex feedback.
double decaying_regret_bound(double D, double L, double mu, std::size_t K);

}  // namespace hypergrad
