#include "hypergrad/online.hpp"

#include <cmath>
#include <numeric>

namespace hypergrad {

namespace {

void require_positive(double v, const char* what) {
  if (!(std::isfinite(v) && v > 0.0)) throw ConfigError(std::string(what) + " must be finite and > 0");
}

void require_same_shape(const ShapedMatrix& param, const FeedbackGradient& g) {
  if (param.shape() != g.shape()) {
    throw DimensionError("learner parameter is " + to_string(param.shape()) + " but gradient is " +
                         to_string(g.shape()));
  }
}

}  // namespace

StepsizeSchedule StepsizeSchedule::constant(double eta) {
  require_positive(eta, "constant stepsize");
  return {Kind::Constant, eta};
}

StepsizeSchedule StepsizeSchedule::horizon_constant(double D, double L, std::size_t K) {
  require_positive(D, "diameter D");
  require_positive(L, "smoothness L");
  if (K == 0) throw ConfigError("horizon K must be >= 1");
  return {Kind::HorizonConstant, D / ((L * D + 1.0) * std::sqrt(static_cast<double>(K)))};
}

StepsizeSchedule StepsizeSchedule::decaying(double mu) {
  require_positive(mu, "strong convexity mu");
  return {Kind::Decaying, mu};
}

StepsizeSchedule StepsizeSchedule::anytime(double c) {
  require_positive(c, "anytime scale c");
  return {Kind::Anytime, c};
}

double StepsizeSchedule::eta(std::size_t k) const {
  if (k == 0) throw ConfigError("stepsize index starts at 1");
  const auto kd = static_cast<double>(k);
  switch (kind_) {
    case Kind::Constant:
    case Kind::HorizonConstant: return value_;
    case Kind::Decaying: return 1.0 / (kd * value_);
    case Kind::Anytime: return value_ / std::sqrt(kd);
  }
  return 0.0;
}

std::string to_string(StepsizeSchedule::Kind kind) {
  switch (kind) {
    case StepsizeSchedule::Kind::Constant: return "constant";
    case StepsizeSchedule::Kind::HorizonConstant: return "horizon-constant";
    case StepsizeSchedule::Kind::Decaying: return "decaying";
    case StepsizeSchedule::Kind::Anytime: return "anytime";
  }
  return "unknown";
}

LearnerState make_ogd(const ShapedMatrix& init, const FeasibleSet& set, const StepsizeSchedule& schedule) {
  LearnerState s;
  s.kind = LearnerKind::Ogd;
  s.schedule = schedule;
  s.param = project(init, set);
  s.set = set;
  return s;
}

LearnerState make_adagrad(const ShapedMatrix& init, const FeasibleSet& set, double eta, double epsilon) {
  require_positive(eta, "AdaGrad stepsize");
  if (!(epsilon >= 0.0)) throw ConfigError("AdaGrad epsilon must be >= 0");
  LearnerState s;
  s.kind = LearnerKind::AdaGrad;
  s.eta = eta;
  s.epsilon = epsilon;
  s.param = project(init, set);
  s.accumulator = Vector::Zero(s.param.coordinates().size());
  s.set = set;
  return s;
}

LearnerState ogd_step(LearnerState state, const FeedbackGradient& g) {
  require_same_shape(state.param, g);
  state.param = project(state.param.axpy(-state.schedule.eta(state.k), g), state.set);
  ++state.k;
  return state;
}

LearnerState adagrad_step(LearnerState state, const FeedbackGradient& g) {
  require_same_shape(state.param, g);
  const Vector gc = g.coordinates();
  if (gc.size() != state.accumulator.size()) throw DimensionError("AdaGrad accumulator length mismatch");
  state.accumulator += gc.cwiseProduct(gc);
  Vector step(gc.size());
  for (Index i = 0; i < gc.size(); ++i) {
    const double denom = std::sqrt(state.accumulator[i]) + state.epsilon;
    step[i] = denom > 0.0 ? gc[i] / denom : 0.0;
  }
  const Vector next = state.param.coordinates() - state.eta * step;
  state.param = project(state.param.with_coordinates(next), state.set);
  ++state.k;
  return state;
}

LearnerState learner_step(LearnerState state, const FeedbackGradient& g) {
  return state.kind == LearnerKind::Ogd ? ogd_step(std::move(state), g) : adagrad_step(std::move(state), g);
}

double measured_regret(const std::vector<double>& feedback_values, double hindsight_best) {
  return std::accumulate(feedback_values.begin(), feedback_values.end(), 0.0) - hindsight_best;
}

double horizon_regret_bound(double D, double L, std::size_t K) {
  return D * (L * D + 1.0) * std::sqrt(static_cast<double>(K));
}

double decaying_regret_bound(double D, double L, double mu, std::size_t K) {
  const double gamma = L * D + 1.0;
  return gamma * gamma / (2.0 * mu) * (std::log(static_cast<double>(K)) + 1.0);
}

}  // namespace hypergrad
