#include "hypergrad/optim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hypergrad {

namespace {

struct AlgorithmName {
  Algorithm algo;
  const char* name;
};

constexpr AlgorithmName kAlgorithmNames[] = {
    {Algorithm::Hdm, "hdm"},         {Algorithm::HdmHb, "hdm-hb"},   {Algorithm::HdmAgd, "hdm-agd"},
    {Algorithm::HdmBest, "hdm-best"}, {Algorithm::Gd, "gd"},          {Algorithm::GdHb, "gd-hb"},
    {Algorithm::AgdCvx, "agd-cvx"},   {Algorithm::AgdScvx, "agd-scvx"}, {Algorithm::Adam, "adam"},
    {Algorithm::AdaGrad, "adagrad"},
};

constexpr double kBetaMax = 0.9995;
constexpr double kPrecondBoxScale = 1e3;

}  // namespace

std::string to_string(Algorithm algo) {
  for (const auto& entry : kAlgorithmNames) {
    if (entry.algo == algo) return entry.name;
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) {
    return c == '_' ? '-' : static_cast<char>(std::tolower(c));
  });
  for (const auto& entry : kAlgorithmNames) {
    if (lower == entry.name) return entry.algo;
  }
  throw ConfigError("unknown algorithm '" + name + "'");
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> algos = [] {
    std::vector<Algorithm> out;
    for (const auto& entry : kAlgorithmNames) out.push_back(entry.algo);
    return out;
  }();
  return algos;
}

bool learns_preconditioner(Algorithm algo) {
  return algo == Algorithm::Hdm || algo == Algorithm::HdmHb || algo == Algorithm::HdmAgd ||
         algo == Algorithm::HdmBest;
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Solved: return "solved";
    case RunStatus::BudgetExhausted: return "budget_exhausted";
    case RunStatus::StationaryError: return "stationary_error";
    case RunStatus::NumericalError: return "numerical_error";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Configuration defaults.
// ---------------------------------------------------------------------------

namespace {

FeasibleSet default_p_set(Shape shape, const ProblemOracle& oracle) {
  const double L = oracle.smoothness();
  const Index n = oracle.dim();
  switch (shape) {
    case Shape::Scalar: return ScalarInterval{0.0, kPrecondBoxScale / L};
    case Shape::Diagonal: return DiagonalNonneg::uniform(n, kPrecondBoxScale / L);
    case Shape::Full: {
      double radius = kPrecondBoxScale * std::sqrt(static_cast<double>(n)) / L;
      if (oracle.kind() == ProblemKind::Quadratic && oracle.minimizer()) {
        radius = 2.0 * oracle.hessian().inverse().norm();
      }
      return FullFrobeniusBall{Matrix::Zero(n, n), radius};
    }
  }
  throw ConfigError("bad shape");
}

FeasibleSet default_b_set(Shape shape, BetaRange range, Index n) {
  const double lo = range == BetaRange::Positive ? 0.0 : -kBetaMax;
  switch (shape) {
    case Shape::Scalar: return ScalarInterval{lo, kBetaMax};
    case Shape::Diagonal: return DiagonalBox::uniform(n, lo, kBetaMax);
    case Shape::Full: return FullFrobeniusBall{Matrix::Zero(n, n), kBetaMax * std::sqrt(static_cast<double>(n))};
  }
  throw ConfigError("bad shape");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

RunConfig resolve_config(Algorithm algo, const ProblemOracle& oracle, RunConfig c) {
  const double L = oracle.smoothness();
  const Index n = oracle.dim();
  require(c.max_grad_oracles >= 1, "gradient budget must be >= 1");
  require(std::isfinite(c.tol_grad_inf) && c.tol_grad_inf >= 0.0, "tolerance must be >= 0");
  require(std::isfinite(L) && L > 0.0, "problem smoothness L must be > 0");
  if (c.snapshot_every == 0) c.snapshot_every = std::max<std::size_t>(1, c.max_grad_oracles / 100);

  if (learns_preconditioner(algo)) {
    const bool best = algo == Algorithm::HdmBest;
    if (!c.p_learner) c.p_learner = best ? LearnerKind::AdaGrad : LearnerKind::Ogd;
    if (!c.eta_p) c.eta_p = (best ? 10.0 : 1.0) / L;
    require(std::isfinite(*c.eta_p) && *c.eta_p > 0.0, "eta_p must be > 0");
    if (!c.p_schedule) c.p_schedule = StepsizeSchedule::constant(*c.eta_p);
    if (!c.p_set) c.p_set = default_p_set(c.p_shape, oracle);
    require(c.p_set->shape() == c.p_shape, "preconditioner set does not match the preconditioner shape");
    if (!c.p_init) c.p_init = ShapedMatrix::identity_scaled(c.p_shape, n, 1.0 / L);
    require(c.p_init->shape() == c.p_shape, "initial preconditioner does not match the preconditioner shape");
    if (c.p_shape == Shape::Diagonal) require(c.p_init->diag().size() == n, "initial preconditioner length");
    if (c.p_shape == Shape::Full) require(c.p_init->matrix().rows() == n, "initial preconditioner size");
  }

  if (algo == Algorithm::HdmHb || algo == Algorithm::HdmBest) {
    const bool best = algo == Algorithm::HdmBest;
    if (!c.b_learner) c.b_learner = best ? LearnerKind::AdaGrad : LearnerKind::Ogd;
    if (!c.eta_b) c.eta_b = *c.b_learner == LearnerKind::AdaGrad ? 5.0 : L;
    require(std::isfinite(*c.eta_b) && *c.eta_b > 0.0, "eta_b must be > 0");
    if (!c.b_schedule) c.b_schedule = StepsizeSchedule::constant(*c.eta_b);
    if (!c.b_set) c.b_set = default_b_set(c.b_shape, c.beta_range, n);
    require(c.b_set->shape() == c.b_shape, "momentum set does not match the momentum shape");
    if (!c.beta_init) c.beta_init = best ? 0.95 : 0.5;
    if (!c.hb) c.hb = HBConstants::from_smoothness(L);
    require(c.hb->omega >= 0.0 && c.hb->tau >= 0.0 && std::isfinite(c.hb->omega) && std::isfinite(c.hb->tau),
            "heavy-ball constants must be finite and >= 0");
    if (!c.drop_omega) c.drop_omega = best;
  }

  if (algo == Algorithm::HdmAgd) {
    const double D = diameter(*c.p_set, n);
    require(c.theta >= 0.5, "theta must be >= 1/2");
    require(c.theta < L * D, "theta must be < L * diam(P)");
  }
  if (algo == Algorithm::AgdScvx) {
    require(oracle.strong_convexity() > 0.0, "agd-scvx needs a strong convexity estimate mu > 0");
  }
  if (algo == Algorithm::Adam || algo == Algorithm::AdaGrad) {
    if (!c.stepsize) c.stepsize = 1.0 / L;
    require(std::isfinite(*c.stepsize) && *c.stepsize > 0.0, "stepsize must be > 0");
    require(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
  }
  if (algo == Algorithm::GdHb) require(std::isfinite(c.momentum), "momentum must be finite");
  return c;
}

// ---------------------------------------------------------------------------
// Steps.
// ---------------------------------------------------------------------------

StepInfo hdm_step(HdmState& s, const ProblemOracle& oracle) {
  FeedbackSample sample = hyper_feedback(oracle, s.x, s.gx, s.p.param, s.fx);
  const FeedbackGradient g = hyper_feedback_grad(sample, s.p.param.shape());
  StepInfo info;
  info.h_value = sample.h_value;
  info.point = FeedbackPoint{s.x, s.gx, std::nullopt};
  const bool accept = !s.null_step || sample.f_candidate < s.fx;
  s.p = learner_step(std::move(s.p), g);
  if (accept) {
    s.x = std::move(sample.candidate);
    s.gx = std::move(sample.g_candidate);
    s.fx = sample.f_candidate;
  }
  info.null_step = !accept;
  return info;
}

namespace {

StepInfo momentum_step(MomentumState& s, const ProblemOracle& oracle, bool null_on_f) {
  FeedbackSample sample = hb_feedback(oracle, s.x, s.gx, s.x_prev, s.p.param, s.b.param, s.c, s.fx);
  const HBFeedbackGradient g = hb_feedback_grad(sample, s.c, s.p.param.shape(), s.b.param.shape(), s.drop_omega);
  StepInfo info;
  info.h_value = sample.h_value;
  info.point = FeedbackPoint{s.x, s.gx, s.x_prev};
  bool accept = true;
  if (s.null_step) {
    accept = null_on_f ? sample.f_candidate < s.fx : sample.psi_candidate < sample.psi_x;
  }
  s.p = learner_step(std::move(s.p), g.p);
  s.b = learner_step(std::move(s.b), g.b);
  if (accept) {
    s.x_prev = std::move(s.x);
    s.x = std::move(sample.candidate);
    s.gx = std::move(sample.g_candidate);
    s.fx = sample.f_candidate;
  } else if (null_on_f) {
    s.x_prev = s.x;
  }
  info.null_step = !accept;
  return info;
}

}  // namespace

StepInfo hdm_hb_step(MomentumState& state, const ProblemOracle& oracle) {
  return momentum_step(state, oracle, false);
}

StepInfo hdm_best_step(MomentumState& state, const ProblemOracle& oracle) {
  return momentum_step(state, oracle, true);
}

double agd_sequence_next(double A) {
  if (!(A >= 0.0)) throw ConfigError("AGD sequence requires A >= 0");
  return A + 0.5 * (1.0 + std::sqrt(4.0 * A + 1.0));
}

double agd_v(double h, double L, double theta) {
  return std::max(1.0 / (2.0 * std::max(-h, 1.0 / (2.0 * L))), L / (2.0 * theta));
}

void agd_prepare(AgdState& s, const ProblemOracle& oracle) {
  if (s.y_ready) return;
  const double A_next = agd_sequence_next(s.A);
  s.y = s.x + (1.0 - s.A / A_next) * (s.z - s.x);
  if (s.cached_point.size() == s.y.size() && s.cached_point == s.y) {
    s.gy = s.cached_grad;
  } else {
    s.gy = oracle.gradient(s.y);
    s.cached_point = s.y;
    s.cached_grad = s.gy;
  }
  s.y_ready = true;
}

StepInfo hdm_agd_step(AgdState& s, const ProblemOracle& oracle) {
  agd_prepare(s, oracle);
  const double A_next = agd_sequence_next(s.A);
  const double inv_L = 1.0 / s.L;
  StepInfo info;
  info.null_step = true;

  Vector best = s.x;
  double f_best = s.fx;
  Vector descent = s.y - inv_L * s.gy;
  const double f_descent = oracle.value(descent);
  if (f_descent < f_best) {
    best = std::move(descent);
    f_best = f_descent;
    info.null_step = false;
  }

  double v = s.L;
  if (s.p) {
    FeedbackSample sample = hyper_feedback(oracle, s.y, s.gy, s.p->param);
    const FeedbackGradient g = hyper_feedback_grad(sample, s.p->param.shape());
    info.h_value = sample.h_value;
    info.point = FeedbackPoint{s.y, s.gy, std::nullopt};
    if (sample.f_candidate < f_best) {
      best = sample.candidate;
      f_best = sample.f_candidate;
      info.null_step = false;
    }
    s.cached_point = std::move(sample.candidate);
    s.cached_grad = std::move(sample.g_candidate);
    s.p = learner_step(std::move(*s.p), g);
    v = agd_v(sample.h_value, s.L, s.theta);
  }

  s.z -= ((A_next - s.A) / v) * s.gy;
  s.A = A_next;
  ++s.k;
  s.x = std::move(best);
  s.fx = f_best;
  s.y_ready = false;
  return info;
}

// ---------------------------------------------------------------------------
// Optimizers.
// ---------------------------------------------------------------------------

namespace {

LearnerState make_learner(LearnerKind kind, const ShapedMatrix& init, const FeasibleSet& set,
                          const StepsizeSchedule& schedule, double eta, double epsilon) {
  return kind == LearnerKind::Ogd ? make_ogd(init, set, schedule) : make_adagrad(init, set, eta, epsilon);
}

class HdmOptimizer final : public Optimizer {
 public:
  HdmOptimizer(const ProblemOracle& oracle, const RunConfig& c) : oracle_(oracle) {
    state_.p = make_learner(*c.p_learner, *c.p_init, *c.p_set, *c.p_schedule, *c.eta_p, c.learner_epsilon);
    state_.null_step = c.null_step;
  }
  void start(const Vector& x1) override {
    state_.x = x1;
    state_.fx = oracle_.value(x1);
    state_.gx = oracle_.gradient(x1);
  }
  const Vector& stop_gradient() override { return state_.gx; }
  const Vector& stop_point() const override { return state_.x; }
  StepInfo step() override { return hdm_step(state_, oracle_); }
  double current_f() const override { return state_.fx; }
  const ShapedMatrix* preconditioner() const override { return &state_.p.param; }

 private:
  const ProblemOracle& oracle_;
  HdmState state_;
};

class MomentumOptimizer final : public Optimizer {
 public:
  MomentumOptimizer(const ProblemOracle& oracle, const RunConfig& c, bool best) : oracle_(oracle), best_(best) {
    const Index n = oracle.dim();
    state_.p = make_learner(*c.p_learner, *c.p_init, *c.p_set, *c.p_schedule, *c.eta_p, c.learner_epsilon);
    state_.b = make_learner(*c.b_learner, ShapedMatrix::identity_scaled(c.b_shape, n, *c.beta_init), *c.b_set,
                            *c.b_schedule, *c.eta_b, c.learner_epsilon);
    state_.c = *c.hb;
    state_.null_step = c.null_step;
    state_.drop_omega = *c.drop_omega;
  }
  void start(const Vector& x1) override {
    state_.x = x1;
    state_.x_prev = x1;
    state_.fx = oracle_.value(x1);
    state_.gx = oracle_.gradient(x1);
  }
  const Vector& stop_gradient() override { return state_.gx; }
  const Vector& stop_point() const override { return state_.x; }
  StepInfo step() override { return best_ ? hdm_best_step(state_, oracle_) : hdm_hb_step(state_, oracle_); }
  double current_f() const override { return state_.fx; }
  std::optional<double> potential() const override {
    if (best_) return std::nullopt;
    return state_.potential();
  }
  const ShapedMatrix* preconditioner() const override { return &state_.p.param; }
  const ShapedMatrix* momentum() const override { return &state_.b.param; }

 private:
  const ProblemOracle& oracle_;
  bool best_;
  MomentumState state_;
};

class AgdOptimizer final : public Optimizer {
 public:
  AgdOptimizer(const ProblemOracle& oracle, const RunConfig& c, bool learn) : oracle_(oracle), config_(c) {
    state_.L = oracle.smoothness();
    state_.theta = c.theta;
    if (learn) {
      state_.p = make_learner(*c.p_learner, *c.p_init, *c.p_set, *c.p_schedule, *c.eta_p, c.learner_epsilon);
    }
  }
  void start(const Vector& x1) override {
    reset(x1, x1, oracle_.value(x1));
    state_.cached_point = x1;
    state_.cached_grad = oracle_.gradient(x1);
    if (state_.p && config_.warm_start_agd) {
      AgdState plain = state_;
      plain.p.reset();
      const std::size_t warm_budget = config_.max_grad_oracles / 2;
      while (oracle_.grad_calls() < warm_budget) {
        agd_prepare(plain, oracle_);
        if (inf_norm(plain.gy) <= config_.tol_grad_inf) break;
        hdm_agd_step(plain, oracle_);
      }
      reset(plain.x, x1, plain.fx);
      state_.cached_point = std::move(plain.cached_point);
      state_.cached_grad = std::move(plain.cached_grad);
    }
  }
  const Vector& stop_gradient() override {
    agd_prepare(state_, oracle_);
    return state_.gy;
  }
  const Vector& stop_point() const override { return state_.y_ready ? state_.y : state_.x; }
  StepInfo step() override { return hdm_agd_step(state_, oracle_); }
  double current_f() const override { return state_.fx; }
  const ShapedMatrix* preconditioner() const override { return state_.p ? &state_.p->param : nullptr; }
  std::optional<double> agd_A() const override { return state_.A; }

 private:
  void reset(const Vector& x, const Vector& z, double fx) {
    state_.x = x;
    state_.z = z;
    state_.fx = fx;
    state_.A = agd_sequence_next(0.0);
    state_.k = 1;
    state_.y_ready = false;
  }

  const ProblemOracle& oracle_;
  RunConfig config_;
  AgdState state_;
};

/// Shared plumbing for the single-point baselines.
class PointOptimizer : public Optimizer {
 public:
  explicit PointOptimizer(const ProblemOracle& oracle) : oracle_(oracle), inv_L_(1.0 / oracle.smoothness()) {}
  void start(const Vector& x1) override {
    x_ = x1;
    x_prev_ = x1;
    fx_ = oracle_.value(x1);
    gx_ = oracle_.gradient(x1);
  }
  const Vector& stop_gradient() override { return gx_; }
  const Vector& stop_point() const override { return x_; }
  double current_f() const override { return fx_; }
  StepInfo step() override {
    Vector next = advance();
    x_prev_ = std::move(x_);
    x_ = std::move(next);
    fx_ = oracle_.value(x_);
    gx_ = oracle_.gradient(x_);
    return {};
  }

 protected:
  virtual Vector advance() = 0;

  const ProblemOracle& oracle_;
  double inv_L_;
  Vector x_;
  Vector x_prev_;
  Vector gx_;
  double fx_ = 0.0;
};

class GdOptimizer final : public PointOptimizer {
 public:
  GdOptimizer(const ProblemOracle& oracle, double momentum) : PointOptimizer(oracle), momentum_(momentum) {}

 protected:
  Vector advance() override { return x_ - inv_L_ * gx_ + momentum_ * (x_ - x_prev_); }

 private:
  double momentum_;
};

class AdamOptimizer final : public PointOptimizer {
 public:
  AdamOptimizer(const ProblemOracle& oracle, const RunConfig& c)
      : PointOptimizer(oracle), lr_(*c.stepsize), beta1_(c.adam_beta1), beta2_(c.adam_beta2), eps_(c.adam_epsilon) {}
  void start(const Vector& x1) override {
    PointOptimizer::start(x1);
    m_ = Vector::Zero(x1.size());
    v_ = Vector::Zero(x1.size());
  }

 protected:
  Vector advance() override {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * gx_;
    v_ = beta2_ * v_ + (1.0 - beta2_) * gx_.cwiseProduct(gx_);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const Eigen::ArrayXd m_hat = m_.array() / c1;
    const Eigen::ArrayXd v_hat = v_.array() / c2;
    return x_ - lr_ * (m_hat / (v_hat.sqrt() + eps_)).matrix();
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector m_, v_;
  std::size_t t_ = 0;
};

class AdaGradOptimizer final : public PointOptimizer {
 public:
  AdaGradOptimizer(const ProblemOracle& oracle, const RunConfig& c)
      : PointOptimizer(oracle), lr_(*c.stepsize), eps_(c.adagrad_epsilon) {}
  void start(const Vector& x1) override {
    PointOptimizer::start(x1);
    u_ = Vector::Zero(x1.size());
  }

 protected:
  Vector advance() override {
    u_ += gx_.cwiseProduct(gx_);
    return x_ - lr_ * (gx_.array() / (u_.array().sqrt() + eps_)).matrix();
  }

 private:
  double lr_, eps_;
  Vector u_;
};

/// Constant-momentum Nesterov method for strongly convex problems.
class AgdScvxOptimizer final : public Optimizer {
 public:
  explicit AgdScvxOptimizer(const ProblemOracle& oracle) : oracle_(oracle), inv_L_(1.0 / oracle.smoothness()) {
    const double sqrt_kappa = std::sqrt(oracle.smoothness() / oracle.strong_convexity());
    beta_ = (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0);
  }
  void start(const Vector& x1) override {
    x_ = x1;
    x_prev_ = x1;
    fx_ = oracle_.value(x1);
    cached_point_ = x1;
    cached_grad_ = oracle_.gradient(x1);
  }
  const Vector& stop_gradient() override {
    if (!y_ready_) {
      y_ = x_ + beta_ * (x_ - x_prev_);
      gy_ = y_ == cached_point_ ? cached_grad_ : oracle_.gradient(y_);
      y_ready_ = true;
    }
    return gy_;
  }
  const Vector& stop_point() const override { return y_ready_ ? y_ : x_; }
  StepInfo step() override {
    stop_gradient();
    x_prev_ = std::move(x_);
    x_ = y_ - inv_L_ * gy_;
    fx_ = oracle_.value(x_);
    y_ready_ = false;
    return {};
  }
  double current_f() const override { return fx_; }

 private:
  const ProblemOracle& oracle_;
  double inv_L_;
  double beta_ = 0.0;
  Vector x_, x_prev_, y_, gy_, cached_point_, cached_grad_;
  double fx_ = 0.0;
  bool y_ready_ = false;
};

}  // namespace

std::unique_ptr<Optimizer> make_optimizer(Algorithm algo, const ProblemOracle& oracle, const RunConfig& c) {
  switch (algo) {
    case Algorithm::Hdm: return std::make_unique<HdmOptimizer>(oracle, c);
    case Algorithm::HdmHb: return std::make_unique<MomentumOptimizer>(oracle, c, false);
    case Algorithm::HdmBest: return std::make_unique<MomentumOptimizer>(oracle, c, true);
    case Algorithm::HdmAgd: return std::make_unique<AgdOptimizer>(oracle, c, true);
    case Algorithm::AgdCvx: return std::make_unique<AgdOptimizer>(oracle, c, false);
    case Algorithm::AgdScvx: return std::make_unique<AgdScvxOptimizer>(oracle);
    case Algorithm::Gd: return std::make_unique<GdOptimizer>(oracle, 0.0);
    case Algorithm::GdHb: return std::make_unique<GdOptimizer>(oracle, c.momentum);
    case Algorithm::Adam: return std::make_unique<AdamOptimizer>(oracle, c);
    case Algorithm::AdaGrad: return std::make_unique<AdaGradOptimizer>(oracle, c);
  }
  throw ConfigError("unknown algorithm");
}

// ---------------------------------------------------------------------------
// Run loop.
// ---------------------------------------------------------------------------

Vector initial_point(Index dim, std::uint64_t seed) {
  if (dim <= 0) throw DimensionError("initial_point: dimension must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector x(dim);
  do {
    for (Index i = 0; i < dim; ++i) x[i] = normal(rng);
  } while (x.norm() == 0.0);
  return x / x.norm();
}

Trajectory run(Algorithm algo, const ProblemOracle& oracle, const RunConfig& config, const Vector& x1) {
  if (x1.size() != oracle.dim()) {
    throw DimensionError("initial point has dimension " + std::to_string(x1.size()) + ", problem has " +
                         std::to_string(oracle.dim()));
  }
  const ProblemOracle local = oracle.fork();
  const RunConfig c = resolve_config(algo, local, config);
  auto opt = make_optimizer(algo, local, c);
  const std::optional<double> f_star = local.optimal_value();

  Trajectory t;
  t.algorithm = algo;
  t.x1 = x1;
  t.final_x = x1;
  if (learns_preconditioner(algo)) {
    t.p_set = c.p_set;
    if (*c.p_learner == LearnerKind::Ogd) t.p_schedule = c.p_schedule;
  }
  if (c.hb) t.hb = c.hb;

  auto snapshot = [&](std::size_t iter) {
    if (const ShapedMatrix* p = opt->preconditioner()) {
      if (t.p_snapshots.empty() || t.p_snapshots.back().first != iter) t.p_snapshots.emplace_back(iter, *p);
    }
    if (const ShapedMatrix* b = opt->momentum()) {
      if (t.b_snapshots.empty() || t.b_snapshots.back().first != iter) t.b_snapshots.emplace_back(iter, *b);
    }
  };

  StepInfo last;
  std::size_t iter = 0;
  try {
    opt->start(x1);
    snapshot(0);
    for (;; ++iter) {
      const Vector& g = opt->stop_gradient();
      if (!g.allFinite()) throw NumericalError("gradient is non-finite");
      IterationRecord rec;
      rec.iter = iter;
      rec.grad_oracles = local.grad_calls();
      rec.f = opt->current_f();
      if (f_star) rec.f_gap = rec.f - *f_star;
      rec.grad_inf = inf_norm(g);
      rec.h_value = last.h_value;
      rec.null_step = last.null_step;
      rec.potential = opt->potential();
      rec.agd_A = opt->agd_A();
      t.records.push_back(rec);
      t.final_x = opt->stop_point();

      if (rec.grad_inf <= c.tol_grad_inf) {
        t.status = RunStatus::Solved;
        break;
      }
      if (local.grad_calls() >= c.max_grad_oracles) {
        t.status = RunStatus::BudgetExhausted;
        break;
      }
      last = opt->step();
      if (!std::isnan(last.h_value)) {
        t.feedback_values.push_back(last.h_value);
        if (c.record_feedback_points && last.point) t.feedback_points.push_back(std::move(*last.point));
      }
      if ((iter + 1) % c.snapshot_every == 0) snapshot(iter + 1);
    }
  } catch (const StationaryPointError& e) {
    t.status = RunStatus::StationaryError;
    t.message = e.what();
  } catch (const NumericalError& e) {
    t.status = RunStatus::NumericalError;
    t.message = e.what();
  }
  if (!t.records.empty()) snapshot(t.records.back().iter);
  t.grad_oracles = local.grad_calls();
  t.fval_oracles = local.fval_calls();
  return t;
}

}  // namespace hypergrad
