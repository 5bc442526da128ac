#include "snewton/engine.hpp"

#include <cmath>
#include <cstring>

#include <Eigen/Cholesky>

namespace snewton {

NewtonConfig NewtonConfig::sna(double c_theta) {
  NewtonConfig cfg;
  cfg.step = StepSchedule{1.0, c_theta, 1.0};
  cfg.weights = WeightSchedule::last();
  cfg.feed = HessianFeed::RawIterate;
  cfg.trunc = TruncationConfig{1.0, 0.25};
  return cfg;
}

NewtonConfig NewtonConfig::sna75() {
  NewtonConfig cfg;
  cfg.step = StepSchedule{1.0, 0.0, 0.75};
  cfg.weights = WeightSchedule::last();
  cfg.feed = HessianFeed::RawIterate;
  cfg.trunc = TruncationConfig{1.0, 0.125};
  return cfg;
}

NewtonConfig NewtonConfig::wasna(WeightSchedule weights) {
  NewtonConfig cfg;
  cfg.step = StepSchedule{1.0, 0.0, 0.75};
  cfg.weights = weights;
  cfg.feed = HessianFeed::AveragedIterate;
  cfg.trunc = TruncationConfig{1.0, 0.125};
  return cfg;
}

void validate(const NewtonConfig& cfg) {
  validate(cfg.step);
  if (!(cfg.c0 > 0.0)) throw std::invalid_argument("newton config: c0 must be > 0");
  if (!(cfg.trunc.c_beta > 0.0))
    throw std::invalid_argument("newton config: c_beta must be > 0");
  const double hi = cfg.step.gamma - 0.5;
  if (!(cfg.trunc.beta > 0.0 && cfg.trunc.beta < hi))
    throw std::invalid_argument("newton config: beta must lie in (0, gamma - 1/2) = (0, " +
                                std::to_string(hi) + ")");
}

NewtonState NewtonState::init(const NewtonConfig& cfg, const RiskModel& model,
                              Eigen::VectorXd theta0, std::uint64_t seed) {
  validate(cfg);
  if (theta0.size() != model.param_dim())
    throw DimensionMismatch("newton init: theta0 has size " + std::to_string(theta0.size()) +
                            ", expected " + std::to_string(model.param_dim()));
  return NewtonState{theta0,
                     theta0,
                     SymPosMatrix::identity(model.param_dim(), 1.0 / cfg.c0),
                     0,
                     TauCursor(cfg.weights),
                     Rng(seed)};
}

void newton_step(NewtonState& state, const NewtonConfig& cfg, const RiskModel& model,
                 const Observation& obs) {
  const std::int64_t n = state.n;
  const Eigen::VectorXd h_feed =
      cfg.feed == HessianFeed::AveragedIterate ? state.theta_avg : state.theta_tilde;

  const Eigen::VectorXd g = gradient(model, state.theta_tilde, obs);
  const Eigen::VectorXd dir = state.sum_inv.mat().selfadjointView<Eigen::Lower>() * g;
  const double scale = gamma_at(cfg.step, n + 1) * static_cast<double>(n + 1);
  state.theta_tilde -= scale * dir;

  const double tau = state.tau.next();
  if (tau == 1.0)
    state.theta_avg = state.theta_tilde;
  else
    state.theta_avg = (1.0 - tau) * state.theta_avg + tau * state.theta_tilde;

  for (const HessianUpdate& up : hessian_updates(model, h_feed, obs, n, cfg.trunc, state.rng))
    riccati_update_inplace(state.sum_inv, up.u, up.phi);

  state.n = n + 1;
}

BaselineState baseline_init(const BaselineConfig& cfg, const RiskModel& model,
                            Eigen::VectorXd theta0) {
  if (!(cfg.c > 0.0)) throw std::invalid_argument("baseline config: c must be > 0");
  if (!(cfg.gamma > 0.5 && cfg.gamma <= 1.0))
    throw std::invalid_argument("baseline config: gamma must lie in (1/2, 1]");
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("baseline config: eps must be > 0");
  if (theta0.size() != model.param_dim())
    throw DimensionMismatch("baseline init: theta0 has size " + std::to_string(theta0.size()) +
                            ", expected " + std::to_string(model.param_dim()));
  return BaselineState{theta0, theta0, Eigen::VectorXd::Zero(model.param_dim()), 0};
}

void baseline_step(BaselineState& state, const BaselineConfig& cfg, const RiskModel& model,
                   const Observation& obs) {
  const Eigen::VectorXd g = gradient(model, state.theta, obs);
  const std::int64_t n1 = state.n + 1;
  switch (cfg.kind) {
    case BaselineKind::Sgd:
    case BaselineKind::AveragedSgd:
      state.theta -= cfg.c * std::pow(static_cast<double>(n1), -cfg.gamma) * g;
      break;
    case BaselineKind::Adagrad:
    case BaselineKind::AveragedAdagrad:
      state.grad_sq += g.cwiseProduct(g);
      state.theta -=
          cfg.c * (g.array() / (state.grad_sq.array().sqrt() + cfg.eps)).matrix();
      break;
  }
  if (cfg.kind == BaselineKind::AveragedSgd || cfg.kind == BaselineKind::AveragedAdagrad) {
    const double tau = 1.0 / static_cast<double>(n1 + 1);
    state.theta_avg = (1.0 - tau) * state.theta_avg + tau * state.theta;
  } else {
    state.theta_avg = state.theta;
  }
  state.n = n1;
}

bool AlgorithmConfig::averaged() const {
  if (is_newton()) return newton().weights.variant != WeightSchedule::Variant::Last;
  const BaselineKind k = baseline().kind;
  return k == BaselineKind::AveragedSgd || k == BaselineKind::AveragedAdagrad;
}

AlgorithmConfig parse_algorithm(const std::string& spec) {
  if (spec == "sna") return {spec, NewtonConfig::sna()};
  if (spec == "sna75") return {spec, NewtonConfig::sna75()};
  const std::string wasna_prefix = "wasna-";
  if (spec.rfind(wasna_prefix, 0) == 0)
    return {spec, NewtonConfig::wasna(parse_weights(spec.substr(wasna_prefix.size())))};
  if (spec == "sgd") return {spec, BaselineConfig{BaselineKind::Sgd, 1.0, 0.75, 1e-8}};
  if (spec == "asgd") return {spec, BaselineConfig{BaselineKind::AveragedSgd, 1.0, 0.75, 1e-8}};
  if (spec == "adagrad") return {spec, BaselineConfig{BaselineKind::Adagrad, 1.0, 0.75, 1e-8}};
  if (spec == "avg-adagrad")
    return {spec, BaselineConfig{BaselineKind::AveragedAdagrad, 1.0, 0.75, 1e-8}};
  throw std::invalid_argument(
      "algorithm: expected sna | sna75 | wasna-uniform | wasna-poly:<omega> | "
      "wasna-log:<omega> | sgd | asgd | adagrad | avg-adagrad, got '" +
      spec + "'");
}

namespace {

class NewtonOptimizer final : public StreamingOptimizer {
 public:
  NewtonOptimizer(NewtonConfig cfg, RiskModel model, Eigen::VectorXd theta0, std::uint64_t seed)
      : cfg_(cfg), model_(model), state_(NewtonState::init(cfg, model, std::move(theta0), seed)) {}

  void step(const Observation& obs) override { newton_step(state_, cfg_, model_, obs); }
  std::int64_t steps() const override { return state_.n; }
  const Eigen::VectorXd& iterate() const override { return state_.theta_tilde; }
  const Eigen::VectorXd& averaged() const override { return state_.theta_avg; }
  const NewtonState* newton_state() const override { return &state_; }

 private:
  NewtonConfig cfg_;
  RiskModel model_;
  NewtonState state_;
};

class BaselineOptimizer final : public StreamingOptimizer {
 public:
  BaselineOptimizer(BaselineConfig cfg, RiskModel model, Eigen::VectorXd theta0)
      : cfg_(cfg), model_(model), state_(baseline_init(cfg, model, std::move(theta0))) {}

  void step(const Observation& obs) override { baseline_step(state_, cfg_, model_, obs); }
  std::int64_t steps() const override { return state_.n; }
  const Eigen::VectorXd& iterate() const override { return state_.theta; }
  const Eigen::VectorXd& averaged() const override { return state_.theta_avg; }

 private:
  BaselineConfig cfg_;
  RiskModel model_;
  BaselineState state_;
};

// FNV-1a over the raw bytes of the observations a run consumed.
class StreamHash {
 public:
  void add(const Observation& obs) {
    add_double(obs.y);
    for (Eigen::Index i = 0; i < obs.x.size(); ++i) add_double(obs.x[i]);
  }
  std::uint64_t value() const { return h_; }

 private:
  void add_double(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h_ ^= (bits >> (8 * i)) & 0xffULL;
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

ProbeSnapshot make_snapshot(const StreamingOptimizer& opt, const RunOptions& opts) {
  ProbeSnapshot snap;
  snap.n = opt.steps();
  snap.theta = opt.iterate();
  snap.theta_avg = opt.averaged();
  const NewtonState* ns = opt.newton_state();
  if (ns == nullptr) return snap;
  const double scale = static_cast<double>(ns->n + 1);
  if (opts.record_spectra) {
    const SpectralBounds b = spectral_bounds(ns->sum_inv);
    // sum_inv holds S_n^{-1}; the scaled sum S_n/(n+1) has the reciprocal
    // spectrum divided by (n+1).
    snap.lambda_min_scaled = 1.0 / (scale * b.lambda_max);
    snap.lambda_max_scaled = 1.0 / (scale * b.lambda_min);
  }
  if (opts.record_matrices) {
    const Eigen::MatrixXd& minv = ns->sum_inv.mat();
    Eigen::MatrixXd sum = minv.llt().solve(
        Eigen::MatrixXd::Identity(minv.rows(), minv.cols()));
    sum /= scale;
    snap.scaled_sum = 0.5 * (sum + sum.transpose());
  }
  return snap;
}

}  // namespace

std::unique_ptr<StreamingOptimizer> make_optimizer(const AlgorithmConfig& algo,
                                                   const RiskModel& model,
                                                   Eigen::VectorXd theta0, std::uint64_t seed) {
  if (algo.is_newton())
    return std::make_unique<NewtonOptimizer>(algo.newton(), model, std::move(theta0), seed);
  return std::make_unique<BaselineOptimizer>(algo.baseline(), model, std::move(theta0));
}

RunRecord run(StreamingOptimizer& opt, ObservationStream& stream, const RunOptions& opts) {
  for (std::size_t i = 0; i < opts.probes.size(); ++i)
    if (opts.probes[i] < 1 || (i > 0 && opts.probes[i] <= opts.probes[i - 1]))
      throw std::invalid_argument("run: probes must be strictly increasing and >= 1");
  if (!opts.probes.empty() && opts.probes.front() <= opt.steps())
    throw std::invalid_argument("run: first probe is not ahead of the optimizer");

  RunRecord rec;
  StreamHash hash;
  std::size_t next = 0;
  const bool bounded = !opts.probes.empty();
  Observation obs;
  while (!bounded || next < opts.probes.size()) {
    if (!stream.next(obs)) {
      if (bounded)
        throw StreamExhausted("run: stream ended at step " + std::to_string(opt.steps()) +
                              " before probe " + std::to_string(opts.probes[next]));
      break;
    }
    hash.add(obs);
    try {
      opt.step(obs);
    } catch (const DenominatorNonPositive& e) {
      rec.failure = RunFailure{opt.steps(), e.what()};
      break;
    }
    if (bounded && opt.steps() == opts.probes[next]) {
      rec.probes.push_back(make_snapshot(opt, opts));
      ++next;
    }
  }
  rec.final_state = make_snapshot(opt, opts);
  rec.steps = opt.steps();
  rec.stream_hash = hash.value();
  return rec;
}

EigenvalueDiagnostics eigenvalue_diagnostics(const RunRecord& rec, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("eigenvalue_diagnostics: beta must be > 0");
  std::vector<double> ratios;
  EigenvalueDiagnostics diag;
  for (const ProbeSnapshot& p : rec.probes) {
    if (!std::isfinite(p.lambda_min_scaled) || p.lambda_min_scaled <= 0.0) continue;
    diag.max_lambda_max_scaled = std::max(diag.max_lambda_max_scaled, p.lambda_max_scaled);
    const double lam_max_inv = 1.0 / p.lambda_min_scaled;
    ratios.push_back(lam_max_inv / std::pow(static_cast<double>(p.n), beta));
  }
  if (ratios.size() < 4)
    throw std::invalid_argument(
        "eigenvalue_diagnostics: need at least 4 probes with recorded spectra");
  const std::size_t q = (ratios.size() + 3) / 4;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    diag.max_inv_ratio = std::max(diag.max_inv_ratio, ratios[i]);
    if (i < q) diag.first_quarter_max = std::max(diag.first_quarter_max, ratios[i]);
    if (i >= ratios.size() - q) diag.last_quarter_max = std::max(diag.last_quarter_max, ratios[i]);
  }
  diag.growth = diag.last_quarter_max / diag.first_quarter_max;
  diag.flagged = diag.growth > 10.0;
  return diag;
}

}  // namespace snewton
