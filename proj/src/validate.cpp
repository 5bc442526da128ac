#include "snewton/validate.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include <Eigen/Cholesky>

#include "snewton/data.hpp"
#include "snewton/engine.hpp"
#include "snewton/experiments.hpp"

namespace snewton {

namespace {

CheckResult guard(const std::string& name,
                  const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [pass, detail] = body();
    return {name, pass, detail};
  } catch (const std::exception& e) {
    return {name, false, std::string("exception: ") + e.what()};
  }
}

std::pair<bool, std::string> riccati_chain(std::uint64_t seed) {
  const int dim = 6;
  const int steps = 300;
  const double c0 = 2.0;
  Rng rng(seed);
  SymPosMatrix inv = SymPosMatrix::identity(dim, 1.0 / c0);
  Eigen::MatrixXd sum = c0 * Eigen::MatrixXd::Identity(dim, dim);
  for (int k = 0; k < steps; ++k) {
    const double u = 0.05 + rng.uniform();
    const Eigen::VectorXd phi = rng.gaussian_vector(dim);
    riccati_update_inplace(inv, u, phi);
    sum.selfadjointView<Eigen::Lower>().rankUpdate(phi, u);
  }
  sum.triangularView<Eigen::StrictlyUpper>() = sum.transpose();
  const Eigen::MatrixXd direct = sum.llt().solve(Eigen::MatrixXd::Identity(dim, dim));
  const double rel = (inv.mat() - direct).norm() / direct.norm();
  std::ostringstream detail;
  detail << steps << " updates, dim " << dim << ", rel err " << rel;
  return {rel <= 1e-6, detail.str()};
}

Eigen::VectorXd fd_gradient(const RiskModel& model, const Eigen::VectorXd& h,
                            const Observation& obs) {
  Eigen::VectorXd g(h.size());
  Eigen::VectorXd hp = h, hm = h;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double eps = 1e-6 * (1.0 + std::abs(h[i]));
    hp[i] = h[i] + eps;
    hm[i] = h[i] - eps;
    g[i] = (loss(model, hp, obs) - loss(model, hm, obs)) / (2.0 * eps);
    hp[i] = h[i];
    hm[i] = h[i];
  }
  return g;
}

std::pair<bool, std::string> gradient_fd(std::uint64_t seed) {
  Rng rng(seed);
  const RiskModel models[] = {RiskModel::linear(4), RiskModel::logistic(5),
                              RiskModel::softmax(3, 4)};
  double worst = 0.0;
  std::string worst_model;
  for (const RiskModel& model : models) {
    for (int rep = 0; rep < 20; ++rep) {
      Observation obs;
      obs.x = rng.gaussian_vector(model.feature_dim());
      switch (model.kind()) {
        case RiskModel::Kind::Linear:
          obs.y = rng.gaussian();
          break;
        case RiskModel::Kind::Logistic:
          obs.y = rng.uniform() < 0.5 ? 0.0 : 1.0;
          break;
        case RiskModel::Kind::Softmax:
          obs.y = static_cast<double>(
              rng.uniform_int(static_cast<std::uint64_t>(model.num_classes())));
          break;
      }
      const Eigen::VectorXd h = rng.gaussian_vector(model.param_dim());
      const Eigen::VectorXd g = gradient(model, h, obs);
      const Eigen::VectorXd fd = fd_gradient(model, h, obs);
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double rel = std::abs(g[i] - fd[i]) / (1.0 + std::abs(g[i]));
        if (rel > worst) {
          worst = rel;
          worst_model = model.id();
        }
      }
    }
  }
  std::ostringstream detail;
  detail << "20 points per family, worst rel dev " << worst << " (" << worst_model << ")";
  return {worst <= 1e-5, detail.str()};
}

std::pair<bool, std::string> averaging_closed_form(std::uint64_t seed) {
  const GeneratorSpec gen = GeneratorSpec::linear_diag(3);
  const RiskModel& model = gen.model();
  const WeightSchedule variants[] = {WeightSchedule::uniform(), WeightSchedule::polynomial(2.0),
                                     WeightSchedule::logarithmic(2.0)};
  double worst = 0.0;
  for (const WeightSchedule& weights : variants) {
    const NewtonConfig cfg = NewtonConfig::wasna(weights);
    Rng init_rng(mix_seed(seed, 1));
    NewtonState state = NewtonState::init(
        cfg, model, initial_point(gen.theta_true(), 1.0, init_rng), mix_seed(seed, 2));
    GeneratorStream stream(gen, mix_seed(seed, 3));

    std::vector<Eigen::VectorXd> iterates{state.theta_tilde};
    Observation obs;
    for (int k = 0; k < 400; ++k) {
      stream.next(obs);
      newton_step(state, cfg, model, obs);
      iterates.push_back(state.theta_tilde);
    }
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(model.param_dim());
    double wsum = 0.0;
    for (std::size_t k = 0; k < iterates.size(); ++k) {
      const double w = weight_at(weights, static_cast<std::int64_t>(k));
      expected += w * iterates[k];
      wsum += w;
    }
    expected /= wsum;
    worst = std::max(worst, (state.theta_avg - expected).norm() / (1.0 + expected.norm()));
  }
  std::ostringstream detail;
  detail << "uniform/poly:2/log:2 over 400 steps, worst rel dev " << worst;
  return {worst <= 1e-9, detail.str()};
}

std::pair<bool, std::string> curvature_growth(std::uint64_t seed) {
  const GeneratorSpec gen = GeneratorSpec::logistic_iso(3);
  const RiskModel& model = gen.model();
  const AlgorithmConfig algo = parse_algorithm("wasna-log:2");
  Rng init_rng(mix_seed(seed, 4));
  auto opt = make_optimizer(algo, model, initial_point(gen.theta_true(), 1.0, init_rng),
                            mix_seed(seed, 5));
  GeneratorStream stream(gen, mix_seed(seed, 6));
  RunOptions opts;
  opts.probes = log_probe_grid(3000, 20);
  opts.record_spectra = true;
  const RunRecord rec = run(*opt, stream, opts);
  const EigenvalueDiagnostics diag =
      eigenvalue_diagnostics(rec, algo.newton().trunc.beta);
  std::ostringstream detail;
  detail << "logistic run to n=3000, inverse-curvature growth " << diag.growth
         << " (flag threshold 10)";
  return {!diag.flagged, detail.str()};
}

}  // namespace

std::vector<CheckResult> run_validation_suite(std::uint64_t seed) {
  std::vector<CheckResult> results;
  results.push_back(
      guard("rank-one update chain matches direct inversion", [&] { return riccati_chain(seed); }));
  results.push_back(
      guard("gradients match finite differences", [&] { return gradient_fd(seed); }));
  results.push_back(guard("recursive average matches closed form",
                          [&] { return averaging_closed_form(seed); }));
  results.push_back(
      guard("inverse curvature growth stays bounded", [&] { return curvature_growth(seed); }));
  return results;
}

}  // namespace snewton
