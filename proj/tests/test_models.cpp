#include <cmath>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>

#include "snewton/data.hpp"
#include "snewton/models.hpp"
#include "snewton/rng.hpp"

using namespace snewton;

namespace {

// Central finite differences of the pointwise loss.
Eigen::VectorXd fd_gradient(const RiskModel& model, const Eigen::VectorXd& h,
                            const Observation& obs) {
  Eigen::VectorXd g(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double eps = 1e-6 * (1.0 + std::abs(h[i]));
    Eigen::VectorXd hp = h, hm = h;
    hp[i] += eps;
    hm[i] -= eps;
    g[i] = (loss(model, hp, obs) - loss(model, hm, obs)) / (2.0 * eps);
  }
  return g;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("model factories and dimensions") {
  const auto lin = RiskModel::linear(4);
  CHECK(lin.param_dim() == 4);
  CHECK(lin.id() == "linear:4");
  const auto log = RiskModel::logistic(5);
  CHECK(log.param_dim() == 5);
  CHECK(log.num_classes() == 2);
  const auto soft = RiskModel::softmax(3, 4);
  CHECK(soft.param_dim() == 12);
  CHECK(soft.id() == "softmax:3,4");
  CHECK_THROWS_AS(RiskModel::linear(0), std::invalid_argument);
  CHECK_THROWS_AS(RiskModel::softmax(2, 1), std::invalid_argument);
}

TEST_CASE("hand-worked losses and gradients") {
  // Linear at h = 0 with x = (1, 2), y = 3: loss = 9/2, gradient = -(3)(x).
  const auto lin = RiskModel::linear(2);
  Observation obs{Eigen::Vector2d(1.0, 2.0), 3.0};
  const Eigen::VectorXd h0 = Eigen::VectorXd::Zero(2);
  CHECK(loss(lin, h0, obs) == doctest::Approx(4.5).epsilon(1e-15));
  const Eigen::VectorXd g = gradient(lin, h0, obs);
  CHECK(g[0] == doctest::Approx(-3.0).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(-6.0).epsilon(1e-15));

  // Logistic at h = 0: loss = ln 2 for either label, gradient = (1/2 - y) x.
  const auto logm = RiskModel::logistic(2);
  Observation o1{Eigen::Vector2d(1.0, -2.0), 1.0};
  CHECK(loss(logm, h0, o1) == doctest::Approx(0.6931471805599453).epsilon(1e-14));
  const Eigen::VectorXd gl = gradient(logm, h0, o1);
  CHECK(gl[0] == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(gl[1] == doctest::Approx(1.0).epsilon(1e-14));

  // Softmax K = 3 at h = 0: loss = ln 3, block k of the gradient is
  // (1/3 - 1{y=k}) x.
  const auto soft = RiskModel::softmax(2, 3);
  Observation oc{Eigen::Vector2d(2.0, 1.0), 1.0};
  const Eigen::VectorXd hz = Eigen::VectorXd::Zero(6);
  CHECK(loss(soft, hz, oc) == doctest::Approx(1.0986122886681098).epsilon(1e-14));
  const Eigen::VectorXd gs = gradient(soft, hz, oc);
  CHECK(gs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(gs[2] == doctest::Approx(2.0 * (1.0 / 3.0 - 1.0)).epsilon(1e-14));
  CHECK(gs[4] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("gradients agree with central finite differences") {
  Rng rng(2025);
  const auto check_model = [&](const RiskModel& model, auto draw_y) {
    for (int rep = 0; rep < 20; ++rep) {
      const Eigen::VectorXd h = rng.gaussian_vector(model.param_dim());
      Observation obs;
      obs.x = rng.gaussian_vector(model.feature_dim());
      obs.y = draw_y(rng, obs);
      const Eigen::VectorXd g = gradient(model, h, obs);
      const Eigen::VectorXd fd = fd_gradient(model, h, obs);
      for (Eigen::Index i = 0; i < g.size(); ++i)
        CHECK(std::abs(g[i] - fd[i]) / (1.0 + std::abs(g[i])) < 1e-5);
    }
  };
  check_model(RiskModel::linear(4), [](Rng& r, const Observation&) { return r.gaussian(); });
  check_model(RiskModel::logistic(5),
              [](Rng& r, const Observation&) { return r.uniform() < 0.5 ? 0.0 : 1.0; });
  check_model(RiskModel::softmax(3, 4), [](Rng& r, const Observation&) {
    return static_cast<double>(r.uniform_int(4));
  });
}

TEST_CASE("saturated logistic losses do not overflow") {
  const auto logm = RiskModel::logistic(1);
  Eigen::VectorXd h(1);
  h << 40.0;
  Observation pos{Eigen::VectorXd::Ones(1), 1.0};
  Observation neg{Eigen::VectorXd::Ones(1), 0.0};
  CHECK(loss(logm, h, pos) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(loss(logm, h, neg) == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(std::isfinite(gradient(logm, h, pos)[0]));
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("label validation") {
  const auto logm = RiskModel::logistic(1);
  Observation bad{Eigen::VectorXd::Ones(1), 0.5};
  const Eigen::VectorXd h = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(loss(logm, h, bad), std::invalid_argument);
  const auto soft = RiskModel::softmax(1, 3);
  Observation out_of_range{Eigen::VectorXd::Ones(1), 3.0};
  CHECK_THROWS_AS(gradient(soft, Eigen::VectorXd::Zero(3), out_of_range),
                  std::invalid_argument);
  Observation wrong_dim{Eigen::VectorXd::Ones(2), 1.0};
  CHECK_THROWS_AS(loss(logm, h, wrong_dim), DimensionMismatch);
}

TEST_CASE("softmax probabilities are shift invariant and sum to one") {
  const auto soft = RiskModel::softmax(3, 4);
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd h = 5.0 * rng.gaussian_vector(12);
    const Eigen::VectorXd x = rng.gaussian_vector(3);
    const Eigen::VectorXd p = class_probabilities(soft, h, x);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.minCoeff() >= 0.0);
    // Adding the same vector to every class block leaves probabilities
    // unchanged.
    Eigen::VectorXd shifted = h;
    const Eigen::VectorXd v = rng.gaussian_vector(3);
    for (int k = 0; k < 4; ++k) shifted.segment(3 * k, 3) += v;
    CHECK((class_probabilities(soft, shifted, x) - p).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Extreme scores stay finite thanks to max subtraction.
  Eigen::VectorXd huge = Eigen::VectorXd::Constant(12, 500.0);
  huge[0] = 1000.0;
  const Eigen::VectorXd p = class_probabilities(soft, huge, Eigen::Vector3d(1.0, 1.0, 1.0));
  CHECK(std::isfinite(p.sum()));
}

TEST_CASE("gradient norm bounds for the bounded-response families") {
  Rng rng(6);
  const auto logm = RiskModel::logistic(4);
  const auto soft = RiskModel::softmax(3, 5);
  for (int rep = 0; rep < 50; ++rep) {
    Observation obs;
    obs.x = 3.0 * rng.gaussian_vector(4);
    obs.y = rep % 2;
    const Eigen::VectorXd h = 2.0 * rng.gaussian_vector(4);
    CHECK(gradient(logm, h, obs).norm() <= obs.x.norm() + 1e-12);

    Observation oc;
    oc.x = 3.0 * rng.gaussian_vector(3);
    oc.y = static_cast<double>(rng.uniform_int(5));
    const Eigen::VectorXd hs = 2.0 * rng.gaussian_vector(15);
    CHECK(gradient(soft, hs, oc).norm() <= std::sqrt(5.0) * oc.x.norm() + 1e-12);
  }
}

TEST_CASE("gradient has mean zero at the generating parameter") {
  Rng rng(7);
  const auto check_zero_mean = [&](const GeneratorSpec& spec) {
    const int n = 20000;
    const Eigen::Index p = spec.model().param_dim();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < n; ++i) {
      const Observation obs = draw_observation(spec, rng);
      const Eigen::VectorXd g = gradient(spec.model(), spec.theta_true(), obs);
      sum += g;
      sumsq += g.cwiseProduct(g);
    }
    const Eigen::VectorXd mean = sum / n;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double var = sumsq[i] / n - mean[i] * mean[i];
      const double se = std::sqrt(var / n);
      CHECK(std::abs(mean[i]) <= 5.0 * se + 1e-3);
    }
  };
  check_zero_mean(GeneratorSpec::linear_diag(3));
  check_zero_mean(GeneratorSpec::logistic_iso(3));
  check_zero_mean(GeneratorSpec::softmax_diag(2, 3));
}

TEST_CASE("curvature pairs: linear and logistic closed forms") {
  Rng rng(1);
  const TruncationConfig trunc{1.0, 0.25};
  const auto lin = RiskModel::linear(2);
  Observation obs{Eigen::Vector2d(3.0, -1.0), 2.0};
  const auto lu = hessian_updates(lin, Eigen::VectorXd::Zero(2), obs, 5, trunc, rng);
  REQUIRE(lu.size() == 1);
  CHECK(lu[0].u == 1.0);
  CHECK((lu[0].phi - obs.x).norm() == 0.0);

  const auto logm = RiskModel::logistic(2);
  Observation o{Eigen::Vector2d(1.0, 0.0), 1.0};
  // At the origin pi(1-pi) = 1/4; the floor at n = 0 is 1, so u = 1.
  auto u0 = hessian_updates(logm, Eigen::VectorXd::Zero(2), o, 0, trunc, rng);
  REQUIRE(u0.size() == 1);
  CHECK(u0[0].u == doctest::Approx(1.0).epsilon(1e-15));
  // At n = 15 the floor is 16^{-1/4} = 1/2 > 1/4, so u = 1/2.
  auto u15 = hessian_updates(logm, Eigen::VectorXd::Zero(2), o, 15, trunc, rng);
  CHECK(u15[0].u == doctest::Approx(0.5).epsilon(1e-15));
  // A saturated feed point collapses pi(1-pi) to ~0; the floor takes over.
  auto sat = hessian_updates(logm, Eigen::Vector2d(100.0, 0.0), o, 15, trunc, rng);
  CHECK(sat[0].u == doctest::Approx(0.5).epsilon(1e-15));
  CHECK((sat[0].phi - o.x).norm() == 0.0);
}

TEST_CASE("curvature pairs respect the truncation floor for all n") {
  Rng rng(2);
  const TruncationConfig trunc{0.7, 0.2};
  const auto logm = RiskModel::logistic(3);
  for (std::int64_t n : {0L, 1L, 9L, 99L, 9999L}) {
    Observation obs;
    obs.x = rng.gaussian_vector(3);
    obs.y = 1.0;
    const Eigen::VectorXd feed = 50.0 * rng.gaussian_vector(3);
    const double floor = 0.7 * std::pow(static_cast<double>(n) + 1.0, -0.2);
    const auto ups = hessian_updates(logm, feed, obs, n, trunc, rng);
    CHECK(ups[0].u >= floor - 1e-15);
    CHECK(ups[0].u <= std::max(0.25, floor) + 1e-15);
  }
}

TEST_CASE("softmax curvature pairs: regularizer first, gradient second") {
  const auto soft = RiskModel::softmax(2, 3);
  const TruncationConfig trunc{1.0, 0.125};
  Observation obs{Eigen::Vector2d(1.0, 2.0), 2.0};
  const Eigen::VectorXd feed = Eigen::VectorXd::Zero(6);
  Rng rng(11);
  const auto ups = hessian_updates(soft, feed, obs, 15, trunc, rng);
  REQUIRE(ups.size() == 2);
  CHECK(ups[0].u == doctest::Approx(std::pow(16.0, -0.125)).epsilon(1e-15));
  CHECK(ups[0].phi.size() == 6);
  CHECK(ups[0].phi.norm() > 0.0);
  CHECK(ups[1].u == 1.0);
  CHECK((ups[1].phi - gradient(soft, feed, obs)).norm() == 0.0);
  // The Gaussian draw replays from the rng seed.
  Rng r1(11), r2(11);
  const auto a = hessian_updates(soft, feed, obs, 15, trunc, r1);
  const auto b = hessian_updates(soft, feed, obs, 15, trunc, r2);
  CHECK((a[0].phi - b[0].phi).norm() == 0.0);
}

TEST_CASE("predictions") {
  const auto lin = RiskModel::linear(2);
  Eigen::VectorXd h(2);
  h << 2.0, -1.0;
  CHECK(predict(lin, h, Eigen::Vector2d(3.0, 1.0)) == doctest::Approx(5.0));

  const auto logm = RiskModel::logistic(2);
  CHECK(predict(logm, h, Eigen::Vector2d(1.0, 1.0)) == 1.0);   // score 1
  CHECK(predict(logm, h, Eigen::Vector2d(0.0, 1.0)) == 0.0);   // score -1
  CHECK(predict(logm, h, Eigen::Vector2d(0.0, 0.0)) == 1.0);   // tie -> 1

  const auto soft = RiskModel::softmax(2, 3);
  Eigen::VectorXd hs(6);
  hs << 1.0, 0.0, 2.0, 0.0, -1.0, 0.0;  // scores (1, 2, -1) at x = e1
  CHECK(predict(soft, hs, Eigen::Vector2d(1.0, 0.0)) == 1.0);
  CHECK(predict(soft, Eigen::VectorXd::Zero(6), Eigen::Vector2d(1.0, 0.0)) == 0.0);  // tie
}

TEST_CASE("analytic linear moments") {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.0, 0.0, 4.0;
  const auto oracle = analytic_linear_moments(c, 0.5);
  CHECK((oracle.hessian.mat() - c).norm() == 0.0);
  CHECK((oracle.noise.mat() - 0.25 * c).norm() == 0.0);
  CHECK((oracle.noise_empirical - 0.25 * c).norm() == 0.0);
  CHECK(oracle.hessian_stderr.norm() == 0.0);
  CHECK(oracle.mc_samples == 0);
  // Sandwich: sigma^2 C^{-1} = diag(1/4, 1/16), then scaled by the factor.
  const Eigen::MatrixXd s = oracle.sandwich(1.0);
  CHECK(s(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s(1, 1) == doctest::Approx(0.0625).epsilon(1e-12));
  const Eigen::MatrixXd s2 = oracle.sandwich(1.8);
  CHECK(s2(0, 0) == doctest::Approx(0.45).epsilon(1e-12));
  CHECK_THROWS_AS(analytic_linear_moments(Eigen::MatrixXd::Zero(2, 2), 1.0),
                  NotPositiveDefinite);
}

TEST_CASE("Monte Carlo moments recover the logistic information matrix") {
  // X ~ N(0, I_2) and theta = 0 give H = E[pi(1-pi) XX'] = I/4 exactly.
  const auto logm = RiskModel::logistic(2);
  const auto draw = [](Rng& r) {
    Observation obs;
    obs.x = r.gaussian_vector(2);
    obs.y = r.uniform() < 0.5 ? 1.0 : 0.0;  // theta = 0: both labels equally likely
    return obs;
  };
  Rng rng(2026);
  const auto oracle = estimate_moments(logm, draw, Eigen::VectorXd::Zero(2), 20000, rng);
  const Eigen::MatrixXd target = 0.25 * Eigen::MatrixXd::Identity(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(oracle.hessian.mat()(i, j) - target(i, j)) <=
            5.0 * oracle.hessian_stderr(i, j) + 1e-12);
      CHECK(std::abs(oracle.noise_empirical(i, j) - target(i, j)) <=
            5.0 * oracle.noise_empirical_stderr(i, j) + 1e-12);
    }
  // Information identity: the noise oracle aliases the hessian estimate.
  CHECK((oracle.noise.mat() - oracle.hessian.mat()).norm() == 0.0);
  CHECK(oracle.mc_samples == 20000);
}

TEST_CASE("Monte Carlo moments reject tiny sample counts") {
  const auto logm = RiskModel::logistic(2);
  Rng rng(1);
  const auto draw = [](Rng& r) {
    return Observation{r.gaussian_vector(2), 0.0};
  };
  CHECK_THROWS_AS(estimate_moments(logm, draw, Eigen::VectorXd::Zero(2), 100, rng),
                  std::invalid_argument);
}

TEST_CASE("softmax information matrix is singular in the full parameterization") {
  // Scores are invariant under a shared shift of all class blocks, so the
  // information matrix has a kernel and Cholesky validation must fail.
  const auto soft = RiskModel::softmax(1, 2);
  const auto draw = [](Rng& r) {
    Observation obs;
    obs.x = r.gaussian_vector(1);
    obs.y = r.uniform() < 0.5 ? 0.0 : 1.0;
    return obs;
  };
  Rng rng(9);
  CHECK_THROWS_AS(estimate_moments(soft, draw, Eigen::VectorXd::Zero(2), 10000, rng),
                  NotPositiveDefinite);
}

TEST_CASE("model specifier parsing") {
  CHECK(parse_model("linear:7").id() == "linear:7");
  CHECK(parse_model("logistic:3").id() == "logistic:3");
  CHECK(parse_model("softmax:4,10").id() == "softmax:4,10");
  CHECK_THROWS_AS(parse_model("linear"), std::invalid_argument);
  CHECK_THROWS_AS(parse_model("softmax:4"), std::invalid_argument);
  CHECK_THROWS_AS(parse_model("ridge:3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_model("linear:x"), std::invalid_argument);
}

}  // TEST_SUITE
