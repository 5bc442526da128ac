#include "snewton/models.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>

namespace snewton {

namespace {

void check_point(const RiskModel& m, const Eigen::VectorXd& h, const Eigen::VectorXd& x) {
  if (x.size() != m.feature_dim())
    throw DimensionMismatch(m.id() + ": feature vector has size " + std::to_string(x.size()) +
                            ", expected " + std::to_string(m.feature_dim()));
  if (h.size() != m.param_dim())
    throw DimensionMismatch(m.id() + ": parameter vector has size " + std::to_string(h.size()) +
                            ", expected " + std::to_string(m.param_dim()));
}

int class_label(const RiskModel& m, double y) {
  const int k = static_cast<int>(std::lround(y));
  if (static_cast<double>(k) != y || k < 0 || k >= m.num_classes())
    throw std::invalid_argument(m.id() + ": response " + std::to_string(y) +
                                " is not a class index in [0, " +
                                std::to_string(m.num_classes()) + ")");
  return k;
}

double binary_label(const RiskModel& m, double y) {
  if (y != 0.0 && y != 1.0)
    throw std::invalid_argument(m.id() + ": response " + std::to_string(y) +
                                " is not in {0, 1}");
  return y;
}

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  if (t > 35.0) return t + std::exp(-t);
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

Eigen::VectorXd softmax_scores(const RiskModel& m, const Eigen::VectorXd& h,
                               const Eigen::VectorXd& x) {
  const int d = m.feature_dim();
  const int kk = m.num_classes();
  Eigen::VectorXd s(kk);
  for (int k = 0; k < kk; ++k) s[k] = h.segment(static_cast<Eigen::Index>(k) * d, d).dot(x);
  return s;
}

}  // namespace

RiskModel RiskModel::linear(int feature_dim) {
  if (feature_dim < 1) throw std::invalid_argument("linear model: feature_dim must be >= 1");
  return RiskModel(Kind::Linear, feature_dim, 1);
}

RiskModel RiskModel::logistic(int feature_dim) {
  if (feature_dim < 1) throw std::invalid_argument("logistic model: feature_dim must be >= 1");
  return RiskModel(Kind::Logistic, feature_dim, 2);
}

RiskModel RiskModel::softmax(int feature_dim, int num_classes) {
  if (feature_dim < 1) throw std::invalid_argument("softmax model: feature_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("softmax model: need at least 2 classes");
  return RiskModel(Kind::Softmax, feature_dim, num_classes);
}

std::string RiskModel::id() const {
  switch (kind_) {
    case Kind::Linear:
      return "linear:" + std::to_string(d_);
    case Kind::Logistic:
      return "logistic:" + std::to_string(d_);
    case Kind::Softmax:
      return "softmax:" + std::to_string(d_) + "," + std::to_string(k_);
  }
  return "";
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Eigen::VectorXd class_probabilities(const RiskModel& model, const Eigen::VectorXd& h,
                                    const Eigen::VectorXd& x) {
  if (model.kind() != RiskModel::Kind::Softmax)
    throw std::invalid_argument("class_probabilities: softmax models only");
  check_point(model, h, x);
  Eigen::VectorXd s = softmax_scores(model, h, x);
  const double m = s.maxCoeff();
  Eigen::VectorXd p = (s.array() - m).exp();
  return p / p.sum();
}

double loss(const RiskModel& model, const Eigen::VectorXd& h, const Observation& obs) {
  check_point(model, h, obs.x);
  switch (model.kind()) {
    case RiskModel::Kind::Linear: {
      const double r = obs.y - obs.x.dot(h);
      return 0.5 * r * r;
    }
    case RiskModel::Kind::Logistic: {
      const double y = binary_label(model, obs.y);
      const double s = obs.x.dot(h);
      return softplus(s) - y * s;
    }
    case RiskModel::Kind::Softmax: {
      const int y = class_label(model, obs.y);
      Eigen::VectorXd s = softmax_scores(model, h, obs.x);
      const double m = s.maxCoeff();
      const double lse = m + std::log((s.array() - m).exp().sum());
      return lse - s[y];
    }
  }
  throw std::logic_error("loss: unreachable");
}

Eigen::VectorXd gradient(const RiskModel& model, const Eigen::VectorXd& h,
                         const Observation& obs) {
  check_point(model, h, obs.x);
  switch (model.kind()) {
    case RiskModel::Kind::Linear:
      return -(obs.y - obs.x.dot(h)) * obs.x;
    case RiskModel::Kind::Logistic: {
      const double y = binary_label(model, obs.y);
      return (sigmoid(obs.x.dot(h)) - y) * obs.x;
    }
    case RiskModel::Kind::Softmax: {
      const int y = class_label(model, obs.y);
      const Eigen::VectorXd p = class_probabilities(model, h, obs.x);
      const int d = model.feature_dim();
      Eigen::VectorXd g(model.param_dim());
      for (int k = 0; k < model.num_classes(); ++k) {
        const double coeff = p[k] - (k == y ? 1.0 : 0.0);
        g.segment(static_cast<Eigen::Index>(k) * d, d) = coeff * obs.x;
      }
      return g;
    }
  }
  throw std::logic_error("gradient: unreachable");
}

std::vector<HessianUpdate> hessian_updates(const RiskModel& model, const Eigen::VectorXd& h_feed,
                                           const Observation& obs, std::int64_t n,
                                           const TruncationConfig& trunc, Rng& rng) {
  check_point(model, h_feed, obs.x);
  if (n < 0) throw std::invalid_argument("hessian_updates: n must be >= 0");
  const double floor = trunc.c_beta * std::pow(static_cast<double>(n) + 1.0, -trunc.beta);
  switch (model.kind()) {
    case RiskModel::Kind::Linear:
      return {{1.0, obs.x}};
    case RiskModel::Kind::Logistic: {
      const double p = sigmoid(obs.x.dot(h_feed));
      return {{std::max(p * (1.0 - p), floor), obs.x}};
    }
    case RiskModel::Kind::Softmax: {
      // The regularization pair comes first so the curvature operator is
      // perturbed before the gradient outer product is folded in.
      std::vector<HessianUpdate> ups;
      ups.push_back({floor, rng.gaussian_vector(model.param_dim())});
      ups.push_back({1.0, gradient(model, h_feed, obs)});
      return ups;
    }
  }
  throw std::logic_error("hessian_updates: unreachable");
}

double predict(const RiskModel& model, const Eigen::VectorXd& h, const Eigen::VectorXd& x) {
  check_point(model, h, x);
  switch (model.kind()) {
    case RiskModel::Kind::Linear:
      return x.dot(h);
    case RiskModel::Kind::Logistic:
      return x.dot(h) >= 0.0 ? 1.0 : 0.0;
    case RiskModel::Kind::Softmax: {
      const Eigen::VectorXd s = softmax_scores(model, h, x);
      int best = 0;
      for (int k = 1; k < model.num_classes(); ++k)
        if (s[k] > s[best]) best = k;  // ties resolve to the smallest index
      return static_cast<double>(best);
    }
  }
  throw std::logic_error("predict: unreachable");
}

Eigen::MatrixXd MomentOracle::sandwich(double factor) const {
  const Eigen::MatrixXd hinv =
      hessian.mat().llt().solve(Eigen::MatrixXd::Identity(hessian.dim(), hessian.dim()));
  Eigen::MatrixXd t = factor * hinv * noise.mat() * hinv;
  return 0.5 * (t + t.transpose());
}

MomentOracle analytic_linear_moments(const Eigen::MatrixXd& second_moment, double noise_sigma) {
  SymPosMatrix h(second_moment);
  h.require_positive_definite("analytic_linear_moments");
  const Eigen::Index p = h.dim();
  SymPosMatrix sigma(noise_sigma * noise_sigma * second_moment);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd noise_emp = sigma.mat();
  return MomentOracle{std::move(h), std::move(sigma), zero, std::move(noise_emp), zero, 0};
}

namespace {

// Accumulates a matrix mean together with entrywise standard errors.
struct MatrixMean {
  Eigen::MatrixXd sum;
  Eigen::MatrixXd sumsq;
  long count = 0;

  explicit MatrixMean(Eigen::Index p)
      : sum(Eigen::MatrixXd::Zero(p, p)), sumsq(Eigen::MatrixXd::Zero(p, p)) {}

  void add(const Eigen::MatrixXd& term) {
    sum += term;
    sumsq += term.cwiseProduct(term);
    ++count;
  }

  Eigen::MatrixXd mean() const { return sum / static_cast<double>(count); }

  Eigen::MatrixXd stderr_of_mean() const {
    const double m = static_cast<double>(count);
    Eigen::MatrixXd var = (sumsq / m - mean().cwiseProduct(mean())).cwiseMax(0.0);
    return (var / m).cwiseSqrt();
  }
};

Eigen::MatrixXd hessian_term(const RiskModel& model, const Eigen::VectorXd& theta,
                             const Observation& obs) {
  switch (model.kind()) {
    case RiskModel::Kind::Linear:
      return obs.x * obs.x.transpose();
    case RiskModel::Kind::Logistic: {
      const double p = sigmoid(obs.x.dot(theta));
      return (p * (1.0 - p)) * (obs.x * obs.x.transpose());
    }
    case RiskModel::Kind::Softmax: {
      const Eigen::VectorXd p = class_probabilities(model, theta, obs.x);
      const int d = model.feature_dim();
      const int kk = model.num_classes();
      const Eigen::MatrixXd xxt = obs.x * obs.x.transpose();
      Eigen::MatrixXd h(model.param_dim(), model.param_dim());
      for (int a = 0; a < kk; ++a)
        for (int b = 0; b < kk; ++b) {
          const double coeff = (a == b ? p[a] : 0.0) - p[a] * p[b];
          h.block(static_cast<Eigen::Index>(a) * d, static_cast<Eigen::Index>(b) * d, d, d) =
              coeff * xxt;
        }
      return h;
    }
  }
  throw std::logic_error("hessian_term: unreachable");
}

}  // namespace

MomentOracle estimate_moments(const RiskModel& model,
                              const std::function<Observation(Rng&)>& draw,
                              const Eigen::VectorXd& theta, long mc_samples, Rng& rng) {
  if (mc_samples < 10000)
    throw std::invalid_argument("estimate_moments: need at least 10^4 samples");
  if (theta.size() != model.param_dim())
    throw DimensionMismatch("estimate_moments: theta has size " + std::to_string(theta.size()) +
                            ", expected " + std::to_string(model.param_dim()));
  const Eigen::Index p = model.param_dim();

  Rng hess_rng = rng.derive(0x48);
  MatrixMean hess(p);
  for (long i = 0; i < mc_samples; ++i) {
    const Observation obs = draw(hess_rng);
    hess.add(hessian_term(model, theta, obs));
  }

  Rng noise_rng = rng.derive(0x53);
  MatrixMean noise(p);
  for (long i = 0; i < mc_samples; ++i) {
    const Observation obs = draw(noise_rng);
    const Eigen::VectorXd g = gradient(model, theta, obs);
    noise.add(g * g.transpose());
  }

  SymPosMatrix h(hess.mean());
  h.require_positive_definite("estimate_moments: hessian");
  const bool fisher = model.kind() != RiskModel::Kind::Linear;
  SymPosMatrix sigma = fisher ? h : SymPosMatrix(noise.mean());
  if (!fisher) sigma.require_positive_definite("estimate_moments: noise");
  return MomentOracle{std::move(h), std::move(sigma), hess.stderr_of_mean(), noise.mean(),
                      noise.stderr_of_mean(), mc_samples};
}

RiskModel parse_model(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument(
        "model: expected linear:<d> | logistic:<d> | softmax:<d>,<K>, got '" + spec + "'");
  const std::string head = spec.substr(0, colon);
  const std::string tail = spec.substr(colon + 1);
  auto parse_int = [&spec](const std::string& text) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(text, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("model: cannot parse integer in '" + spec + "'");
    }
    if (pos != text.size())
      throw std::invalid_argument("model: trailing characters in '" + spec + "'");
    return v;
  };
  if (head == "linear") return RiskModel::linear(parse_int(tail));
  if (head == "logistic") return RiskModel::logistic(parse_int(tail));
  if (head == "softmax") {
    const auto comma = tail.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("model: softmax needs <d>,<K>, got '" + spec + "'");
    return RiskModel::softmax(parse_int(tail.substr(0, comma)),
                              parse_int(tail.substr(comma + 1)));
  }
  throw std::invalid_argument("model: unknown family '" + head + "'");
}

}  // namespace snewton
