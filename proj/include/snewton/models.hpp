#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "snewton/matcore.hpp"
#include "snewton/rng.hpp"

namespace snewton {

struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One observation of a stream: features x and response y. The response is a
// real value for least squares, 0/1 for logistic regression, and a 0-based
// class index for softmax regression.
struct Observation {
  Eigen::VectorXd x;
  double y = 0.0;
};

// Streaming source of observations.
class ObservationStream {
 public:
  virtual ~ObservationStream() = default;
  // Fills `out` and returns true, or returns false once exhausted.
  virtual bool next(Observation& out) = 0;
};

// Floor c_beta * (n+1)^{-beta} applied to curvature coefficients that can
// collapse to zero (logistic) and to the Gaussian regularization pairs
// (softmax), keeping the accumulated curvature operator invertible.
struct TruncationConfig {
  double c_beta = 1.0;
  double beta = 0.125;
};

// One rank-one curvature contribution u * phi phi'.
struct HessianUpdate {
  double u = 0.0;
  Eigen::VectorXd phi;
};

// Model family for streaming empirical risk minimization: least squares,
// logistic regression, or multinomial (softmax) regression. For softmax the
// parameter vector stacks the K class blocks: h = (h_1', ..., h_K')' with
// h_k = h.segment(k*d, d).
class RiskModel {
 public:
  enum class Kind { Linear, Logistic, Softmax };

  static RiskModel linear(int feature_dim);
  static RiskModel logistic(int feature_dim);
  static RiskModel softmax(int feature_dim, int num_classes);

  Kind kind() const { return kind_; }
  int feature_dim() const { return d_; }
  int num_classes() const { return k_; }
  int param_dim() const { return kind_ == Kind::Softmax ? d_ * k_ : d_; }
  std::string id() const;

 private:
  RiskModel(Kind kind, int d, int k) : kind_(kind), d_(d), k_(k) {}

  Kind kind_;
  int d_;
  int k_;
};

// Pointwise loss g(x, y, h): squared error (y - x'h)^2 / 2, logistic
// negative log-likelihood, or softmax cross-entropy.
double loss(const RiskModel& model, const Eigen::VectorXd& h, const Observation& obs);

// Gradient of the pointwise loss in h. Closed forms:
//   linear    -x (y - x'h)
//   logistic   x (pi(x'h) - y)
//   softmax    block k: x (sigma_k(x, h) - 1{y == k})
Eigen::VectorXd gradient(const RiskModel& model, const Eigen::VectorXd& h,
                         const Observation& obs);

// Rank-one curvature contributions of one observation, evaluated at the feed
// point h_feed on step n (0-based). Linear yields (1, x); logistic yields
// one pair whose coefficient is floored at c_beta (n+1)^{-beta}; softmax
// yields a Gaussian regularization pair (c_beta (n+1)^{-beta}, Z) with
// Z ~ N(0, I) drawn from `rng`, followed by (1, gradient at h_feed).
std::vector<HessianUpdate> hessian_updates(const RiskModel& model, const Eigen::VectorXd& h_feed,
                                           const Observation& obs, std::int64_t n,
                                           const TruncationConfig& trunc, Rng& rng);

// Point prediction: x'h (linear), hard 0/1 label (logistic, 1 iff
// pi(x'h) >= 1/2), or the smallest maximizing class index (softmax).
double predict(const RiskModel& model, const Eigen::VectorXd& h, const Eigen::VectorXd& x);

// Class probabilities sigma(x, h) for softmax models (computed with the
// max-subtraction trick; entries sum to one).
Eigen::VectorXd class_probabilities(const RiskModel& model, const Eigen::VectorXd& h,
                                    const Eigen::VectorXd& x);

// Numerically stable logistic function 1 / (1 + exp(-t)).
double sigmoid(double t);

// Curvature and noise moments of a model at a parameter point:
//   hessian  H     = E[ d^2/dh^2 g(X, Y, h) ]
//   noise    Sigma = E[ grad g  grad g' ]
// For well-specified logistic/softmax models these coincide (information
// identity), and `noise` is set to the hessian estimate. `noise_empirical`
// is always an independent Monte Carlo estimate of Sigma, kept for
// cross-checks; stderr matrices hold entrywise Monte Carlo standard errors
// (zero on analytic paths).
struct MomentOracle {
  SymPosMatrix hessian;
  SymPosMatrix noise;
  Eigen::MatrixXd hessian_stderr;
  Eigen::MatrixXd noise_empirical;
  Eigen::MatrixXd noise_empirical_stderr;
  long mc_samples = 0;

  // factor * H^{-1} Sigma H^{-1}, symmetrized.
  Eigen::MatrixXd sandwich(double factor) const;
};

// Exact moments for least squares with E[XX'] = second_moment and
// independent N(0, noise_sigma^2) residuals: H = E[XX'], Sigma = sigma^2 H.
MomentOracle analytic_linear_moments(const Eigen::MatrixXd& second_moment, double noise_sigma);

// Monte Carlo moments at `theta` from mc_samples >= 10^4 draws (plus an
// equally sized independent batch for noise_empirical). Throws
// NotPositiveDefinite if the hessian estimate fails Cholesky validation
// (e.g. softmax in the full parameterization, whose information matrix is
// singular along the shared-shift directions).
MomentOracle estimate_moments(const RiskModel& model,
                              const std::function<Observation(Rng&)>& draw,
                              const Eigen::VectorXd& theta, long mc_samples, Rng& rng);

// Specifier grammar: "linear:<d>" | "logistic:<d>" | "softmax:<d>,<K>".
RiskModel parse_model(const std::string& spec);

}  // namespace snewton
