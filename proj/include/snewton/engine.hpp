#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "snewton/matcore.hpp"
#include "snewton/models.hpp"
#include "snewton/schedules.hpp"

namespace snewton {

// A bounded run needed more observations than the stream could provide.
struct StreamExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Point at which the curvature pairs are evaluated: the raw iterate or the
// weighted average (both read before the step updates them).
enum class HessianFeed { RawIterate, AveragedIterate };

// Streaming Newton configuration. One step with step count n (0-based):
//   1. h_feed  := averaged or raw iterate, read pre-update
//   2. g       := gradient at the raw iterate
//   3. theta~  -= gamma_{n+1} * (n+1) * S_n^{-1} g
//   4. theta_avg folds theta~ in with weight tau_{n+1}
//   5. S^{-1} absorbs the rank-one curvature pairs of (h_feed, obs)
// where S_n = c0 * I + sum of curvature pairs so far; (n+1) * S_n^{-1} is
// the inverse of the *averaged* curvature estimate.
struct NewtonConfig {
  StepSchedule step;
  WeightSchedule weights = WeightSchedule::last();
  HessianFeed feed = HessianFeed::RawIterate;
  TruncationConfig trunc;
  double c0 = 1.0;  // initial curvature sum c0 * I, c0 > 0

  // gamma_n = 1/(n + c_theta), last iterate, curvature fed the raw iterate.
  // With these choices step 3 collapses to the classical full-Newton
  // recursion theta -= (n+1+c_theta)^{-1} * [(n+1) S_n^{-1}] g.
  static NewtonConfig sna(double c_theta = 0.0);
  // Same but with gamma_n = n^{-3/4}.
  static NewtonConfig sna75();
  // Weighted averaged variant: gamma_n = n^{-3/4}, curvature fed the
  // averaged iterate.
  static NewtonConfig wasna(WeightSchedule weights);
};

// Checks the step schedule, c0 > 0, c_beta > 0 and that beta lies in the
// admissible window (0, gamma - 1/2) for the configured gamma.
void validate(const NewtonConfig& cfg);

struct NewtonState {
  Eigen::VectorXd theta_tilde;
  Eigen::VectorXd theta_avg;
  SymPosMatrix sum_inv;  // S_n^{-1}, the unscaled inverse curvature sum
  std::int64_t n = 0;
  TauCursor tau;
  Rng rng;

  static NewtonState init(const NewtonConfig& cfg, const RiskModel& model,
                          Eigen::VectorXd theta0, std::uint64_t seed);
};

// One streaming Newton step; O(d^2) per observation. Throws
// DenominatorNonPositive if a curvature pair would make the sum singular
// (the state is then no longer usable).
void newton_step(NewtonState& state, const NewtonConfig& cfg, const RiskModel& model,
                 const Observation& obs);

// First-order baselines sharing the run harness.
enum class BaselineKind { Sgd, AveragedSgd, Adagrad, AveragedAdagrad };

struct BaselineConfig {
  BaselineKind kind = BaselineKind::Sgd;
  double c = 1.0;       // step scale
  double gamma = 0.75;  // sgd decay exponent, in (1/2, 1]
  double eps = 1e-8;    // adagrad damping
};

struct BaselineState {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_avg;
  Eigen::VectorXd grad_sq;  // adagrad coordinate-wise accumulator
  std::int64_t n = 0;
};

BaselineState baseline_init(const BaselineConfig& cfg, const RiskModel& model,
                            Eigen::VectorXd theta0);
void baseline_step(BaselineState& state, const BaselineConfig& cfg, const RiskModel& model,
                   const Observation& obs);

// An algorithm the experiment harness can run; `id` doubles as the label in
// result tables. `averaged()` says which track is the algorithm's reported
// estimate.
struct AlgorithmConfig {
  std::string id;
  std::variant<NewtonConfig, BaselineConfig> config;

  bool averaged() const;
  bool is_newton() const { return std::holds_alternative<NewtonConfig>(config); }
  const NewtonConfig& newton() const { return std::get<NewtonConfig>(config); }
  const BaselineConfig& baseline() const { return std::get<BaselineConfig>(config); }
};

// Specifier grammar: sna | sna75 | wasna-uniform | wasna-poly:<omega> |
// wasna-log:<omega> | sgd | asgd | adagrad | avg-adagrad.
AlgorithmConfig parse_algorithm(const std::string& spec);

// Type-erased optimizer over one model, driven one observation at a time.
class StreamingOptimizer {
 public:
  virtual ~StreamingOptimizer() = default;
  virtual void step(const Observation& obs) = 0;
  virtual std::int64_t steps() const = 0;
  virtual const Eigen::VectorXd& iterate() const = 0;   // raw track
  virtual const Eigen::VectorXd& averaged() const = 0;  // averaged track
  // Non-null for Newton algorithms; exposes the curvature state.
  virtual const NewtonState* newton_state() const { return nullptr; }
};

std::unique_ptr<StreamingOptimizer> make_optimizer(const AlgorithmConfig& algo,
                                                   const RiskModel& model,
                                                   Eigen::VectorXd theta0, std::uint64_t seed);

// State captured at one probe step. Spectra and matrices refer to the
// *scaled* curvature sum S_n / (n+1) of Newton algorithms; they are NaN /
// empty for baselines or when recording is off.
struct ProbeSnapshot {
  std::int64_t n = 0;
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_avg;
  double lambda_min_scaled = std::numeric_limits<double>::quiet_NaN();
  double lambda_max_scaled = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd scaled_sum;
};

struct RunFailure {
  std::int64_t at_step = -1;
  std::string message;
  bool failed() const { return at_step >= 0; }
};

struct RunRecord {
  std::vector<ProbeSnapshot> probes;
  ProbeSnapshot final_state;
  std::int64_t steps = 0;
  // FNV-1a hash of every consumed observation; two runs that saw the same
  // data have equal hashes, which the experiment harness uses to assert
  // that competing algorithms were fed identical streams.
  std::uint64_t stream_hash = 0;
  RunFailure failure;
};

struct RunOptions {
  // Strictly increasing step counts (>= 1) at which to snapshot. Empty
  // means: consume the stream to exhaustion and record only the end state.
  std::vector<std::int64_t> probes;
  bool record_spectra = false;
  bool record_matrices = false;
};

// Drives the optimizer until the last probe (or stream end when no probes
// are given). Throws StreamExhausted if the stream ends before the last
// probe. A DenominatorNonPositive thrown by a step is captured in
// `failure` and ends the run early rather than propagating.
RunRecord run(StreamingOptimizer& opt, ObservationStream& stream, const RunOptions& opts);

// Growth diagnostic for the inverse scaled curvature sum: the theory allows
// lambda_max((S_n/(n+1))^{-1}) to grow at most like n^beta, so the ratio
// lambda_max / n^beta should stay bounded along the run. The run is flagged
// when the max ratio over the last quarter of probes exceeds 10x the max
// over the first quarter.
struct EigenvalueDiagnostics {
  double max_lambda_max_scaled = 0.0;  // max over probes of lambda_max(S_n/(n+1))
  double max_inv_ratio = 0.0;          // max over probes of lambda_max(inverse)/n^beta
  double first_quarter_max = 0.0;
  double last_quarter_max = 0.0;
  double growth = 0.0;
  bool flagged = false;
};

// Requires at least 4 probes with recorded spectra.
EigenvalueDiagnostics eigenvalue_diagnostics(const RunRecord& rec, double beta);

}  // namespace snewton
