#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "snewton/data.hpp"
#include "snewton/engine.hpp"

namespace snewton {

// No exact or Monte Carlo moment oracle exists for the requested setup.
struct OracleUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Geometric grid of probe steps from `lo` to `horizon` inclusive,
// deduplicated after rounding; at most `points` entries.
std::vector<std::int64_t> log_probe_grid(std::int64_t horizon, int points = 30,
                                         std::int64_t lo = 10);

// A replicated streaming experiment: every algorithm of the roster is run
// `replicates` times against the same generator. Within one replicate all
// algorithms consume an identical observation stream and share the initial
// point; across replicates streams are independent. All seeds derive from
// base_seed and the replicate/algorithm index, so results are reproducible
// bit for bit regardless of `jobs`.
struct ExperimentConfig {
  explicit ExperimentConfig(GeneratorSpec gen) : generator(std::move(gen)) {}

  GeneratorSpec generator;
  std::vector<AlgorithmConfig> roster;
  double r0 = 1.0;           // initial distance from the truth
  int replicates = 50;
  std::int64_t horizon = 10000;
  std::vector<std::int64_t> probes;  // empty: log_probe_grid(horizon)
  std::uint64_t base_seed = 1;
  int jobs = 1;
};

struct CurveRow {
  std::string algo;
  std::int64_t n = 0;
  int replicates = 0;      // replicates contributing at this probe
  double mse_mean = 0.0;   // mean ||estimate - theta_true||^2
  double mse_stderr = 0.0;
  // Mean largest eigenvalue of the inverse scaled curvature sum
  // (NaN for baselines).
  double lambda_max_inv_mean = 0.0;
};

struct CurveTable {
  std::string experiment_id;
  std::vector<std::string> algos;
  std::vector<std::int64_t> probes;
  std::vector<CurveRow> rows;  // grouped by algorithm, probes ascending
  std::vector<std::string> failures;
};

// Runs the experiment and aggregates mean squared estimation error per
// algorithm and probe. The reported estimate is the averaged track for
// averaging algorithms and the raw iterate otherwise. Runs aborted by a
// curvature failure are excluded from the aggregates and listed in
// `failures`.
CurveTable mse_curve(const ExperimentConfig& cfg);

// Empirical vs theoretical covariance of sqrt(n*) (estimate - theta_true)
// at a single horizon n*, over fresh replicates. The theoretical target is
// variance_factor(weights) * H^{-1} Sigma H^{-1} from the supplied oracle.
struct CltReport {
  Eigen::MatrixXd empirical;
  Eigen::MatrixXd theoretical;
  double trace_empirical = 0.0;
  double trace_theoretical = 0.0;
  double trace_ratio = 0.0;     // empirical / theoretical
  double rel_opnorm_dev = 0.0;  // ||C - T||_2 / ||T||_2
  std::int64_t n_star = 0;
  int replicates = 0;
};

// cfg.roster must hold exactly one algorithm with a covariance theory (an
// averaging Newton variant or averaged SGD); replicates >= 100.
CltReport clt_covariance(const ExperimentConfig& cfg, std::int64_t n_star, int replicates,
                         const MomentOracle& oracle);

// Least squares fit of log(v) against log(n), skipping pairs that are not
// finite and positive.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  int points = 0;
};
LineFit fit_loglog(const std::vector<double>& n, const std::vector<double>& v);

// Decay rate of the squared Frobenius distance between the scaled curvature
// sum S_n/(n+1) and the true curvature H, pooled over all probes (with
// recorded matrices) of all records. The theory grants a decay of at least
// n^{-2 beta}; the fit is flagged when its slope exceeds -2 beta + 1/2.
struct HessianRateReport {
  LineFit fit;
  double bound = 0.0;  // -2 beta + 1/2
  bool flagged = false;
};
HessianRateReport hessian_rate(const std::vector<RunRecord>& records,
                               const SymPosMatrix& hessian, double beta);

// Hard-label evaluation of a fitted classifier on a held-out set:
// counts(i, j) = #samples with true class i predicted as j.
struct ConfusionResult {
  Eigen::MatrixXi counts;
  double accuracy = 0.0;
};
ConfusionResult confusion_matrix(const RiskModel& model, const Eigen::VectorXd& theta,
                                 const LabeledImages& test);

// One-pass softmax fit over a training set plus held-out evaluation.
struct ImageFitResult {
  Eigen::VectorXd theta;
  ConfusionResult confusion;
  std::int64_t steps = 0;
  double seconds = 0.0;
};
ImageFitResult fit_images(const LabeledImages& train, const LabeledImages& test,
                          const AlgorithmConfig& algo, std::uint64_t seed, bool shuffle = true);

// Writers. Numbers use "%.12g"; NaN renders as an empty field.
void write_curve_csv(std::ostream& out, const CurveTable& table);
std::string curve_csv(const CurveTable& table);
void write_clt_csv(std::ostream& out, const CltReport& report);
void write_confusion_csv(std::ostream& out, const ConfusionResult& result);
// Log-log chart of the mse columns, one polyline per algorithm.
void write_curve_svg(std::ostream& out, const CurveTable& table);
// Resolved configuration and failure list as a JSON document (sidecar for
// archived CSV results).
std::string experiment_sidecar_json(const ExperimentConfig& cfg, const CurveTable& table);

}  // namespace snewton
