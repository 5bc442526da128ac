#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "snewton/models.hpp"
#include "snewton/rng.hpp"

namespace snewton {

// A split or subset request asked for more samples than exist.
struct SizeExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problems reading IDX-format files.
struct IdxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagic : IdxError {
  using IdxError::IdxError;
};
struct CountMismatch : IdxError {
  using IdxError::IdxError;
};
struct Truncated : IdxError {
  using IdxError::IdxError;
};

enum class GeneratorFamily {
  LinearDiag,    // X = D z, y = theta'X + sigma eps
  LinearCorr,    // X = A D z with a seeded random rotation A
  LogisticStd,   // X = (1, z') with z std normal in R^{d-1}
  LogisticCorr,  // X = A D z
  LogisticIso,   // X = z std normal in R^d
  SoftmaxDiag,   // X = D z, labels from the softmax probabilities
  SoftmaxCorr,   // X = A D z
};

// Synthetic observation distribution: a feature law, a true parameter and a
// response mechanism matching one of the model families. D is always
// diag(1/d, ..., d/d) (feature variances i^2/d^2, condition number d^2),
// z is standard normal, and A is a Haar rotation drawn from `mix_seed` so
// the correlated families are reproducible.
class GeneratorSpec {
 public:
  static GeneratorSpec linear_diag(int d = 10, double sigma = 1.0);
  static GeneratorSpec linear_corr(int d = 10, double sigma = 1.0, std::uint64_t mix_seed = 42);
  static GeneratorSpec logistic_std();
  static GeneratorSpec logistic_corr(int d = 10, std::uint64_t mix_seed = 42);
  static GeneratorSpec logistic_iso(int d = 3);
  static GeneratorSpec softmax_diag(int d = 3, int classes = 3, std::uint64_t theta_seed = 7);
  static GeneratorSpec softmax_corr(int d = 3, int classes = 3, std::uint64_t mix_seed = 42,
                                    std::uint64_t theta_seed = 7);

  GeneratorFamily family() const { return family_; }
  const RiskModel& model() const { return model_; }
  const Eigen::VectorXd& theta_true() const { return theta_; }
  double noise_sigma() const { return sigma_; }
  // E[X X'], exact. Serves as the curvature matrix for the linear families.
  Eigen::MatrixXd feature_second_moment() const;
  std::string id() const;

  GeneratorSpec with_theta(Eigen::VectorXd theta) const;

 private:
  GeneratorSpec(GeneratorFamily family, RiskModel model, Eigen::VectorXd theta,
                Eigen::MatrixXd transform, bool intercept, double sigma);

  GeneratorFamily family_;
  RiskModel model_;
  Eigen::VectorXd theta_;
  Eigen::MatrixXd transform_;  // z |-> linear part of X
  bool intercept_;             // prepend a constant-1 coordinate
  double sigma_;

  friend Observation draw_observation(const GeneratorSpec& spec, Rng& rng);
};

// One draw: features first, then the response, in a fixed rng order.
Observation draw_observation(const GeneratorSpec& spec, Rng& rng);

// Endless i.i.d. stream over a generator.
class GeneratorStream final : public ObservationStream {
 public:
  GeneratorStream(GeneratorSpec spec, std::uint64_t seed);
  bool next(Observation& out) override;

 private:
  GeneratorSpec spec_;
  Rng rng_;
};

// theta_true + r0 * (uniform unit-sphere direction); r0 = 0 starts exactly
// at the truth without consuming randomness.
Eigen::VectorXd initial_point(const Eigen::VectorXd& theta_true, double r0, Rng& rng);

// Specifier grammar (defaults apply when arguments are omitted):
//   linear-diag[:<d>[,<sigma>]] | linear-corr[:<d>[,<sigma>]] | logistic-std
//   | logistic-corr[:<d>] | logistic-iso[:<d>]
//   | softmax-diag[:<d>,<K>] | softmax-corr[:<d>,<K>]
GeneratorSpec parse_generator(const std::string& spec);

// Moments of the generator at its true parameter: exact for the linear
// families, Monte Carlo (mc_samples draws) otherwise.
MomentOracle oracle_for(const GeneratorSpec& spec, long mc_samples, Rng& rng);

// Image classification dataset in memory; one row per sample, pixel values
// scaled to [0, 1].
struct LabeledImages {
  Eigen::MatrixXd images;
  std::vector<int> labels;
  int rows = 0;
  int cols = 0;

  Eigen::Index size() const { return images.rows(); }
  int feature_dim() const { return rows * cols; }
  int num_classes() const;
  // First n samples in file order. Throws SizeExceeded if n > size().
  LabeledImages head(Eigen::Index n) const;
};

// Reads an IDX image/label file pair (the MNIST container format),
// transparently gunzipping files that start with the gzip magic bytes.
// Throws BadMagic / Truncated / CountMismatch naming the offending file and
// offset.
LabeledImages read_idx(const std::string& images_path, const std::string& labels_path);

// Seeded shuffle split into (train, test). Throws SizeExceeded if
// test_count > size.
std::pair<LabeledImages, LabeledImages> train_test_split(const LabeledImages& data,
                                                         Eigen::Index test_count, Rng& rng);

// Single pass over a dataset, optionally in a seeded shuffled order.
class DatasetStream final : public ObservationStream {
 public:
  DatasetStream(const LabeledImages& data, bool shuffle, Rng rng);
  bool next(Observation& out) override;

 private:
  const LabeledImages* data_;
  std::vector<Eigen::Index> order_;
  std::size_t pos_ = 0;
};

}  // namespace snewton
