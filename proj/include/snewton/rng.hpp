#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace snewton {

// Seeded random stream. All randomness in the library goes through this
// class so that a run replays bit-exactly from its seed; the standard
// <random> distributions are avoided because their output sequences are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform();

  // Standard normal deviate (Marsaglia polar method, cached pair).
  double gaussian();

  // Uniform integer in [0, bound), rejection sampled. bound must be > 0.
  std::uint64_t uniform_int(std::uint64_t bound);

  Eigen::VectorXd gaussian_vector(Eigen::Index n);

  // Independent child stream. Derivation depends only on the construction
  // seed and the id, not on how much of this stream has been consumed.
  Rng derive(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer, used for seed mixing.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace snewton
