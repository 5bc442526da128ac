#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace snewton {

// Requested quantity is undefined for the configured variant.
struct Unsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Step sizes gamma_n = c / (n + c')^gamma for n >= 1.
struct StepSchedule {
  double c = 1.0;        // c > 0
  double c_prime = 0.0;  // c' >= 0
  double gamma = 0.75;   // gamma in (1/2, 1]
};

void validate(const StepSchedule& s);
double gamma_at(const StepSchedule& s, std::int64_t n);

// Averaging weights. The iterate average after step n is
//   theta_avg_n = sum_{k=0..n} w_k theta_k / sum_{k=0..n} w_k,
// maintained recursively through tau_n = w_n / W_n with W_n the cumulative
// weight. Variants:
//   Last         w puts all mass on the newest iterate (tau == 1, no average)
//   Uniform      w_k = 1
//   Polynomial   w_k = (k+1)^omega
//   Logarithmic  w_k = ln(k+1)^omega, with 0^0 = 1 so omega = 0 is Uniform
struct WeightSchedule {
  enum class Variant { Last, Uniform, Polynomial, Logarithmic };

  Variant variant = Variant::Logarithmic;
  double omega = 2.0;  // exponent, >= 0; ignored by Last and Uniform

  static WeightSchedule last();
  static WeightSchedule uniform();
  static WeightSchedule polynomial(double omega);
  static WeightSchedule logarithmic(double omega);
};

// Weight w_n of iterate n (n >= 0).
double weight_at(const WeightSchedule& w, std::int64_t n);

// tau_n = w_n / sum_{k=0..n} w_k for n >= 1. O(n); use TauCursor in loops.
double tau_at(const WeightSchedule& w, std::int64_t n);

// Scale factor of the limiting covariance of the weighted average relative
// to the uniform average: 1 for Uniform and Logarithmic,
// (1+omega)^2 / (1+2 omega) for Polynomial. Throws Unsupported for Last.
double variance_factor(const WeightSchedule& w);

// Streams tau_1, tau_2, ... in O(1) per step by carrying the cumulative
// weight sum.
class TauCursor {
 public:
  explicit TauCursor(WeightSchedule w);

  // Returns tau_n for the next n (first call yields tau_1).
  double next();
  std::int64_t index() const { return n_; }

 private:
  WeightSchedule w_;
  std::int64_t n_ = 0;
  double cum_;
};

// Specifier grammar: "last" | "uniform" | "poly:<omega>" | "log:<omega>".
WeightSchedule parse_weights(const std::string& spec);

// Specifier grammar: "step:<c>,<c_prime>,<gamma>".
StepSchedule parse_step(const std::string& spec);

}  // namespace snewton
