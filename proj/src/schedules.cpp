#include "snewton/schedules.hpp"

#include <cmath>
#include <sstream>

namespace snewton {

void validate(const StepSchedule& s) {
  if (!(s.c > 0.0)) throw std::invalid_argument("step schedule: c must be > 0");
  if (!(s.c_prime >= 0.0)) throw std::invalid_argument("step schedule: c' must be >= 0");
  if (!(s.gamma > 0.5 && s.gamma <= 1.0))
    throw std::invalid_argument("step schedule: gamma must lie in (1/2, 1]");
}

double gamma_at(const StepSchedule& s, std::int64_t n) {
  if (n < 1) throw std::invalid_argument("gamma_at: n must be >= 1");
  return s.c / std::pow(static_cast<double>(n) + s.c_prime, s.gamma);
}

WeightSchedule WeightSchedule::last() { return {Variant::Last, 0.0}; }
WeightSchedule WeightSchedule::uniform() { return {Variant::Uniform, 0.0}; }

WeightSchedule WeightSchedule::polynomial(double omega) {
  if (!(omega >= 0.0)) throw std::invalid_argument("weights: omega must be >= 0");
  return {Variant::Polynomial, omega};
}

WeightSchedule WeightSchedule::logarithmic(double omega) {
  if (!(omega >= 0.0)) throw std::invalid_argument("weights: omega must be >= 0");
  return {Variant::Logarithmic, omega};
}

double weight_at(const WeightSchedule& w, std::int64_t n) {
  switch (w.variant) {
    case WeightSchedule::Variant::Last:
    case WeightSchedule::Variant::Uniform:
      return 1.0;
    case WeightSchedule::Variant::Polynomial:
      return std::pow(static_cast<double>(n) + 1.0, w.omega);
    case WeightSchedule::Variant::Logarithmic:
      // pow(0, 0) == 1, so omega = 0 reproduces the uniform weights and the
      // n = 0 term drops out for any omega > 0.
      return std::pow(std::log(static_cast<double>(n) + 1.0), w.omega);
  }
  throw std::logic_error("weight_at: unreachable");
}

double tau_at(const WeightSchedule& w, std::int64_t n) {
  if (n < 1) throw std::invalid_argument("tau_at: n must be >= 1");
  if (w.variant == WeightSchedule::Variant::Last) return 1.0;
  double cum = 0.0;
  for (std::int64_t k = 0; k <= n; ++k) cum += weight_at(w, k);
  return weight_at(w, n) / cum;
}

double variance_factor(const WeightSchedule& w) {
  switch (w.variant) {
    case WeightSchedule::Variant::Last:
      throw Unsupported("variance_factor: undefined for the last-iterate variant");
    case WeightSchedule::Variant::Uniform:
    case WeightSchedule::Variant::Logarithmic:
      return 1.0;
    case WeightSchedule::Variant::Polynomial:
      return (1.0 + w.omega) * (1.0 + w.omega) / (1.0 + 2.0 * w.omega);
  }
  throw std::logic_error("variance_factor: unreachable");
}

TauCursor::TauCursor(WeightSchedule w) : w_(w), cum_(weight_at(w, 0)) {}

double TauCursor::next() {
  ++n_;
  if (w_.variant == WeightSchedule::Variant::Last) return 1.0;
  const double wn = weight_at(w_, n_);
  cum_ += wn;
  return wn / cum_;
}

namespace {

double parse_double(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument(what + ": cannot parse number '" + text + "'");
  }
  if (pos != text.size())
    throw std::invalid_argument(what + ": trailing characters in '" + text + "'");
  return value;
}

}  // namespace

WeightSchedule parse_weights(const std::string& spec) {
  if (spec == "last") return WeightSchedule::last();
  if (spec == "uniform") return WeightSchedule::uniform();
  const auto colon = spec.find(':');
  if (colon != std::string::npos) {
    const std::string head = spec.substr(0, colon);
    const std::string tail = spec.substr(colon + 1);
    if (head == "poly") return WeightSchedule::polynomial(parse_double(tail, "weights"));
    if (head == "log") return WeightSchedule::logarithmic(parse_double(tail, "weights"));
  }
  throw std::invalid_argument(
      "weights: expected last | uniform | poly:<omega> | log:<omega>, got '" + spec + "'");
}

StepSchedule parse_step(const std::string& spec) {
  const std::string prefix = "step:";
  if (spec.rfind(prefix, 0) != 0)
    throw std::invalid_argument("step schedule: expected step:<c>,<c'>,<gamma>, got '" + spec +
                                "'");
  std::string rest = spec.substr(prefix.size());
  std::istringstream in(rest);
  std::string part;
  double values[3];
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(in, part, ','))
      throw std::invalid_argument("step schedule: expected three comma-separated numbers in '" +
                                  spec + "'");
    values[i] = parse_double(part, "step schedule");
  }
  if (std::getline(in, part, ','))
    throw std::invalid_argument("step schedule: too many fields in '" + spec + "'");
  StepSchedule s{values[0], values[1], values[2]};
  validate(s);
  return s;
}

}  // namespace snewton
