#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "snewton/rng.hpp"

namespace snewton {

// Rank-one update would divide by a non-positive (or numerically vanishing)
// pivot; the inverse recursion is undefined past this point.
struct DenominatorNonPositive : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Repeated random draws failed to produce a usable sample.
struct DegenerateDraw : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative eigensolver did not converge.
struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A matrix required to be positive definite is not.
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense symmetric positive-definite matrix. The constructor checks symmetry;
// positive definiteness is checked on demand (it is an invariant of the
// update operations, not of arbitrary construction).
class SymPosMatrix {
 public:
  explicit SymPosMatrix(Eigen::MatrixXd entries);

  static SymPosMatrix identity(Eigen::Index dim, double scale = 1.0);

  Eigen::Index dim() const { return m_.rows(); }
  const Eigen::MatrixXd& mat() const { return m_; }
  // Mutable access for the update routines; callers must preserve symmetry.
  Eigen::MatrixXd& mat() { return m_; }

  bool is_symmetric(double tol = 1e-10) const;
  bool is_positive_definite() const;
  // Throws NotPositiveDefinite with a short diagnostic if the check fails.
  void require_positive_definite(const std::string& what) const;

 private:
  Eigen::MatrixXd m_;
};

// Smallest admissible pivot 1 + u * phi' M phi in the rank-one update.
inline constexpr double kPivotFloor = 1e-14;

// Rank-one inverse update: given M = A^{-1}, returns (A + u phi phi')^{-1}
// via the Sherman-Morrison identity
//   M' = M - u / (1 + u phi' M phi) (M phi)(M phi)'.
// O(dim^2); the result is re-symmetrized exactly (symmetric rank update on
// the lower triangle, mirrored) so symmetry never drifts across long chains.
// Throws DenominatorNonPositive when the pivot is <= kPivotFloor.
void riccati_update_inplace(SymPosMatrix& m_inv, double u, const Eigen::VectorXd& phi);
SymPosMatrix riccati_update(const SymPosMatrix& m_inv, double u, const Eigen::VectorXd& phi);

// Haar-distributed random orthogonal matrix: QR of an iid Gaussian matrix
// with the sign convention that R has a positive diagonal.
Eigen::MatrixXd random_orthogonal(Eigen::Index dim, Rng& rng);

// Uniform draw on the unit sphere of R^dim (normalized Gaussian vector).
// Throws DegenerateDraw if 100 consecutive draws are numerically zero.
Eigen::VectorXd sample_unit_sphere(Eigen::Index dim, Rng& rng);

struct SpectralBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

// Extreme eigenvalues of a symmetric matrix. Throws NoConvergence if the
// underlying eigensolver fails.
SpectralBounds spectral_bounds(const SymPosMatrix& m);
SpectralBounds spectral_bounds(const Eigen::MatrixXd& symmetric);

}  // namespace snewton
