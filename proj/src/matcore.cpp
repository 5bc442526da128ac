#include "snewton/matcore.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace snewton {

SymPosMatrix::SymPosMatrix(Eigen::MatrixXd entries) : m_(std::move(entries)) {
  if (m_.rows() != m_.cols())
    throw std::invalid_argument("SymPosMatrix: matrix must be square");
  if (m_.rows() < 1) throw std::invalid_argument("SymPosMatrix: dimension must be >= 1");
  if (!is_symmetric()) throw std::invalid_argument("SymPosMatrix: matrix is not symmetric");
}

SymPosMatrix SymPosMatrix::identity(Eigen::Index dim, double scale) {
  if (dim < 1) throw std::invalid_argument("SymPosMatrix: dimension must be >= 1");
  return SymPosMatrix(scale * Eigen::MatrixXd::Identity(dim, dim));
}

bool SymPosMatrix::is_symmetric(double tol) const {
  for (Eigen::Index j = 0; j < m_.cols(); ++j)
    for (Eigen::Index i = j + 1; i < m_.rows(); ++i)
      if (std::abs(m_(i, j) - m_(j, i)) > tol * (1.0 + std::abs(m_(i, j)))) return false;
  return true;
}

bool SymPosMatrix::is_positive_definite() const {
  Eigen::LLT<Eigen::MatrixXd> llt(m_);
  return llt.info() == Eigen::Success;
}

void SymPosMatrix::require_positive_definite(const std::string& what) const {
  if (!is_positive_definite())
    throw NotPositiveDefinite(what + ": matrix of dim " + std::to_string(dim()) +
                              " is not positive definite");
}

void riccati_update_inplace(SymPosMatrix& m_inv, double u, const Eigen::VectorXd& phi) {
  if (phi.size() != m_inv.dim())
    throw std::invalid_argument("riccati_update: phi has size " + std::to_string(phi.size()) +
                                ", expected " + std::to_string(m_inv.dim()));
  Eigen::MatrixXd& m = m_inv.mat();
  const Eigen::VectorXd w = m.selfadjointView<Eigen::Lower>() * phi;
  const double pivot = 1.0 + u * phi.dot(w);
  if (pivot <= kPivotFloor) {
    std::ostringstream msg;
    msg << "riccati_update: pivot 1 + u*phi'*M*phi = " << pivot << " <= " << kPivotFloor
        << " (u = " << u << ")";
    throw DenominatorNonPositive(msg.str());
  }
  m.selfadjointView<Eigen::Lower>().rankUpdate(w, -u / pivot);
  // Mirror the updated lower triangle so the stored matrix stays exactly
  // symmetric across arbitrarily long update chains.
  m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
}

SymPosMatrix riccati_update(const SymPosMatrix& m_inv, double u, const Eigen::VectorXd& phi) {
  SymPosMatrix out = m_inv;
  riccati_update_inplace(out, u, phi);
  return out;
}

Eigen::MatrixXd random_orthogonal(Eigen::Index dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("random_orthogonal: dimension must be >= 1");
  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::VectorXd rdiag = qr.matrixQR().diagonal();
  // Fix the gauge so that R has a positive diagonal; this makes the
  // distribution exactly Haar rather than QR-implementation dependent.
  for (Eigen::Index j = 0; j < dim; ++j)
    if (rdiag[j] < 0.0) q.col(j) = -q.col(j);
  return q;
}

Eigen::VectorXd sample_unit_sphere(Eigen::Index dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("sample_unit_sphere: dimension must be >= 1");
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::VectorXd v = rng.gaussian_vector(dim);
    const double norm = v.norm();
    if (norm > 1e-300) return v / norm;
  }
  throw DegenerateDraw("sample_unit_sphere: 100 consecutive zero-norm draws");
}

SpectralBounds spectral_bounds(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NoConvergence("spectral_bounds: eigensolver failed to converge");
  const Eigen::VectorXd& ev = solver.eigenvalues();  // sorted ascending
  return SpectralBounds{ev[0], ev[ev.size() - 1]};
}

SpectralBounds spectral_bounds(const SymPosMatrix& m) { return spectral_bounds(m.mat()); }

}  // namespace snewton
