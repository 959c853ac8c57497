#include "cbicl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cbicl/errors.hpp"

namespace cbicl {

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

PseudoInverse pinv_psd(const Matrix& m, double tol_factor) {
  if (m.rows() != m.cols()) fail(ErrorKind::InvalidInput, "pinv_psd needs a square matrix");
  if (!m.allFinite()) fail(ErrorKind::InvalidInput, "pinv_psd input has non-finite entries");
  if (!is_symmetric(m, 1e-10)) fail(ErrorKind::InvalidInput, "pinv_psd input is not symmetric");
  if (!(tol_factor > 0.0)) fail(ErrorKind::InvalidInput, "tolerance factor must be positive");

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m));
  PseudoInverse out;
  out.eigenvalues = eig.eigenvalues();
  out.eigenvectors = eig.eigenvectors();

  const auto k = m.rows();
  const double lmax = k > 0 ? std::max(0.0, out.eigenvalues.maxCoeff()) : 0.0;
  out.cutoff = tol_factor * static_cast<double>(k) * lmax *
               std::numeric_limits<double>::epsilon();

  Vector inv_vals = Vector::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (out.eigenvalues(i) > out.cutoff) {
      inv_vals(i) = 1.0 / out.eigenvalues(i);
      ++out.rank;
    }
  }
  out.inverse = symmetrized(out.eigenvectors * inv_vals.asDiagonal() *
                            out.eigenvectors.transpose());
  return out;
}

Matrix pinv_sqrt(const PseudoInverse& p) {
  const auto k = p.eigenvalues.size();
  Vector vals = Vector::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (p.eigenvalues(i) > p.cutoff) vals(i) = 1.0 / std::sqrt(p.eigenvalues(i));
  }
  return symmetrized(p.eigenvectors * vals.asDiagonal() * p.eigenvectors.transpose());
}

double lambda_max_sym(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

double top_k_eigen_sum(const Matrix& m, Eigen::Index k) {
  if (m.size() == 0 || k <= 0) return 0.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m), Eigen::EigenvaluesOnly);
  const Vector& vals = eig.eigenvalues();  // ascending
  const Eigen::Index take = std::min(k, vals.size());
  return vals.tail(take).sum();
}

double lambda1_product(const Matrix& a, const PseudoInverse& b) {
  const Matrix root = pinv_sqrt(b);
  return lambda_max_sym(root * a * root);
}

}  // namespace cbicl
