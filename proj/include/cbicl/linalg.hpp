#pragma once

#include <Eigen/Dense>

namespace cbicl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Pseudo-inverse of a symmetric PSD matrix together with the spectrum it was
/// built from. Eigenvalues are ascending (Eigen's order).
struct PseudoInverse {
  Matrix inverse;
  Eigen::Index rank = 0;
  Vector eigenvalues;
  Matrix eigenvectors;
  double cutoff = 0.0;
};

/// Eigendecomposition-based pseudo-inverse. Eigenvalues at or below
/// tol_factor * K * lambda_max * eps are treated as zero.
/// Throws InvalidInput when m is not symmetric within 1e-10.
PseudoInverse pinv_psd(const Matrix& m, double tol_factor = 1.0);

/// Symmetric square root of the pseudo-inverse, (m^+)^{1/2}.
Matrix pinv_sqrt(const PseudoInverse& p);

/// Largest eigenvalue of a symmetric matrix.
double lambda_max_sym(const Matrix& m);

/// Sum of the k largest eigenvalues of a symmetric matrix (all of them when
/// k exceeds the dimension).
double top_k_eigen_sum(const Matrix& m, Eigen::Index k);

/// lambda_1(A * B^+) for symmetric PSD A and B, evaluated on the congruence
/// (B^+)^{1/2} A (B^+)^{1/2}, which shares the nonzero spectrum of A B^+.
double lambda1_product(const Matrix& a, const PseudoInverse& b);

/// Symmetrize (m + m^T) / 2 to wash out rounding asymmetry.
inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool is_symmetric(const Matrix& m, double tol);

}  // namespace cbicl
