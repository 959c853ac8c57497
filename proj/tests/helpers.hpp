#pragma once

#include <cmath>
#include <vector>

#include "cbicl/bounds.hpp"
#include "cbicl/concept.hpp"
#include "cbicl/embedding.hpp"
#include "cbicl/rng.hpp"
#include "cbicl/world.hpp"

namespace testing {

using cbicl::Matrix;
using cbicl::Vector;

inline const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

// Raw row (3, 1) normalizes to [[1, -1], [1, 1]] / sqrt(2); F = I.
inline cbicl::EmbeddingMatrix worked_embedding() {
  Matrix raw(1, 2);
  raw << 3.0, 1.0;
  return cbicl::normalize_embedding(raw);
}

// Single-input world with alpha = (0.3, 1/sqrt(2)), P = (0.5 + 0.3/sqrt(2), 0.5 - 0.3/sqrt(2)).
inline cbicl::SyntheticWorld worked_world() {
  Vector p_x(1);
  p_x << 1.0;
  Vector alpha(2);
  alpha << 0.3, kInvSqrt2;
  return cbicl::make_world(p_x, {worked_embedding()}, alpha, Matrix());
}

inline cbicl::EmbeddingMatrix random_embedding(cbicl::Rng& rng, int d, int m) {
  Matrix raw(d, m);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < m; ++j) raw(i, j) = rng.normal();
  return cbicl::normalize_embedding(raw);
}

inline Vector random_distribution(cbicl::Rng& rng, int m) {
  Vector p(m);
  for (int i = 0; i < m; ++i) p(i) = rng.uniform(0.0, 1.0);
  return p / p.sum();
}

// Independent reference pseudo-inverse.
inline Matrix reference_pinv(const Matrix& m) {
  return Eigen::CompleteOrthogonalDecomposition<Matrix>(m).pseudoInverse();
}

// Independent reference for the largest eigenvalue of a nonsymmetric product.
inline double reference_lambda1(const Matrix& a, const Matrix& b_pinv) {
  Eigen::EigenSolver<Matrix> es(a * b_pinv);
  return es.eigenvalues().real().maxCoeff();
}

// Exact risk by walking every label outcome through the public concept path.
inline double brute_force_risk(const cbicl::SyntheticWorld& w, const std::vector<int>& inputs, int query) {
  const int m = static_cast<int>(w.M());
  const std::size_t n = inputs.size();
  std::vector<int> ys(n, 0);
  double total = 0.0;
  const cbicl::Query q{"q", w.embeddings[static_cast<std::size_t>(query)], std::nullopt};
  while (true) {
    double weight = 1.0;
    std::vector<cbicl::Demonstration> demos;
    for (std::size_t i = 0; i < n; ++i) {
      weight *= w.conditionals(inputs[i], ys[i]);
      demos.push_back({"d" + std::to_string(i), w.embeddings[static_cast<std::size_t>(inputs[i])], ys[i]});
    }
    const auto alpha_hat = cbicl::extract_concept(cbicl::DemonstrationSet(demos));
    const auto est = cbicl::predict_posterior(alpha_hat, q);
    total += weight * (est.values - w.conditional(static_cast<std::size_t>(query))).squaredNorm();
    std::size_t pos = 0;
    while (pos < n && ++ys[pos] == m) ys[pos++] = 0;
    if (pos == n) break;
  }
  return total;
}

}  // namespace testing
