#pragma once

#include <cstdint>
#include <vector>

#include "cbicl/embedding.hpp"

namespace cbicl {

/// Finite ground-truth world: an input alphabet with P_X, one normalized
/// embedding per input, a concept alpha and a residual table R, and the
/// implied conditionals P(y|x) = alpha^T f(x,y) + R(x,y).
struct SyntheticWorld {
  std::uint64_t seed = 0;
  Vector p_x;                              // |X|
  std::vector<EmbeddingMatrix> embeddings;  // one per input
  Vector alpha;                             // K
  Matrix residual;                          // |X| x M
  Matrix conditionals;                      // |X| x M

  // Generator bookkeeping.
  double rho_target = 0.0;
  double rho_achieved = 0.0;
  int alpha_shrink_steps = 0;
  int residual_shrink_steps = 0;

  std::size_t alphabet_size() const { return embeddings.size(); }
  Eigen::Index K() const { return embeddings.front().K(); }
  Eigen::Index M() const { return embeddings.front().M(); }
  Vector conditional(std::size_t x) const { return conditionals.row(static_cast<Eigen::Index>(x)).transpose(); }
  const Matrix& f(std::size_t x) const { return embeddings.at(x).matrix(); }

  /// True when every residual entry is within tol of zero.
  bool complete(double tol = 1e-10) const;

  /// F_Q = sum_x P_X(x) F(x).
  Matrix expected_gram() const;
};

/// Build a world from a concept and residual table, deriving the
/// conditionals. Validates shapes, P_X, and that every conditional is a
/// distribution within 1e-9 (InvalidInput otherwise).
SyntheticWorld make_world(Vector p_x, std::vector<EmbeddingMatrix> embeddings, Vector alpha,
                          Matrix residual);

/// Build a world from observed conditionals: alpha and R come from the
/// P_X-weighted least-squares projection onto the embedding span.
SyntheticWorld world_from_conditionals(Vector p_x, std::vector<EmbeddingMatrix> embeddings,
                                       Matrix conditionals);

/// Throws InvalidInput unless each conditional is a distribution, R is
/// P_X-orthogonal to every feature within 1e-8, and shapes agree.
void validate_world(const SyntheticWorld& world);

}  // namespace cbicl
