#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cbicl/embedding.hpp"
#include "cbicl/world.hpp"

namespace cbicl {

// ---------------------------------------------------------------------------
// Label covariance and its spectral bounds

/// A(p) = diag(p) - p p^T. InvalidInput unless p is a distribution.
Matrix label_covariance(const Vector& p);

/// 2 p_max (1 - p_max), an upper bound on lambda_1(label_covariance(p)).
double lemma1_bound(const Vector& p);

/// Largest eigenvalue of the block-diagonal assembly of the given blocks,
/// computed as the maximum over per-block largest eigenvalues.
double block_lambda1(std::span<const Matrix> blocks);

/// Sum of the k largest eigenvalues of the block-diagonal assembly.
double block_top_k_sum(std::span<const Matrix> blocks, Eigen::Index k);

// ---------------------------------------------------------------------------
// Demonstration similarity

struct SimilarityScore {
  double value = 0.0;     // 1 / lambda_1; +inf when there is no overlap
  double lambda1 = 0.0;   // lambda_1(F_q F_n^+)
  bool no_overlap = false;
  Eigen::Index pool_rank = 0;
  std::string candidate_id;
};

/// Score lambda_1^{-1}(F_q F_n^+). NaN input raises InvalidInput,
/// mismatched shapes raise ShapeMismatch.
SimilarityScore similarity_score(const Matrix& fq, const Matrix& fn, double tol_factor = 1.0);

/// Same score from the embeddings themselves. F_n = G G^T with
/// G = [f_1 ... f_n] / sqrt(n), so lambda_1 = ||G^+ f_q||_2^2; working with G
/// squares-roots the conditioning, which keeps copy-of-query pools at one.
SimilarityScore similarity_score(const EmbeddingMatrix& query, std::span<const EmbeddingMatrix> pool,
                                 double tol_factor = 1.0);

struct Candidate {
  std::string id;
  EmbeddingMatrix embedding;
};

/// Rank every candidate by similarity_score(F(query), F(candidate)), highest
/// first, ties by id ascending, and return the top k. Candidates with no
/// overlap sort last. InvalidInput on an empty pool or k outside [1, size].
std::vector<SimilarityScore> select_golden(std::span<const Candidate> pool, const Query& query,
                                           std::size_t k, double tol_factor = 1.0);

/// I - F_n^+ F_n, the projector onto the null space of F_n.
Matrix null_projection(const Matrix& fn, double tol_factor = 1.0);

// ---------------------------------------------------------------------------
// Bound reports

struct BoundReport {
  std::string theorem;
  std::vector<std::pair<std::string, double>> terms;  // signed, in a fixed order
  double bound = 0.0;
  std::optional<double> risk;
  double slack = 0.0;  // one-sided allowance used when the risk is estimated
  double margin = std::numeric_limits<double>::quiet_NaN();
  bool pass = false;

  // Where the check came from, filled in by sweeps.
  std::size_t config_index = 0;
  std::uint64_t world_seed = 0;
  std::vector<std::pair<std::string, double>> context;
  std::string risk_kind;
  double risk_standard_error = 0.0;

  double term(const std::string& name) const;

  /// Record the risk the bound is being checked against. Passes when
  /// risk <= bound + slack + tol * max(1, |bound|), plus any extra
  /// conditions already folded into `extra_ok`.
  void attach_risk(double risk_value, double risk_slack = 0.0, bool extra_ok = true,
                   double tol = 1e-10);
};

/// Complete world, invertible F_n. Loose bound (K/n) l1(F_q F_n^-1) l1(A)
/// and refined bound (1/n) l1(F_q F_n^-1) S_K(A). `bound` is the loose value.
/// RegimeError when F_n is singular or the world is incomplete.
BoundReport theorem1_bound(const SyntheticWorld& world, std::span<const int> demo_inputs,
                           int query_input, double tol_factor = 1.0);

/// Complete world, any rank: main term with F_n^+ plus the insufficiency
/// penalty ||f(x_Q)^T F_n_perp alpha||^2.
BoundReport theorem2_bound(const SyntheticWorld& world, std::span<const int> demo_inputs,
                           int query_input, double tol_factor = 1.0);

/// Incomplete world averaged over queries drawn from P_X: the five signed
/// terms and their sum.
BoundReport theorem3_bound(const SyntheticWorld& world, std::span<const int> demo_inputs,
                           double tol_factor = 1.0);

// ---------------------------------------------------------------------------
// Residual fitting

struct ResidualField {
  Vector alpha;     // K
  Matrix residual;  // |X| x M

  Vector at(std::size_t x) const { return residual.row(static_cast<Eigen::Index>(x)).transpose(); }
  /// Stacked residual over the given inputs (length n*M).
  Vector stacked(std::span<const int> inputs) const;
};

/// P_X-weighted least-squares projection of the conditionals onto the
/// feature span. Minimum-norm alpha when the weighted Gram is singular.
ResidualField fit_concept_residual(const Vector& p_x, std::span<const EmbeddingMatrix> embeddings,
                                   const Matrix& conditionals, double tol_factor = 1.0);
ResidualField fit_concept_residual(const SyntheticWorld& world, double tol_factor = 1.0);

/// sum_{x,y} P_X(x) R(x,y)^2.
double mean_residual(const ResidualField& field, const Vector& p_x);

// ---------------------------------------------------------------------------
// Label-prediction guarantees

struct Lemma2Guarantee {
  int j = 1;           // 1-based rank of the guaranteed floor
  double floor = 0.0;  // P_j
};

/// Strongest floor P_j with risk < (P_1 - P_{j+1})^2 / 2, j in [1, M-1].
/// nullopt when no threshold applies. AssumptionViolated when P_1 = P_2.
std::optional<Lemma2Guarantee> guarantee_lemma2(const Vector& p_true, double risk);

struct Theorem4Guarantee {
  int j = 1;
  double gamma = 0.0;
  double value = 0.0;  // P_j - 2 gamma / (2 P_1 - P_j - P_{j+1})
};

/// Lower bound on the expected true probability of the predicted label given
/// the expected risk. OutOfRange when the risk lies outside every window,
/// AssumptionViolated when P_1 = P_2.
Theorem4Guarantee guarantee_theorem4(const Vector& p_true, double expected_risk);

/// Probabilities sorted descending.
Vector sorted_descending(const Vector& p);

}  // namespace cbicl
