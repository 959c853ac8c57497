#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "cbicl/embedding.hpp"

namespace cbicl {

enum class ConceptKind { GroundTruth, Extracted };

/// Concept coefficients over the K embedding features: the planted alpha of
/// a world, or the estimate extracted from a prompt.
struct ConceptVector {
  Vector coefficients;
  ConceptKind kind = ConceptKind::Extracted;
  Eigen::Index pool_rank = 0;  // rank of F_n for extracted vectors
};

/// Raw linear estimate alpha^T f(x_Q, y). Neither clipped nor renormalized.
struct PosteriorEstimate {
  Vector values;
  std::string query_id;
};

enum class RiskKind { Pointwise, Enumerated, MonteCarlo, ClosedForm };

std::string_view to_string(RiskKind kind);

struct RiskEstimate {
  double value = 0.0;
  RiskKind kind = RiskKind::Pointwise;
  double standard_error = 0.0;  // Monte Carlo only
  std::size_t trials = 0;       // Monte Carlo only
};

/// alpha_hat = F_n^+ * mean_feature. The pool rank is recorded on the result.
ConceptVector extract_concept(const DemonstrationSet& demos, double tol_factor = 1.0);

/// values[y] = alpha^T f(x_Q, y). Throws ShapeMismatch when K differs.
PosteriorEstimate predict_posterior(const ConceptVector& learned, const Query& query);

/// Smallest index attaining the maximum.
int predict_label(const PosteriorEstimate& p);
int argmax_lowest(const Vector& values);

/// sum_y (est_y - truth_y)^2. truth must be a distribution (entries in [0,1],
/// sum within 1e-9 of one); otherwise InvalidInput.
RiskEstimate squared_risk(const PosteriorEstimate& est, const Vector& truth);

/// Throws InvalidInput unless p is a probability vector within tol.
void require_distribution(const Vector& p, double tol = 1e-9);

}  // namespace cbicl
