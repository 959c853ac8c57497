#include "cbicl/concept.hpp"

#include <cmath>

#include "cbicl/errors.hpp"

namespace cbicl {

std::string_view to_string(RiskKind kind) {
  switch (kind) {
    case RiskKind::Pointwise: return "pointwise";
    case RiskKind::Enumerated: return "enumerated";
    case RiskKind::MonteCarlo: return "monte_carlo";
    case RiskKind::ClosedForm: return "closed_form";
  }
  return "unknown";
}

ConceptVector extract_concept(const DemonstrationSet& demos, double tol_factor) {
  const PoolGram pool = gram_pool(demos, tol_factor);
  const PseudoInverse inv = pinv_psd(pool.gram, tol_factor);
  ConceptVector out;
  out.coefficients = inv.inverse * mean_feature(demos);
  out.kind = ConceptKind::Extracted;
  out.pool_rank = inv.rank;
  return out;
}

PosteriorEstimate predict_posterior(const ConceptVector& learned, const Query& query) {
  if (learned.coefficients.size() != query.embedding.K())
    fail(ErrorKind::ShapeMismatch, "concept has K=" + std::to_string(learned.coefficients.size()) +
                                       " but query '" + query.id + "' has K=" +
                                       std::to_string(query.embedding.K()));
  return {query.embedding.matrix().transpose() * learned.coefficients, query.id};
}

int argmax_lowest(const Vector& values) {
  int best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values(i) > values(best)) best = static_cast<int>(i);
  }
  return best;
}

int predict_label(const PosteriorEstimate& p) { return argmax_lowest(p.values); }

void require_distribution(const Vector& p, double tol) {
  if (p.size() < 1 || !p.allFinite()) fail(ErrorKind::InvalidInput, "distribution must be finite and non-empty");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) < -tol || p(i) > 1.0 + tol)
      fail(ErrorKind::InvalidInput, "probability " + std::to_string(i) + " outside [0,1]");
  }
  if (std::abs(p.sum() - 1.0) > tol) fail(ErrorKind::InvalidInput, "probabilities do not sum to 1");
}

RiskEstimate squared_risk(const PosteriorEstimate& est, const Vector& truth) {
  require_distribution(truth);
  if (est.values.size() != truth.size())
    fail(ErrorKind::ShapeMismatch, "estimate and truth differ in M");
  return {(est.values - truth).squaredNorm(), RiskKind::Pointwise, 0.0, 0};
}

}  // namespace cbicl
