#include "cbicl/world.hpp"

#include <cmath>

#include "cbicl/bounds.hpp"
#include "cbicl/concept.hpp"
#include "cbicl/errors.hpp"

namespace cbicl {

bool SyntheticWorld::complete(double tol) const {
  return residual.size() == 0 || residual.cwiseAbs().maxCoeff() <= tol;
}

Matrix SyntheticWorld::expected_gram() const {
  Matrix g = Matrix::Zero(K(), K());
  for (std::size_t x = 0; x < alphabet_size(); ++x)
    g += p_x(static_cast<Eigen::Index>(x)) * gram_query(embeddings[x]);
  return symmetrized(g);
}

namespace {

void check_shapes(const Vector& p_x, const std::vector<EmbeddingMatrix>& embeddings) {
  if (embeddings.empty()) fail(ErrorKind::InvalidInput, "world needs at least one input");
  if (p_x.size() != static_cast<Eigen::Index>(embeddings.size()))
    fail(ErrorKind::ShapeMismatch, "P_X length differs from the number of embeddings");
  require_distribution(p_x);
  const auto k = embeddings.front().K();
  const auto m = embeddings.front().M();
  for (const auto& e : embeddings) {
    if (e.K() != k || e.M() != m) fail(ErrorKind::ShapeMismatch, "world embeddings disagree on K or M");
  }
}

}  // namespace

void validate_world(const SyntheticWorld& world) {
  check_shapes(world.p_x, world.embeddings);
  const auto n_x = static_cast<Eigen::Index>(world.alphabet_size());
  if (world.alpha.size() != world.K()) fail(ErrorKind::ShapeMismatch, "alpha length differs from K");
  if (world.residual.rows() != n_x || world.residual.cols() != world.M())
    fail(ErrorKind::ShapeMismatch, "residual table must be |X| x M");
  if (world.conditionals.rows() != n_x || world.conditionals.cols() != world.M())
    fail(ErrorKind::ShapeMismatch, "conditional table must be |X| x M");
  for (Eigen::Index x = 0; x < n_x; ++x) require_distribution(world.conditionals.row(x).transpose());

  Vector orth = Vector::Zero(world.K());
  for (Eigen::Index x = 0; x < n_x; ++x)
    orth += world.p_x(x) * (world.f(static_cast<std::size_t>(x)) * world.residual.row(x).transpose());
  if (orth.cwiseAbs().maxCoeff() > 1e-8)
    fail(ErrorKind::InvalidInput, "residual is not P_X-orthogonal to the embedding features");
}

SyntheticWorld make_world(Vector p_x, std::vector<EmbeddingMatrix> embeddings, Vector alpha,
                          Matrix residual) {
  check_shapes(p_x, embeddings);
  SyntheticWorld w;
  w.p_x = std::move(p_x);
  w.embeddings = std::move(embeddings);
  w.alpha = std::move(alpha);
  const auto n_x = static_cast<Eigen::Index>(w.alphabet_size());
  if (residual.size() == 0)
    w.residual = Matrix::Zero(n_x, w.M());
  else
    w.residual = std::move(residual);
  if (w.alpha.size() != w.K()) fail(ErrorKind::ShapeMismatch, "alpha length differs from K");
  if (w.residual.rows() != n_x || w.residual.cols() != w.M())
    fail(ErrorKind::ShapeMismatch, "residual table must be |X| x M");
  w.conditionals.resize(n_x, w.M());
  for (Eigen::Index x = 0; x < n_x; ++x)
    w.conditionals.row(x) = (w.f(static_cast<std::size_t>(x)).transpose() * w.alpha).transpose() + w.residual.row(x);
  w.rho_achieved = (w.p_x.asDiagonal() * w.residual.array().square().matrix()).sum();
  w.rho_target = w.rho_achieved;
  validate_world(w);
  return w;
}

SyntheticWorld world_from_conditionals(Vector p_x, std::vector<EmbeddingMatrix> embeddings,
                                       Matrix conditionals) {
  check_shapes(p_x, embeddings);
  const ResidualField field = fit_concept_residual(p_x, embeddings, conditionals);
  SyntheticWorld w;
  w.p_x = std::move(p_x);
  w.embeddings = std::move(embeddings);
  w.alpha = field.alpha;
  w.residual = field.residual;
  w.conditionals = std::move(conditionals);
  w.rho_achieved = mean_residual(field, w.p_x);
  w.rho_target = w.rho_achieved;
  validate_world(w);
  return w;
}

}  // namespace cbicl
