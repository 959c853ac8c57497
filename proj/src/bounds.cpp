#include "cbicl/bounds.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "cbicl/concept.hpp"
#include "cbicl/errors.hpp"

namespace cbicl {

Matrix label_covariance(const Vector& p) {
  require_distribution(p);
  Matrix a = -p * p.transpose();
  a.diagonal() += p;
  return a;
}

double lemma1_bound(const Vector& p) {
  const double pmax = p.maxCoeff();
  return 2.0 * pmax * (1.0 - pmax);
}

double block_lambda1(std::span<const Matrix> blocks) {
  if (blocks.empty()) fail(ErrorKind::InvalidInput, "block_lambda1 needs at least one block");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) best = std::max(best, lambda_max_sym(b));
  return best;
}

double block_top_k_sum(std::span<const Matrix> blocks, Eigen::Index k) {
  std::vector<double> all;
  for (const auto& b : blocks) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(b), Eigen::EigenvaluesOnly);
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) all.push_back(eig.eigenvalues()(i));
  }
  std::sort(all.begin(), all.end(), std::greater<>());
  const auto take = std::min<std::size_t>(all.size(), static_cast<std::size_t>(std::max<Eigen::Index>(k, 0)));
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += all[i];
  return sum;
}

// ---------------------------------------------------------------------------

SimilarityScore similarity_score(const Matrix& fq, const Matrix& fn, double tol_factor) {
  if (fq.rows() != fq.cols() || fn.rows() != fn.cols() || fq.rows() != fn.rows())
    fail(ErrorKind::ShapeMismatch, "similarity_score needs two K x K matrices of the same K");
  if (fq.hasNaN() || fn.hasNaN()) fail(ErrorKind::InvalidInput, "similarity_score input contains NaN");

  const PseudoInverse inv = pinv_psd(fn, tol_factor);
  SimilarityScore out;
  out.pool_rank = inv.rank;
  out.lambda1 = lambda1_product(fq, inv);

  double inv_max = 0.0;
  for (Eigen::Index i = 0; i < inv.eigenvalues.size(); ++i) {
    if (inv.eigenvalues(i) > inv.cutoff) inv_max = std::max(inv_max, 1.0 / inv.eigenvalues(i));
  }
  const double zero_tol = static_cast<double>(fq.rows()) * std::numeric_limits<double>::epsilon() *
                          std::max(lambda_max_sym(fq), 0.0) * inv_max;
  if (!(out.lambda1 > zero_tol)) {
    out.no_overlap = true;
    out.value = std::numeric_limits<double>::infinity();
  } else {
    out.value = 1.0 / out.lambda1;
  }
  return out;
}

SimilarityScore similarity_score(const EmbeddingMatrix& query, std::span<const EmbeddingMatrix> pool,
                                 double tol_factor) {
  if (pool.empty()) fail(ErrorKind::InvalidInput, "similarity_score needs a non-empty pool");
  if (!(tol_factor > 0.0)) fail(ErrorKind::InvalidInput, "tolerance factor must be positive");
  const Eigen::Index k = query.K(), m = query.M();
  Matrix g(k, m * static_cast<Eigen::Index>(pool.size()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(pool.size()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].K() != k || pool[i].M() != m)
      fail(ErrorKind::ShapeMismatch, "pool item " + std::to_string(i) + " does not match the query shape");
    g.middleCols(m * static_cast<Eigen::Index>(i), m) = scale * pool[i].matrix();
  }
  const Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  // Same cutoff as pinv_psd applies to the eigenvalues sv^2 of F_n.
  const double cutoff = std::sqrt(tol_factor * static_cast<double>(k) * std::numeric_limits<double>::epsilon()) * sv(0);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > cutoff) ++rank;

  SimilarityScore out;
  out.pool_rank = rank;
  if (rank > 0) {
    const Matrix z = sv.head(rank).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank).transpose() *
                     query.matrix();
    const double top = Eigen::JacobiSVD<Matrix>(z).singularValues()(0);
    out.lambda1 = top * top;
  }
  const double fq_norm = query.matrix().squaredNorm();
  const double zero_tol = rank > 0 ? static_cast<double>(k) * std::numeric_limits<double>::epsilon() * fq_norm /
                                         (sv(rank - 1) * sv(rank - 1))
                                   : 0.0;
  if (!(out.lambda1 > zero_tol)) {
    out.no_overlap = true;
    out.value = std::numeric_limits<double>::infinity();
  } else {
    out.value = 1.0 / out.lambda1;
  }
  return out;
}

std::vector<SimilarityScore> select_golden(std::span<const Candidate> pool, const Query& query,
                                           std::size_t k, double tol_factor) {
  if (pool.empty()) fail(ErrorKind::InvalidInput, "candidate pool is empty");
  if (k < 1 || k > pool.size())
    fail(ErrorKind::InvalidInput, "k=" + std::to_string(k) + " outside [1, " +
                                      std::to_string(pool.size()) + "]");
  std::vector<SimilarityScore> scores;
  scores.reserve(pool.size());
  for (const auto& c : pool) {
    if (c.embedding.K() != query.embedding.K() || c.embedding.M() != query.embedding.M())
      fail(ErrorKind::ShapeMismatch, "candidate '" + c.id + "' does not match the query shape");
    SimilarityScore s = similarity_score(query.embedding, std::span(&c.embedding, 1), tol_factor);
    s.candidate_id = c.id;
    scores.push_back(std::move(s));
  }
  std::stable_sort(scores.begin(), scores.end(), [](const SimilarityScore& a, const SimilarityScore& b) {
    if (a.no_overlap != b.no_overlap) return !a.no_overlap;
    if (a.value != b.value) return a.value > b.value;
    return a.candidate_id < b.candidate_id;
  });
  scores.resize(k);
  return scores;
}

Matrix null_projection(const Matrix& fn, double tol_factor) {
  const PseudoInverse inv = pinv_psd(fn, tol_factor);
  return symmetrized(Matrix::Identity(fn.rows(), fn.cols()) - inv.inverse * fn);
}

// ---------------------------------------------------------------------------

double BoundReport::term(const std::string& name) const {
  for (const auto& [key, value] : terms) {
    if (key == name) return value;
  }
  fail(ErrorKind::InvalidInput, "report has no term '" + name + "'");
}

void BoundReport::attach_risk(double risk_value, double risk_slack, bool extra_ok, double tol) {
  risk = risk_value;
  slack = risk_slack;
  margin = bound - risk_value;
  pass = extra_ok && risk_value <= bound + risk_slack + tol * std::max(1.0, std::abs(bound));
}

namespace {

struct PoolContext {
  Matrix fn;
  PseudoInverse inv;
  Matrix perp;
  std::vector<Matrix> covariances;
  double n = 0.0;
};

void check_inputs(const SyntheticWorld& world, std::span<const int> demo_inputs) {
  if (demo_inputs.empty()) fail(ErrorKind::InvalidInput, "need at least one demonstration input");
  for (int x : demo_inputs) {
    if (x < 0 || static_cast<std::size_t>(x) >= world.alphabet_size())
      fail(ErrorKind::InvalidInput, "demonstration input " + std::to_string(x) + " outside the alphabet");
  }
}

void check_query(const SyntheticWorld& world, int query_input) {
  if (query_input < 0 || static_cast<std::size_t>(query_input) >= world.alphabet_size())
    fail(ErrorKind::InvalidInput, "query input outside the alphabet");
}

PoolContext pool_context(const SyntheticWorld& world, std::span<const int> demo_inputs,
                         double tol_factor) {
  check_inputs(world, demo_inputs);
  const auto k = world.K();
  PoolContext ctx;
  ctx.n = static_cast<double>(demo_inputs.size());
  ctx.fn = Matrix::Zero(k, k);
  for (int x : demo_inputs) {
    ctx.fn += gram_query(world.embeddings[static_cast<std::size_t>(x)]);
    ctx.covariances.push_back(label_covariance(world.conditional(static_cast<std::size_t>(x))));
  }
  ctx.fn /= ctx.n;
  ctx.inv = pinv_psd(ctx.fn, tol_factor);
  ctx.perp = symmetrized(Matrix::Identity(k, k) - ctx.inv.inverse * ctx.fn);
  return ctx;
}

}  // namespace

BoundReport theorem1_bound(const SyntheticWorld& world, std::span<const int> demo_inputs,
                           int query_input, double tol_factor) {
  check_query(world, query_input);
  if (!world.complete()) fail(ErrorKind::RegimeError, "theorem 1 needs a complete world (R = 0)");
  const PoolContext ctx = pool_context(world, demo_inputs, tol_factor);
  const auto k = world.K();
  if (ctx.inv.rank < k)
    fail(ErrorKind::RegimeError, "F_n has rank " + std::to_string(ctx.inv.rank) + " < K=" +
                                     std::to_string(k) + "; use theorem2_bound");

  const Matrix fq = gram_query(world.embeddings[static_cast<std::size_t>(query_input)]);
  const double l1_query = lambda1_product(fq, ctx.inv);
  const double l1_cov = block_lambda1(ctx.covariances);
  const double top_k = block_top_k_sum(ctx.covariances, k);
  const double loose = static_cast<double>(k) / ctx.n * l1_query * l1_cov;
  const double refined = l1_query * top_k / ctx.n;

  BoundReport r;
  r.theorem = "theorem1";
  r.terms = {{"lambda1_query_pool", l1_query},
             {"lambda1_label_cov", l1_cov},
             {"top_k_eigsum", top_k},
             {"refined", refined},
             {"loose", loose}};
  r.bound = loose;
  return r;
}

BoundReport theorem2_bound(const SyntheticWorld& world, std::span<const int> demo_inputs,
                           int query_input, double tol_factor) {
  check_query(world, query_input);
  if (world.alpha.size() == 0) fail(ErrorKind::InvalidInput, "theorem 2 needs the ground-truth concept");
  if (world.alpha.size() != world.K()) fail(ErrorKind::ShapeMismatch, "concept length differs from K");
  if (!world.complete()) fail(ErrorKind::RegimeError, "theorem 2 needs a complete world (R = 0)");
  const PoolContext ctx = pool_context(world, demo_inputs, tol_factor);
  const auto k = world.K();

  const auto& fq_emb = world.f(static_cast<std::size_t>(query_input));
  const Matrix fq = gram_query(world.embeddings[static_cast<std::size_t>(query_input)]);
  const double l1_query = lambda1_product(fq, ctx.inv);
  const double l1_cov = block_lambda1(ctx.covariances);
  const double top_k = block_top_k_sum(ctx.covariances, k);
  const double main = static_cast<double>(k) / ctx.n * l1_query * l1_cov;
  const double penalty = (fq_emb.transpose() * (ctx.perp * world.alpha)).squaredNorm();

  BoundReport r;
  r.theorem = "theorem2";
  r.terms = {{"lambda1_query_pool", l1_query},
             {"lambda1_label_cov", l1_cov},
             {"top_k_eigsum", top_k},
             {"refined_main", l1_query * top_k / ctx.n},
             {"main", main},
             {"penalty", penalty},
             {"pool_rank", static_cast<double>(ctx.inv.rank)}};
  r.bound = main + penalty;
  return r;
}

BoundReport theorem3_bound(const SyntheticWorld& world, std::span<const int> demo_inputs,
                           double tol_factor) {
  if (world.residual.size() == 0) fail(ErrorKind::InvalidInput, "theorem 3 needs a residual field");
  if (world.alpha.size() == 0) fail(ErrorKind::InvalidInput, "theorem 3 needs the ground-truth concept");
  const PoolContext ctx = pool_context(world, demo_inputs, tol_factor);
  const auto k = world.K();

  const Matrix fq = world.expected_gram();
  const double l1_query = lambda1_product(fq, ctx.inv);
  const double l1_cov = block_lambda1(ctx.covariances);

  Vector f_times_r = Vector::Zero(k);  // f(x^n) R(x^n)
  double residual_sq = 0.0;            // ||R(x^n)||^2
  for (int x : demo_inputs) {
    const auto xi = static_cast<std::size_t>(x);
    const Vector r = world.residual.row(x).transpose();
    f_times_r += world.f(xi) * r;
    residual_sq += r.squaredNorm();
  }
  double averaged_residual = 0.0;
  for (std::size_t x = 0; x < world.alphabet_size(); ++x)
    averaged_residual += world.p_x(static_cast<Eigen::Index>(x)) *
                         world.residual.row(static_cast<Eigen::Index>(x)).squaredNorm();

  const Vector perp_alpha = ctx.perp * world.alpha;
  const double main = static_cast<double>(k) / ctx.n * l1_query * l1_cov;
  const double residual_term = l1_query * residual_sq / ctx.n;
  const double alignment = perp_alpha.dot(fq * perp_alpha);
  const double cross = -2.0 / ctx.n * f_times_r.dot(ctx.inv.inverse * fq * perp_alpha);

  BoundReport r;
  r.theorem = "theorem3";
  r.terms = {{"main", main},
             {"residual_norm", residual_term},
             {"mean_residual", averaged_residual},
             {"alignment", alignment},
             {"cross", cross},
             {"lambda1_query_pool", l1_query},
             {"lambda1_label_cov", l1_cov},
             {"pool_rank", static_cast<double>(ctx.inv.rank)}};
  r.bound = main + residual_term + averaged_residual + alignment + cross;
  return r;
}

// ---------------------------------------------------------------------------

Vector ResidualField::stacked(std::span<const int> inputs) const {
  const auto m = residual.cols();
  Vector out(static_cast<Eigen::Index>(inputs.size()) * m);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    out.segment(static_cast<Eigen::Index>(i) * m, m) = residual.row(inputs[i]).transpose();
  return out;
}

ResidualField fit_concept_residual(const Vector& p_x, std::span<const EmbeddingMatrix> embeddings,
                                   const Matrix& conditionals, double tol_factor) {
  if (embeddings.empty()) fail(ErrorKind::InvalidInput, "world has no inputs");
  const auto n_x = static_cast<Eigen::Index>(embeddings.size());
  if (p_x.size() != n_x || conditionals.rows() != n_x)
    fail(ErrorKind::ShapeMismatch, "P_X, embeddings and conditionals disagree on |X|");
  const auto k = embeddings.front().K();
  const auto m = embeddings.front().M();
  if (conditionals.cols() != m) fail(ErrorKind::ShapeMismatch, "conditionals disagree on M");

  Matrix g = Matrix::Zero(k, k);
  Vector b = Vector::Zero(k);
  for (Eigen::Index x = 0; x < n_x; ++x) {
    const auto& f = embeddings[static_cast<std::size_t>(x)];
    if (f.K() != k || f.M() != m) fail(ErrorKind::ShapeMismatch, "embeddings disagree on K or M");
    g += p_x(x) * gram_query(f);
    b += p_x(x) * (f.matrix() * conditionals.row(x).transpose());
  }
  ResidualField out;
  out.alpha = pinv_psd(symmetrized(g), tol_factor).inverse * b;
  out.residual.resize(n_x, m);
  for (Eigen::Index x = 0; x < n_x; ++x) {
    const auto& f = embeddings[static_cast<std::size_t>(x)].matrix();
    out.residual.row(x) = conditionals.row(x) - (f.transpose() * out.alpha).transpose();
  }
  return out;
}

ResidualField fit_concept_residual(const SyntheticWorld& world, double tol_factor) {
  return fit_concept_residual(world.p_x, world.embeddings, world.conditionals, tol_factor);
}

double mean_residual(const ResidualField& field, const Vector& p_x) {
  if (p_x.size() != field.residual.rows()) fail(ErrorKind::ShapeMismatch, "P_X length differs from |X|");
  return (p_x.asDiagonal() * field.residual.array().square().matrix()).sum();
}

// ---------------------------------------------------------------------------

Vector sorted_descending(const Vector& p) {
  Vector s = p;
  std::sort(s.data(), s.data() + s.size(), std::greater<>());
  return s;
}

namespace {
Vector ordered_for_guarantee(const Vector& p_true) {
  require_distribution(p_true);
  if (p_true.size() < 2) fail(ErrorKind::InvalidInput, "need M >= 2");
  Vector s = sorted_descending(p_true);
  if (!(s(0) > s(1))) fail(ErrorKind::AssumptionViolated, "the largest probability is tied (P_1 = P_2)");
  return s;
}
}  // namespace

std::optional<Lemma2Guarantee> guarantee_lemma2(const Vector& p_true, double risk) {
  const Vector s = ordered_for_guarantee(p_true);
  if (!(risk >= 0.0)) fail(ErrorKind::InvalidInput, "risk must be nonnegative");
  for (Eigen::Index j = 1; j < s.size(); ++j) {
    const double gap = s(0) - s(j);  // P_1 - P_{j+1}
    if (risk < 0.5 * gap * gap) return Lemma2Guarantee{static_cast<int>(j), s(j - 1)};
  }
  return std::nullopt;
}

Theorem4Guarantee guarantee_theorem4(const Vector& p_true, double expected_risk) {
  const Vector s = ordered_for_guarantee(p_true);
  if (!(expected_risk >= 0.0)) fail(ErrorKind::OutOfRange, "expected risk must be nonnegative");
  auto level = [&](Eigen::Index t) { return 0.5 * (s(0) - s(t)) * (s(0) - s(t)); };
  for (Eigen::Index j = 0; j + 1 < s.size(); ++j) {
    const double lo = level(j);
    const double hi = level(j + 1);
    if (lo <= expected_risk && expected_risk < hi) {
      const double gamma = expected_risk - lo;
      return {static_cast<int>(j + 1), gamma, s(j) - 2.0 * gamma / (2.0 * s(0) - s(j) - s(j + 1))};
    }
  }
  fail(ErrorKind::OutOfRange, "expected risk lies beyond (P_1 - P_M)^2 / 2");
}

}  // namespace cbicl
