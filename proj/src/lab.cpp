#include "cbicl/lab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <thread>

#include "cbicl/errors.hpp"
#include "cbicl/rng.hpp"

namespace cbicl::lab {

namespace {

constexpr int kMaxShrinkSteps = 60;
constexpr double kMinProbability = 0.01;
constexpr double kCheckTol = 1e-10;

Matrix implied_conditionals(const std::vector<EmbeddingMatrix>& embeddings, const Vector& alpha) {
  Matrix out(static_cast<Eigen::Index>(embeddings.size()), embeddings.front().M());
  for (std::size_t x = 0; x < embeddings.size(); ++x)
    out.row(static_cast<Eigen::Index>(x)) = (embeddings[x].matrix().transpose() * alpha).transpose();
  return out;
}

bool conditionals_valid(const Matrix& p) { return p.minCoeff() >= 0.0 && p.maxCoeff() <= 1.0; }

double tolerance_for(double value) { return kCheckTol * std::max(1.0, std::abs(value)); }

/// Run body(i) for i in [0, count) on up to `workers` threads. An exception
/// from the lowest failing index is rethrown after all threads join.
void run_indexed(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(count);
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_demo_inputs(const SyntheticWorld& world, std::span<const int> demo_inputs) {
  if (demo_inputs.empty()) fail(ErrorKind::InvalidInput, "need at least one demonstration input");
  for (int x : demo_inputs) {
    if (x < 0 || static_cast<std::size_t>(x) >= world.alphabet_size())
      fail(ErrorKind::InvalidInput, "demonstration input outside the alphabet");
  }
}

void check_query_input(const SyntheticWorld& world, int query_input) {
  if (query_input < 0 || static_cast<std::size_t>(query_input) >= world.alphabet_size())
    fail(ErrorKind::InvalidInput, "query input outside the alphabet");
}

Matrix pool_gram(const SyntheticWorld& world, std::span<const int> demo_inputs) {
  Matrix fn = Matrix::Zero(world.K(), world.K());
  for (int x : demo_inputs) fn += gram_query(world.embeddings[static_cast<std::size_t>(x)]);
  return symmetrized(fn / static_cast<double>(demo_inputs.size()));
}

/// Per-demo contribution to alpha_hat: column y of contrib[i] is
/// F_n^+ f(x_i, y) / n, so alpha_hat = sum_i contrib[i].col(y_i).
struct Estimator {
  PseudoInverse inv;
  std::vector<Matrix> contrib;
  std::vector<Vector> label_probs;
};

Estimator make_estimator(const SyntheticWorld& world, std::span<const int> demo_inputs,
                         double tol_factor) {
  check_demo_inputs(world, demo_inputs);
  Estimator e;
  e.inv = pinv_psd(pool_gram(world, demo_inputs), tol_factor);
  const double n = static_cast<double>(demo_inputs.size());
  for (int x : demo_inputs) {
    const auto xi = static_cast<std::size_t>(x);
    e.contrib.push_back(e.inv.inverse * world.f(xi) / n);
    e.label_probs.push_back(world.conditional(xi));
  }
  return e;
}

/// Visit every label outcome with positive probability, in lexicographic order.
template <typename Visit>
void for_each_outcome(const std::vector<Vector>& probs, Visit&& visit) {
  const std::size_t n = probs.size();
  const auto m = static_cast<int>(probs.front().size());
  std::vector<int> ys(n, 0);
  while (true) {
    double weight = 1.0;
    for (std::size_t i = 0; i < n && weight != 0.0; ++i) weight *= probs[i](ys[i]);
    if (weight != 0.0) visit(ys, weight);
    std::size_t pos = 0;
    while (pos < n && ++ys[pos] == m) ys[pos++] = 0;
    if (pos == n) break;
  }
}

int sample_label(const Vector& p, double u) {
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index y = 0; y < p.size(); ++y) {
    if (p(y) > 0.0) last_positive = static_cast<int>(y);
    acc += p(y);
    if (u < acc) return static_cast<int>(y);
  }
  return last_positive;
}

struct WeightedQuery {
  Matrix f_t;   // f(x_Q)^T, M x K
  Vector truth;
  double weight;
};

RiskEstimate montecarlo_core(const Estimator& est, const std::vector<WeightedQuery>& queries,
                             std::size_t trials, std::uint64_t seed, unsigned workers) {
  if (trials < 100) fail(ErrorKind::InvalidInput, "Monte Carlo needs at least 100 trials");
  std::vector<double> losses(trials, 0.0);
  const std::size_t n = est.contrib.size();
  const auto k = est.inv.inverse.rows();

  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), trials));
  const std::size_t chunk = (trials + threads - 1) / threads;
  auto work = [&](std::size_t begin, std::size_t end) {
    Vector alpha_hat(k);
    for (std::size_t t = begin; t < end; ++t) {
      Rng rng(stable_hash(seed, t));
      alpha_hat.setZero();
      for (std::size_t i = 0; i < n; ++i) alpha_hat += est.contrib[i].col(sample_label(est.label_probs[i], rng.uniform()));
      double loss = 0.0;
      for (const auto& q : queries) loss += q.weight * (q.f_t * alpha_hat - q.truth).squaredNorm();
      losses[t] = loss;
    }
  };
  if (threads <= 1) {
    work(0, trials);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(trials, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  double sum = 0.0;
  for (double l : losses) sum += l;
  const double mean = sum / static_cast<double>(trials);
  double sq = 0.0;
  for (double l : losses) sq += (l - mean) * (l - mean);
  const double var = sq / static_cast<double>(trials - 1);
  return {mean, RiskKind::MonteCarlo, std::sqrt(var / static_cast<double>(trials)), trials};
}

}  // namespace

// ---------------------------------------------------------------------------

SyntheticWorld generate_world(std::uint64_t seed, std::size_t alphabet, int labels, int features,
                              Completeness completeness) {
  if (features < 2) fail(ErrorKind::InvalidInput, "need K >= 2 (one feature plus the bias)");
  if (labels < 2) fail(ErrorKind::InvalidInput, "need M >= 2");
  if (alphabet < 1) fail(ErrorKind::InvalidInput, "need |X| >= 1");
  if (!std::isfinite(completeness.rho)) fail(ErrorKind::InvalidInput, "residual scale must be finite");

  Rng rng(seed);
  const auto n_x = static_cast<Eigen::Index>(alphabet);
  Vector p_x(n_x);
  for (Eigen::Index x = 0; x < n_x; ++x) p_x(x) = rng.uniform(0.5, 1.5);
  p_x /= p_x.sum();

  std::vector<EmbeddingMatrix> embeddings;
  embeddings.reserve(alphabet);
  for (std::size_t x = 0; x < alphabet; ++x) {
    Matrix raw(features - 1, labels);
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      for (Eigen::Index j = 0; j < raw.cols(); ++j) raw(i, j) = rng.normal();
    embeddings.push_back(normalize_embedding(raw));
  }

  Matrix g = Matrix::Zero(features, features);
  for (Eigen::Index x = 0; x < n_x; ++x) g += p_x(x) * gram_query(embeddings[static_cast<std::size_t>(x)]);
  const PseudoInverse g_inv = pinv_psd(symmetrized(g));
  const Matrix identifiable = g_inv.inverse * g;

  const Eigen::Index bias_row = features - 1;
  const double bias = 1.0 / std::sqrt(static_cast<double>(labels));
  Vector direction(features);
  for (Eigen::Index k = 0; k < bias_row; ++k) direction(k) = rng.uniform(-1.0, 1.0);
  direction(bias_row) = 0.0;
  direction = identifiable * direction;
  direction(bias_row) = 0.0;

  auto concept_from = [&](const Vector& dir) {
    Vector a = dir;
    a(bias_row) = bias;
    return a;
  };
  int alpha_steps = 0;
  Vector alpha = concept_from(direction);
  while (implied_conditionals(embeddings, alpha).minCoeff() < kMinProbability) {
    if (alpha_steps == kMaxShrinkSteps)
      fail(ErrorKind::GenerationFailed, "concept could not be shrunk into a valid world");
    direction *= 0.5;
    ++alpha_steps;
    alpha = concept_from(direction);
  }

  Matrix residual = Matrix::Zero(n_x, labels);
  int residual_steps = 0;
  if (!completeness.is_complete()) {
    Matrix r(n_x, labels);
    for (Eigen::Index x = 0; x < n_x; ++x)
      for (Eigen::Index y = 0; y < labels; ++y) r(x, y) = rng.normal();
    for (Eigen::Index x = 0; x < n_x; ++x) r.row(x).array() -= r.row(x).mean();

    Vector b = Vector::Zero(features);
    for (Eigen::Index x = 0; x < n_x; ++x)
      b += p_x(x) * (embeddings[static_cast<std::size_t>(x)].matrix() * r.row(x).transpose());
    const Vector beta = g_inv.inverse * b;
    for (Eigen::Index x = 0; x < n_x; ++x)
      r.row(x) -= (embeddings[static_cast<std::size_t>(x)].matrix().transpose() * beta).transpose();

    const double current = (p_x.asDiagonal() * r.array().square().matrix()).sum();
    if (current > 1e-24) {
      r *= std::sqrt(completeness.rho / current);
      const Matrix base = implied_conditionals(embeddings, alpha);
      while (!conditionals_valid(base + r)) {
        if (residual_steps == kMaxShrinkSteps)
          fail(ErrorKind::GenerationFailed, "residual could not be shrunk into a valid world");
        r *= 0.5;
        ++residual_steps;
      }
      residual = r;
    }
  }

  SyntheticWorld w = make_world(std::move(p_x), std::move(embeddings), std::move(alpha), std::move(residual));
  w.seed = seed;
  w.rho_target = std::max(0.0, completeness.rho);
  w.alpha_shrink_steps = alpha_steps;
  w.residual_shrink_steps = residual_steps;
  return w;
}

std::size_t outcome_count(int labels, std::size_t n) {
  std::size_t total = 1;
  const auto m = static_cast<std::size_t>(labels);
  for (std::size_t i = 0; i < n; ++i) {
    if (total > std::numeric_limits<std::size_t>::max() / m) return std::numeric_limits<std::size_t>::max();
    total *= m;
  }
  return total;
}

RiskEstimate enumerate_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                            int query_input, std::size_t budget, double tol_factor) {
  check_query_input(world, query_input);
  check_demo_inputs(world, demo_inputs);
  if (outcome_count(static_cast<int>(world.M()), demo_inputs.size()) > budget)
    fail(ErrorKind::BudgetExceeded, "M^n exceeds the enumeration budget; use montecarlo_risk");

  const Estimator est = make_estimator(world, demo_inputs, tol_factor);
  const auto q = static_cast<std::size_t>(query_input);
  const Matrix f_t = world.f(q).transpose();
  std::vector<Matrix> per_demo;  // M x M: column y is the posterior contribution of label y
  for (const auto& c : est.contrib) per_demo.push_back(f_t * c);
  const Vector truth = world.conditional(q);

  double total = 0.0;
  Vector p_hat(world.M());
  for_each_outcome(est.label_probs, [&](const std::vector<int>& ys, double weight) {
    p_hat.setZero();
    for (std::size_t i = 0; i < ys.size(); ++i) p_hat += per_demo[i].col(ys[i]);
    total += weight * (p_hat - truth).squaredNorm();
  });
  return {total, RiskKind::Enumerated, 0.0, 0};
}

RiskEstimate enumerate_averaged_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                                     std::size_t budget, double tol_factor) {
  check_demo_inputs(world, demo_inputs);
  if (outcome_count(static_cast<int>(world.M()), demo_inputs.size()) > budget)
    fail(ErrorKind::BudgetExceeded, "M^n exceeds the enumeration budget; use montecarlo_averaged_risk");
  const Estimator est = make_estimator(world, demo_inputs, tol_factor);

  // alpha_hat is shared across queries, so enumerate once and score every query.
  double total = 0.0;
  Vector alpha_hat(world.K());
  for_each_outcome(est.label_probs, [&](const std::vector<int>& ys, double weight) {
    alpha_hat.setZero();
    for (std::size_t i = 0; i < ys.size(); ++i) alpha_hat += est.contrib[i].col(ys[i]);
    double loss = 0.0;
    for (std::size_t x = 0; x < world.alphabet_size(); ++x) {
      const double px = world.p_x(static_cast<Eigen::Index>(x));
      if (px == 0.0) continue;
      loss += px * (world.f(x).transpose() * alpha_hat - world.conditional(x)).squaredNorm();
    }
    total += weight * loss;
  });
  return {total, RiskKind::Enumerated, 0.0, 0};
}

RiskEstimate closed_form_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                              int query_input, double tol_factor) {
  check_query_input(world, query_input);
  check_demo_inputs(world, demo_inputs);
  if (!world.complete())
    fail(ErrorKind::RegimeError, "closed-form risk is only available for complete worlds");

  const auto k = world.K();
  const double n = static_cast<double>(demo_inputs.size());
  const Matrix fn = pool_gram(world, demo_inputs);
  const PseudoInverse inv = pinv_psd(fn, tol_factor);
  const Matrix perp = Matrix::Identity(k, k) - inv.inverse * fn;

  Matrix spread = Matrix::Zero(k, k);  // f(x^n) A(x^n) f(x^n)^T
  for (int x : demo_inputs) {
    const auto xi = static_cast<std::size_t>(x);
    spread += world.f(xi) * label_covariance(world.conditional(xi)) * world.f(xi).transpose();
  }
  const auto q = static_cast<std::size_t>(query_input);
  const Matrix fq = gram_query(world.embeddings[q]);
  const double variance = (inv.inverse * fq * inv.inverse * spread).trace() / (n * n);
  const double penalty = (world.f(q).transpose() * (perp * world.alpha)).squaredNorm();
  return {variance + penalty, RiskKind::ClosedForm, 0.0, 0};
}

RiskEstimate montecarlo_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                             int query_input, std::size_t trials, std::uint64_t seed,
                             unsigned workers, double tol_factor) {
  check_query_input(world, query_input);
  const Estimator est = make_estimator(world, demo_inputs, tol_factor);
  const auto q = static_cast<std::size_t>(query_input);
  const std::vector<WeightedQuery> queries{{world.f(q).transpose(), world.conditional(q), 1.0}};
  return montecarlo_core(est, queries, trials, seed, workers);
}

RiskEstimate montecarlo_averaged_risk(const SyntheticWorld& world, std::span<const int> demo_inputs,
                                      std::size_t trials, std::uint64_t seed, unsigned workers,
                                      double tol_factor) {
  const Estimator est = make_estimator(world, demo_inputs, tol_factor);
  std::vector<WeightedQuery> queries;
  for (std::size_t x = 0; x < world.alphabet_size(); ++x)
    queries.push_back({world.f(x).transpose(), world.conditional(x), world.p_x(static_cast<Eigen::Index>(x))});
  return montecarlo_core(est, queries, trials, seed, workers);
}

Vector expected_concept_exact(const SyntheticWorld& world, std::span<const int> demo_inputs,
                              std::size_t budget, double tol_factor) {
  check_demo_inputs(world, demo_inputs);
  if (outcome_count(static_cast<int>(world.M()), demo_inputs.size()) > budget)
    fail(ErrorKind::BudgetExceeded, "M^n exceeds the enumeration budget");
  const Estimator est = make_estimator(world, demo_inputs, tol_factor);
  Vector mean = Vector::Zero(world.K());
  for_each_outcome(est.label_probs, [&](const std::vector<int>& ys, double weight) {
    for (std::size_t i = 0; i < ys.size(); ++i) mean += weight * est.contrib[i].col(ys[i]);
  });
  return mean;
}

int draw_input(const Vector& p_x, double u) { return sample_label(p_x, u); }

// ---------------------------------------------------------------------------
// Sweeps

namespace {

void validate_plan(const TrialPlan& plan) {
  if (plan.sweeps < 1) fail(ErrorKind::InvalidInput, "plan needs at least one sweep");
  if (plan.n_min < 1 || plan.n_max < plan.n_min) fail(ErrorKind::InvalidInput, "invalid n range");
  if (plan.m_min < 2 || plan.m_max < plan.m_min) fail(ErrorKind::InvalidInput, "invalid M range");
  if (plan.k_max < 2) fail(ErrorKind::InvalidInput, "k_max must be at least 2");
  if (plan.mc_trials < 100) fail(ErrorKind::InvalidInput, "mc_trials must be at least 100");
  if (!(plan.tol_factor > 0.0)) fail(ErrorKind::InvalidInput, "tolerance factor must be positive");
}

struct RiskValue {
  double value = 0.0;
  double standard_error = 0.0;
  std::string kind;
};

RiskValue query_risk(const SyntheticWorld& world, std::span<const int> demos, int query,
                     const TrialPlan& plan, std::uint64_t cfg_seed) {
  if (outcome_count(static_cast<int>(world.M()), demos.size()) <= plan.enumeration_budget) {
    return {enumerate_risk(world, demos, query, plan.enumeration_budget, plan.tol_factor).value, 0.0,
            "enumerated"};
  }
  const RiskEstimate mc = montecarlo_risk(world, demos, query, plan.mc_trials,
                                          stable_hash(cfg_seed, 2), 1, plan.tol_factor);
  return {mc.value, mc.standard_error, "monte_carlo"};
}

RiskValue averaged_risk(const SyntheticWorld& world, std::span<const int> demos, const TrialPlan& plan,
                        std::uint64_t cfg_seed) {
  if (outcome_count(static_cast<int>(world.M()), demos.size()) <= plan.enumeration_budget) {
    return {enumerate_averaged_risk(world, demos, plan.enumeration_budget, plan.tol_factor).value, 0.0,
            "enumerated"};
  }
  const RiskEstimate mc = montecarlo_averaged_risk(world, demos, plan.mc_trials,
                                                   stable_hash(cfg_seed, 2), 1, plan.tol_factor);
  return {mc.value, mc.standard_error, "monte_carlo"};
}

void attach(BoundReport& r, const RiskValue& risk, bool extra_ok) {
  r.risk_kind = risk.kind;
  r.risk_standard_error = risk.standard_error;
  r.attach_risk(risk.value, 4.0 * risk.standard_error, extra_ok, kCheckTol);
}

std::vector<int> draw_inputs(Rng& rng, const Vector& p_x, int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i) out.push_back(draw_input(p_x, rng.uniform()));
  return out;
}

std::vector<BoundReport> theorem1_config(const TrialPlan& plan, std::size_t index) {
  const std::uint64_t cfg_seed = stable_hash(plan.seed, index);
  Rng rng(cfg_seed);
  const int m = rng.uniform_int(plan.m_min, plan.m_max);
  const int n = rng.uniform_int(plan.n_min, plan.n_max);
  const int k_cap = std::max(2, std::min(plan.k_max, n * (m - 1) + 1));
  const int k = rng.uniform_int(2, k_cap);
  const std::size_t alphabet = static_cast<std::size_t>(n) + 2;
  // With M = 2 every normalized row is +-(1, -1)/sqrt(2), so distinct inputs
  // can share an embedding; redraw the world if no full-rank pool turns up.
  for (std::uint64_t redraw = 0; redraw < 8; ++redraw) {
    const std::uint64_t world_seed = stable_hash(cfg_seed, 1 + redraw);
    const SyntheticWorld world = generate_world(world_seed, alphabet, m, k);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::vector<int> demos = draw_inputs(rng, world.p_x, n);
      const int query = draw_input(world.p_x, rng.uniform());
      if (pinv_psd(pool_gram(world, demos), plan.tol_factor).rank < k) continue;

      BoundReport r = theorem1_bound(world, demos, query, plan.tol_factor);
      const RiskValue risk = query_risk(world, demos, query, plan, cfg_seed);
      const double refined = r.term("refined");
      const double slack = 4.0 * risk.standard_error;
      const bool chain_ok = risk.value <= refined + slack + tolerance_for(refined) &&
                            refined <= r.bound + tolerance_for(r.bound);
      attach(r, risk, chain_ok);
      r.config_index = index;
      r.world_seed = world_seed;
      r.context = {{"n", n}, {"M", m}, {"K", k}, {"alphabet", static_cast<double>(alphabet)},
                   {"query", query}, {"world_redraws", static_cast<double>(redraw)}};
      return {r};
    }
  }
  fail(ErrorKind::RegimeError, "could not draw an invertible pool for configuration " + std::to_string(index));
}

std::vector<BoundReport> theorem2_config(const TrialPlan& plan, std::size_t index) {
  const std::uint64_t cfg_seed = stable_hash(plan.seed, index);
  Rng rng(cfg_seed);
  if (plan.k_max < 3) fail(ErrorKind::RegimeError, "rank-deficient pools need k_max >= 3");
  const int scenario = static_cast<int>(index % 3);
  const int m = rng.uniform_int(plan.m_min, std::max(plan.m_min, std::min(plan.m_max, plan.k_max - 1)));
  if (m + 1 > plan.k_max) fail(ErrorKind::RegimeError, "rank-deficient pools need K > M");
  const int k = rng.uniform_int(m + 1, plan.k_max);
  int n = rng.uniform_int(plan.n_min, plan.n_max);

  // Scenario 0: n copies of the query. 1: n copies of one input.
  // 2: d distinct inputs with d(M-1)+1 < K, cycled to length n.
  const int d_max = std::max(1, (k - 2) / (m - 1));
  const int distinct = scenario == 2 ? rng.uniform_int(1, d_max) : 1;
  if (scenario == 2) n = std::max(n, distinct);
  const std::size_t alphabet = static_cast<std::size_t>(distinct) + 2;
  const std::uint64_t world_seed = stable_hash(cfg_seed, 1);
  const SyntheticWorld world = generate_world(world_seed, alphabet, m, k);

  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<int> demos;
    int query = draw_input(world.p_x, rng.uniform());
    if (scenario == 0) {
      demos.assign(static_cast<std::size_t>(n), query);
    } else {
      std::vector<int> pick;
      while (static_cast<int>(pick.size()) < distinct) {
        const int x = draw_input(world.p_x, rng.uniform());
        if (std::find(pick.begin(), pick.end(), x) == pick.end()) pick.push_back(x);
      }
      for (int i = 0; i < n; ++i) demos.push_back(pick[static_cast<std::size_t>(i) % pick.size()]);
    }
    const Matrix fn = pool_gram(world, demos);
    const PseudoInverse inv = pinv_psd(fn, plan.tol_factor);
    if (inv.rank >= k) continue;

    BoundReport r = theorem2_bound(world, demos, query, plan.tol_factor);
    const RiskValue risk = query_risk(world, demos, query, plan, cfg_seed);
    attach(r, risk, r.term("penalty") >= 0.0);
    const Matrix perp = Matrix::Identity(k, k) - inv.inverse * fn;
    const Matrix fq = gram_query(world.embeddings[static_cast<std::size_t>(query)]);
    r.config_index = index;
    r.world_seed = world_seed;
    r.context = {{"scenario", scenario}, {"n", n}, {"M", m}, {"K", k},
                 {"alphabet", static_cast<double>(alphabet)}, {"query", query},
                 {"rank", static_cast<double>(inv.rank)},
                 {"null_component", (perp * world.alpha).norm()},
                 {"query_equals_pool", (fq - fn).cwiseAbs().maxCoeff() <= 1e-12 ? 1.0 : 0.0}};
    return {r};
  }
  fail(ErrorKind::RegimeError, "could not draw a rank-deficient pool for configuration " + std::to_string(index));
}

std::vector<BoundReport> theorem3_config(const TrialPlan& plan, std::size_t index) {
  const std::uint64_t cfg_seed = stable_hash(plan.seed, index);
  Rng rng(cfg_seed);
  const int m = rng.uniform_int(plan.m_min, plan.m_max);
  const int n = rng.uniform_int(plan.n_min, plan.n_max);
  const int k = rng.uniform_int(2, plan.k_max);
  const std::size_t alphabet = static_cast<std::size_t>(rng.uniform_int(k, k + 3));
  const std::uint64_t world_seed = stable_hash(cfg_seed, 1);

  std::vector<BoundReport> out;
  std::vector<int> demos;
  for (double rho : plan.rho_levels) {
    const SyntheticWorld world = generate_world(world_seed, alphabet, m, k, Completeness{rho});
    // P_X does not depend on rho, so every level shares the same draw.
    if (demos.empty()) demos = draw_inputs(rng, world.p_x, n);
    BoundReport r = theorem3_bound(world, demos, plan.tol_factor);
    attach(r, averaged_risk(world, demos, plan, cfg_seed), true);
    r.config_index = index;
    r.world_seed = world_seed;
    r.context = {{"n", n}, {"M", m}, {"K", k}, {"alphabet", static_cast<double>(alphabet)},
                 {"rho_target", world.rho_target}, {"rho_achieved", world.rho_achieved},
                 {"residual_shrink_steps", world.residual_shrink_steps}};
    out.push_back(std::move(r));
  }
  return out;
}

double context_value(const BoundReport& r, const std::string& name) {
  for (const auto& [key, value] : r.context) {
    if (key == name) return value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

VerificationReport assemble(const TrialPlan& plan, std::string theorem,
                            std::vector<std::vector<BoundReport>> per_config,
                            std::chrono::steady_clock::time_point start) {
  VerificationReport report;
  report.world_seed = plan.seed;
  report.theorem = std::move(theorem);
  report.plan = plan;
  for (auto& group : per_config)
    for (auto& r : group) report.checks.push_back(std::move(r));
  std::size_t passed = 0;
  for (const auto& r : report.checks) passed += r.pass ? 1 : 0;
  report.pass_rate = report.checks.empty() ? 0.0
                                           : static_cast<double>(passed) / static_cast<double>(report.checks.size());
  report.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  report.summary.emplace_back("checks", static_cast<double>(report.checks.size()));
  report.summary.emplace_back("passed", static_cast<double>(passed));
  return report;
}

}  // namespace

VerificationReport verify_theorem(const TrialPlan& plan, int theorem) {
  validate_plan(plan);
  if (theorem < 1 || theorem > 3) fail(ErrorKind::InvalidInput, "verify_theorem handles theorems 1, 2 and 3");
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::vector<BoundReport>> per_config(plan.sweeps);
  run_indexed(plan.sweeps, plan.workers, [&](std::size_t i) {
    switch (theorem) {
      case 1: per_config[i] = theorem1_config(plan, i); break;
      case 2: per_config[i] = theorem2_config(plan, i); break;
      default: per_config[i] = theorem3_config(plan, i); break;
    }
  });

  std::vector<std::vector<BoundReport>> groups = per_config;
  VerificationReport report = assemble(plan, "theorem" + std::to_string(theorem), std::move(per_config), start);

  if (theorem == 2) {
    double null_configs = 0, positive_penalty = 0, copies = 0, copy_max_penalty = 0;
    for (const auto& r : report.checks) {
      if (context_value(r, "null_component") > 1e-8) {
        ++null_configs;
        if (r.term("penalty") > 0.0) ++positive_penalty;
      }
      if (context_value(r, "query_equals_pool") == 1.0) {
        ++copies;
        copy_max_penalty = std::max(copy_max_penalty, r.term("penalty"));
      }
    }
    report.summary.emplace_back("null_component_configs", null_configs);
    report.summary.emplace_back("null_component_positive_penalty", positive_penalty);
    report.summary.emplace_back("query_equals_pool_configs", copies);
    report.summary.emplace_back("query_equals_pool_max_penalty", copy_max_penalty);
  } else if (theorem == 3) {
    double monotone = 0, shrunk = 0;
    std::vector<std::size_t> order(plan.rho_levels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return plan.rho_levels[a] < plan.rho_levels[b]; });
    for (const auto& group : groups) {
      bool ok = true;
      for (std::size_t i = 1; i < order.size(); ++i)
        ok = ok && group[order[i]].bound >= group[order[i - 1]].bound;
      monotone += ok ? 1 : 0;
      for (const auto& r : group) shrunk += context_value(r, "residual_shrink_steps") > 0 ? 1 : 0;
    }
    report.summary.emplace_back("bound_monotone_in_rho_fraction", monotone / static_cast<double>(groups.size()));
    report.summary.emplace_back("residual_shrunk_worlds", shrunk);
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct Probe {
  double risk;
  double posterior;  // true probability of the predicted label
};

Probe evaluate_estimate(const Vector& p, const Vector& estimate) {
  return {(estimate - p).squaredNorm(), p(argmax_lowest(estimate))};
}

/// Cheapest estimate that ties (or, with eps > 0, just beats) the top label
/// with the label of rank s.
Vector flip_corner(const Vector& p, const std::vector<int>& order, int s, double eps) {
  Vector est = p;
  const int top = order[0];
  const int other = order[static_cast<std::size_t>(s)];
  const double mid = 0.5 * (p(top) + p(other));
  est(top) = mid;
  est(other) = mid + eps;
  return est;
}

std::vector<BoundReport> error_probability_config(const TrialPlan& plan, std::size_t index) {
  const std::uint64_t cfg_seed = stable_hash(plan.seed, index);
  Rng rng(cfg_seed);
  const int m = rng.uniform_int(2, 8);

  Vector p(m);
  std::vector<int> order(static_cast<std::size_t>(m));
  Vector sorted;
  for (int attempt = 0;; ++attempt) {
    for (int y = 0; y < m; ++y) p(y) = rng.uniform(0.05, 1.0);
    p /= p.sum();
    sorted = sorted_descending(p);
    if (sorted(0) > sorted(1)) break;
    if (attempt > 100) fail(ErrorKind::GenerationFailed, "could not draw a distribution without a top tie");
  }
  for (int y = 0; y < m; ++y) order[static_cast<std::size_t>(y)] = y;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p(a) > p(b); });

  auto random_direction = [&] {
    Vector d(m);
    for (int y = 0; y < m; ++y) d(y) = rng.normal();
    return Vector(d / d.norm());
  };

  // Lemma 2: single estimates with risk strictly below a threshold.
  std::size_t evaluated = 0, violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < plan.samples; ++s) {
    const int j = rng.uniform_int(1, m - 1);
    const double gap = sorted(0) - sorted(j);
    const double threshold = 0.5 * gap * gap;
    const Vector est = p + std::sqrt(threshold * rng.uniform()) * random_direction();
    const Probe probe = evaluate_estimate(p, est);
    const auto g = guarantee_lemma2(p, probe.risk);
    if (!g) continue;
    ++evaluated;
    const double shortfall = g->floor - probe.posterior;
    worst = std::max(worst, shortfall);
    if (shortfall > 1e-12) ++violations;
  }
  BoundReport lemma;
  lemma.theorem = "lemma2";
  lemma.terms = {{"M", m}, {"samples", static_cast<double>(plan.samples)},
                 {"evaluated", static_cast<double>(evaluated)}, {"violations", static_cast<double>(violations)},
                 {"worst_shortfall", worst}, {"p1", sorted(0)}};
  lemma.bound = 0.0;
  lemma.risk_kind = "adversarial_search";
  lemma.attach_risk(static_cast<double>(violations), 0.0, true, 0.0);

  // Theorem 4: two-point mixtures over flip corners and random estimates.
  std::vector<Vector> corners;
  for (int s = 1; s < m; ++s) {
    corners.push_back(flip_corner(p, order, s, 0.0));
    corners.push_back(flip_corner(p, order, s, 1e-9));
  }
  corners.push_back(p);
  auto pick_estimate = [&]() -> Vector {
    if (rng.uniform() < 0.5) return corners[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(corners.size()) - 1))];
    return p + rng.uniform(0.0, 0.6) * random_direction();
  };
  const double last_level = 0.5 * (sorted(0) - sorted(m - 1)) * (sorted(0) - sorted(m - 1));
  std::size_t mixtures = 0, mix_violations = 0;
  double mix_worst = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < plan.samples; ++s) {
    const Probe a = evaluate_estimate(p, pick_estimate());
    const Probe b = evaluate_estimate(p, pick_estimate());
    const double w = rng.uniform();
    const double risk = w * a.risk + (1.0 - w) * b.risk;
    if (risk >= last_level) continue;
    ++mixtures;
    const double posterior = w * a.posterior + (1.0 - w) * b.posterior;
    const double shortfall = guarantee_theorem4(p, risk).value - posterior;
    mix_worst = std::max(mix_worst, shortfall);
    if (shortfall > 1e-10) ++mix_violations;
  }
  BoundReport thm4;
  thm4.theorem = "theorem4";
  thm4.terms = {{"M", m}, {"samples", static_cast<double>(plan.samples)},
                {"evaluated", static_cast<double>(mixtures)},
                {"violations", static_cast<double>(mix_violations)},
                {"worst_shortfall", mix_worst}, {"p1", sorted(0)}};
  thm4.bound = 0.0;
  thm4.risk_kind = "adversarial_search";
  thm4.attach_risk(static_cast<double>(mix_violations), 0.0, true, 0.0);

  for (auto* r : {&lemma, &thm4}) {
    r->config_index = index;
    r->world_seed = cfg_seed;
    r->context = {{"M", m}};
  }
  return {lemma, thm4};
}

}  // namespace

VerificationReport verify_error_probability(const TrialPlan& plan) {
  if (plan.sweeps < 1) fail(ErrorKind::InvalidInput, "plan needs at least one distribution");
  if (plan.samples < 1) fail(ErrorKind::InvalidInput, "plan needs at least one sample");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::vector<BoundReport>> per_config(plan.sweeps);
  run_indexed(plan.sweeps, plan.workers,
              [&](std::size_t i) { per_config[i] = error_probability_config(plan, i); });
  return assemble(plan, "theorem4", std::move(per_config), start);
}

}  // namespace cbicl::lab
