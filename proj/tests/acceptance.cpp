// One PASS/FAIL line per acceptance criterion.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cbicl/bounds.hpp"
#include "cbicl/cli.hpp"
#include "cbicl/io.hpp"
#include "cbicl/lab.hpp"
#include "helpers.hpp"

using namespace cbicl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += " (over " + std::to_string(limit_s) + " s)";
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<int> draw_pool(Rng& rng, const SyntheticWorld& w, int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i) out.push_back(lab::draw_input(w.p_x, rng.uniform()));
  return out;
}

Outcome lemma1_suite() {
  Rng rng(1);
  int bad = 0, m2 = 0;
  double worst = -1e300;
  for (int t = 0; t < 10000; ++t) {
    const int m = rng.uniform_int(2, 10);
    const Vector p = testing::random_distribution(rng, m);
    const double l1 = lambda_max_sym(label_covariance(p));
    const double b = lemma1_bound(p);
    worst = std::max(worst, l1 - b);
    if (l1 > b + 1e-10) ++bad;
    if (m == 2) {
      ++m2;
      if (std::abs(l1 - b) > 1e-10) ++bad;
    }
  }
  return {bad == 0, "10000 distributions (" + std::to_string(m2) + " with M=2), violations " + std::to_string(bad) +
                        ", max lambda1-bound " + fmt(worst)};
}

Outcome closed_form_oracle() {
  int bad = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(stable_hash(2, s));
    const int m = rng.uniform_int(2, 4);
    const int k = rng.uniform_int(2, 6);
    const auto w = lab::generate_world(stable_hash(20, s), static_cast<std::size_t>(rng.uniform_int(1, 6)), m, k);
    const auto demos = draw_pool(rng, w, rng.uniform_int(1, 6));
    const int q = lab::draw_input(w.p_x, rng.uniform());
    const double diff = std::abs(lab::closed_form_risk(w, demos, q).value -
                                 lab::enumerate_risk(w, demos, q, 4096).value);
    worst = std::max(worst, diff);
    if (diff > 1e-9) ++bad;
  }
  return {bad == 0, "200 worlds, max |closed-enumerated| " + fmt(worst)};
}

Outcome theorem1() {
  lab::TrialPlan plan;
  plan.seed = 7;
  plan.sweeps = 1000;
  const auto r = lab::verify_theorem(plan, 1);
  const auto w = testing::worked_world();
  const std::vector<int> demos{0};
  const auto b = theorem1_bound(w, demos, 0);
  const double risk = lab::enumerate_risk(w, demos, 0).value;
  const bool worked = std::abs(risk - 0.41) <= 1e-6 && std::abs(b.term("refined") - risk) <= 1e-6;
  return {r.all_passed() && worked, "1000 configs pass rate " + fmt(r.pass_rate) + "; worked risk " + fmt(risk) +
                                        " refined " + fmt(b.term("refined")) + " loose " + fmt(b.bound)};
}

double summary(const lab::VerificationReport& r, const std::string& key) {
  for (const auto& [k, v] : r.summary)
    if (k == key) return v;
  return std::nan("");
}

Outcome theorem2() {
  lab::TrialPlan plan;
  plan.seed = 7;
  plan.sweeps = 300;
  const auto r = lab::verify_theorem(plan, 2);
  const double max_pen = summary(r, "query_equals_pool_max_penalty");
  const double cases = summary(r, "query_equals_pool_configs");
  bool rank_deficient = true;
  for (const auto& c : r.checks) {
    double k = 0.0;
    for (const auto& [key, v] : c.context)
      if (key == "K") k = v;
    rank_deficient = rank_deficient && c.term("pool_rank") < k;
  }
  return {r.all_passed() && cases > 0 && max_pen <= 1e-10 && rank_deficient,
          "300 configs pass rate " + fmt(r.pass_rate) + "; F_q=F_n cases " + fmt(cases) + " max penalty " + fmt(max_pen)};
}

Outcome theorem3() {
  lab::TrialPlan plan;
  plan.seed = 7;
  plan.sweeps = 300;
  const auto r = lab::verify_theorem(plan, 3);
  return {r.all_passed(), "300 worlds x " + std::to_string(plan.rho_levels.size()) + " residual levels, " +
                              std::to_string(r.checks.size()) + " checks, pass rate " + fmt(r.pass_rate)};
}

Outcome unbiasedness() {
  int bad = 0, singular = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(stable_hash(6, s));
    const int m = rng.uniform_int(2, 3);
    const int k = rng.uniform_int(2, 5);
    const auto w = lab::generate_world(stable_hash(60, s), 4, m, k);
    const auto demos = draw_pool(rng, w, rng.uniform_int(1, 4));
    Matrix fn = Matrix::Zero(k, k);
    for (int x : demos) fn += gram_query(w.embeddings[static_cast<std::size_t>(x)]);
    fn = symmetrized(fn / static_cast<double>(demos.size()));
    const auto inv = pinv_psd(fn);
    Vector want = w.alpha;
    if (inv.rank < k) {
      ++singular;
      want = inv.inverse * fn * w.alpha;
    }
    const double err = (lab::expected_concept_exact(w, demos) - want).cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    if (err > 1e-10) ++bad;
  }
  return {bad == 0, "200 worlds (" + std::to_string(singular) + " singular), max error " + fmt(worst)};
}

Outcome error_probability() {
  lab::TrialPlan plan;
  plan.seed = 7;
  plan.sweeps = 50;
  plan.samples = 100000;
  const auto r = lab::verify_error_probability(plan);
  Vector p(3);
  p << 0.6, 0.3, 0.1;
  const auto low = guarantee_lemma2(p, 0.04);
  const auto mid = guarantee_lemma2(p, 0.1);
  const auto g = guarantee_theorem4(p, 0.065);
  const bool examples = low && mid && std::abs(low->floor - 0.6) < 1e-12 && std::abs(mid->floor - 0.3) < 1e-12 &&
                        g.j == 2 && std::abs(g.gamma - 0.02) < 1e-12 && std::abs(g.value - 0.25) < 1e-12;
  return {r.all_passed() && examples,
          "50 distributions x 1e5 estimates, pass rate " + fmt(r.pass_rate) + "; floors " +
              (low ? fmt(low->floor) : "none") + "/" + (mid ? fmt(mid->floor) : "none") + ", value " + fmt(g.value) +
              " at gamma " + fmt(g.gamma)};
}

Outcome similarity() {
  Rng rng(8);
  int bad = 0, invertible = 0;
  double worst = 0.0, copy_dev = 0.0;
  while (invertible < 500) {
    const int m = rng.uniform_int(2, 5);
    const int d = rng.uniform_int(1, 5);
    const int n = rng.uniform_int(1, 6);
    Matrix fn = Matrix::Zero(d + 1, d + 1);
    for (int i = 0; i < n; ++i) fn += gram_query(testing::random_embedding(rng, d, m));
    fn /= n;
    if (pinv_psd(fn).rank < d + 1) continue;
    ++invertible;
    const auto q = testing::random_embedding(rng, d, m);
    const double s = similarity_score(gram_query(q), fn).value;
    worst = std::max(worst, s);
    if (s > 1.0 + 1e-8) ++bad;
    // Copies of the query.
    const std::vector<EmbeddingMatrix> copies(static_cast<std::size_t>(n), q);
    const double c = similarity_score(q, copies).value;
    copy_dev = std::max(copy_dev, std::abs(c - 1.0));
    if (std::abs(c - 1.0) > 1e-12) ++bad;
  }
  int first = 0;
  for (int t = 0; t < 100; ++t) {
    const int m = rng.uniform_int(3, 5);
    // K <= M keeps single-item Grams invertible; K = 2 makes every Gram the identity.
    const int d = rng.uniform_int(2, m - 1);
    const auto q = testing::random_embedding(rng, d, m);
    std::vector<Candidate> pool;
    const int size = rng.uniform_int(5, 20);
    const int slot = rng.uniform_int(0, size - 1);
    for (int i = 0; i < size; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "c%03d", i);
      pool.push_back({id, i == slot ? q : testing::random_embedding(rng, d, m)});
    }
    const auto ranked = select_golden(pool, Query{"q", q, std::nullopt}, 1);
    if (ranked.front().candidate_id == pool[static_cast<std::size_t>(slot)].id) ++first;
  }
  if (first != 100) ++bad;
  return {bad == 0, "500 invertible pools max score " + fmt(worst) + ", copy deviation " + fmt(copy_dev) +
                        ", query copy ranked first " + std::to_string(first) + "/100"};
}

io::json stable_part(io::json doc) {
  doc.erase("runtime_ms");
  doc["plan"].erase("workers");
  doc["config"].erase("workers");
  doc["config"]["origin"].erase("workers");
  return doc;
}

Outcome determinism() {
  int mismatches = 0;
  std::string detail;
  for (const std::string theorem : {"1", "2", "3", "4"}) {
    std::vector<std::string> dumps;
    for (const std::string workers : {"1", "1", "4"}) {
      std::ostringstream out, err;
      std::vector<std::string> args{"--json", "--workers", workers, "verify", "--theorem", theorem, "--seed", "11",
                                    "--sweeps", theorem == "4" ? "6" : "60"};
      if (theorem == "4") args.insert(args.end(), {"--samples", "5000"});
      const int code = io::run_cli(args, out, err, {[](const std::string&) { return std::optional<std::string>(); },
                                                    [](double) {}});
      if (code != 0) ++mismatches;
      dumps.push_back(stable_part(io::json::parse(out.str())).dump());
    }
    if (dumps[0] != dumps[1] || dumps[0] != dumps[2]) ++mismatches;
    detail += "theorem " + theorem + (dumps[0] == dumps[1] && dumps[0] == dumps[2] ? " identical; " : " differs; ");
  }
  return {mismatches == 0, detail + "runs x workers {1,1,4}"};
}

}  // namespace

int main() {
  criterion(1, "label covariance bound", 10, lemma1_suite);
  criterion(2, "closed-form risk oracle", 30, closed_form_oracle);
  criterion(3, "complete sufficient bound", 60, theorem1);
  criterion(4, "rank-deficient bound", 0, theorem2);
  criterion(5, "incomplete-world bound", 0, theorem3);
  criterion(6, "concept unbiasedness", 0, unbiasedness);
  criterion(7, "prediction error guarantees", 120, error_probability);
  criterion(8, "similarity score", 0, similarity);
  criterion(9, "determinism", 0, determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
