#include "cbicl/cli.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "cbicl/bounds.hpp"
#include "cbicl/concept.hpp"
#include "cbicl/errors.hpp"
#include "cbicl/lab.hpp"

namespace cbicl::io {

namespace {

struct Options {
  bool json_out = false;
  ConfigOverrides flags;

  std::string in_path, out_path;
  std::string demos_path, query_path, pool_path, world_path, input_path;
  std::size_t k = 0;
  int theorem = 1;
  std::uint64_t seed = 0;
  std::size_t sweeps = 0;
  std::size_t samples = 100000;
  std::size_t x = 0;
  int m = 0, features = 0;
  double rho = 0.0;
  std::string separator = "\n";
};

std::string fmt(double v) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

void print_rows(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(width[c])) << r[c];
      if (c + 1 < r.size()) out << "  ";
    }
    out << "\n";
  }
}

std::string vec_text(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v(i));
  return s + "]";
}

void write_json(const std::string& path, const json& doc) { write_atomic(path, doc.dump(2) + "\n"); }

// Each command fills `result` (printed with --json) and writes a human table otherwise.

int cmd_normalize(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  const EmbeddingFile file = load_embeddings(o.in_path);
  json doc = embeddings_to_json(file);
  write_json(o.out_path, doc);
  std::size_t degenerate = 0;
  for (const auto& item : file.items) degenerate += item.embedding.degenerate_rows().size();
  result = {{"command", "normalize"}, {"input", o.in_path}, {"output", o.out_path},
            {"items", file.items.size()}, {"K", file.K()}, {"M", file.M()},
            {"degenerate_rows", degenerate}, {"config", cfg.to_json()}};
  if (!o.json_out)
    print_rows(out, {{"items", std::to_string(file.items.size())}, {"K", std::to_string(file.K())},
                     {"M", std::to_string(file.M())}, {"degenerate rows", std::to_string(degenerate)},
                     {"written", o.out_path}});
  return kExitOk;
}

int cmd_extract(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  const DemonstrationSet demos = load_embeddings(o.demos_path).demonstrations();
  const ConceptVector c = extract_concept(demos, cfg.tol_factor);
  json doc = concept_to_json(c);
  doc["n"] = demos.size();
  doc["config"] = cfg.to_json();
  if (!o.out_path.empty()) write_json(o.out_path, doc);
  result = doc;
  if (!o.json_out) {
    print_rows(out, {{"n", std::to_string(demos.size())}, {"K", std::to_string(demos.K())},
                     {"pool rank", std::to_string(c.pool_rank)}, {"alpha", vec_text(c.coefficients)}});
    if (c.pool_rank < demos.K()) out << "note: F_n is singular, alpha is the minimum-norm estimate\n";
  }
  return kExitOk;
}

int cmd_predict(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  const EmbeddingFile demo_file = load_embeddings(o.demos_path);
  const EmbeddingFile query_file = load_embeddings(o.query_path);
  if (demo_file.labels != query_file.labels)
    fail(ErrorKind::ShapeMismatch, "demonstration and query files use different label spaces");
  const ConceptVector c = extract_concept(demo_file.demonstrations(), cfg.tol_factor);

  json predictions = json::array();
  std::vector<std::vector<std::string>> rows{{"query", "label", "posterior"}};
  for (const Query& q : query_file.queries()) {
    const PosteriorEstimate p = predict_posterior(c, q);
    const int label = predict_label(p);
    predictions.push_back({{"id", q.id}, {"posterior", vector_to_json(p.values)},
                           {"label", demo_file.labels.name(static_cast<std::size_t>(label))},
                           {"label_index", label}});
    rows.push_back({q.id, demo_file.labels.name(static_cast<std::size_t>(label)), vec_text(p.values)});
  }
  result = {{"command", "predict"}, {"pool_rank", c.pool_rank}, {"K", c.coefficients.size()},
            {"predictions", predictions}, {"config", cfg.to_json()}};
  if (!o.json_out) print_rows(out, rows);
  return kExitOk;
}

int cmd_score(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  const EmbeddingFile pool = load_embeddings(o.pool_path);
  const EmbeddingFile queries = load_embeddings(o.query_path);
  std::vector<EmbeddingMatrix> members;
  for (const auto& item : pool.items) {
    if (item.embedding.K() != queries.K() || item.embedding.M() != queries.M())
      fail(ErrorKind::ShapeMismatch, "pool and query embeddings differ in K or M");
    members.push_back(item.embedding);
  }

  json scores = json::array();
  std::vector<std::vector<std::string>> rows{{"query", "score", "lambda1", "pool rank"}};
  for (const Query& q : queries.queries()) {
    SimilarityScore s = similarity_score(q.embedding, members, cfg.tol_factor);
    scores.push_back({{"query_id", q.id}, {"score", s.no_overlap ? json(nullptr) : json(s.value)},
                      {"lambda1", s.lambda1}, {"no_overlap", s.no_overlap}, {"pool_rank", s.pool_rank}});
    rows.push_back({q.id, s.no_overlap ? "no overlap" : fmt(s.value), fmt(s.lambda1), std::to_string(s.pool_rank)});
  }
  result = {{"command", "score"}, {"pool_size", pool.items.size()}, {"scores", scores},
            {"config", cfg.to_json()}};
  if (!o.json_out) print_rows(out, rows);
  return kExitOk;
}

int cmd_select(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  const EmbeddingFile pool = load_embeddings(o.pool_path);
  const EmbeddingFile queries = load_embeddings(o.query_path);
  const std::size_t k = o.k > 0 ? o.k : cfg.default_k;
  const std::vector<Candidate> candidates = pool.candidates();

  json selections = json::array();
  for (const Query& q : queries.queries()) {
    const auto ranked = select_golden(candidates, q, k, cfg.tol_factor);
    json golden = json::array();
    std::vector<std::vector<std::string>> rows{{"rank", "id", "score", "lambda1"}};
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto& s = ranked[i];
      golden.push_back({{"id", s.candidate_id}, {"score", s.no_overlap ? json(nullptr) : json(s.value)},
                        {"lambda1", s.lambda1}, {"no_overlap", s.no_overlap}});
      rows.push_back({std::to_string(i + 1), s.candidate_id, s.no_overlap ? "no overlap" : fmt(s.value),
                      fmt(s.lambda1)});
    }
    selections.push_back({{"query_id", q.id}, {"golden", golden}});
    if (!o.json_out) {
      out << "query " << q.id << "\n";
      print_rows(out, rows);
    }
  }
  result = {{"command", "select"}, {"k", k}, {"selections", selections}, {"config", cfg.to_json()}};
  return kExitOk;
}

int cmd_residual(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  const SyntheticWorld world = load_world(o.world_path);
  const ResidualField field = fit_concept_residual(world, cfg.tol_factor);
  const double r2 = mean_residual(field, world.p_x);
  json per_input = json::array();
  std::vector<std::vector<std::string>> rows{{"x", "P_X", "sum_y R^2"}};
  for (std::size_t x = 0; x < world.alphabet_size(); ++x) {
    const double norm2 = field.at(x).squaredNorm();
    const double px = world.p_x(static_cast<Eigen::Index>(x));
    per_input.push_back({{"x", x}, {"p_x", px}, {"residual", vector_to_json(field.at(x))},
                         {"residual_norm2", norm2}});
    rows.push_back({std::to_string(x), fmt(px), fmt(norm2)});
  }
  result = {{"command", "residual"}, {"mean_residual", r2}, {"alpha", vector_to_json(field.alpha)},
            {"complete", r2 <= 1e-20}, {"per_input", per_input}, {"config", cfg.to_json()}};
  if (!o.json_out) {
    print_rows(out, rows);
    out << "mean residual R^2 = " << fmt(r2) << "\n";
  }
  return kExitOk;
}

int cmd_verify(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  if (o.theorem < 1 || o.theorem > 4) fail(ErrorKind::InvalidInput, "--theorem must be 1, 2, 3 or 4");
  lab::TrialPlan plan;
  plan.seed = o.seed;
  plan.sweeps = o.sweeps > 0 ? o.sweeps : (o.theorem == 4 ? 50 : 100);
  plan.enumeration_budget = cfg.enumeration_budget;
  plan.mc_trials = cfg.mc_trials;
  plan.samples = o.samples;
  plan.workers = cfg.workers;
  plan.tol_factor = cfg.tol_factor;
  const lab::VerificationReport report =
      o.theorem == 4 ? lab::verify_error_probability(plan) : lab::verify_theorem(plan, o.theorem);

  json doc = to_json(report);
  doc["config"] = cfg.to_json();
  if (!o.out_path.empty()) write_json(o.out_path, doc);

  if (o.json_out) {
    result = doc;
  } else {
    result = json::object();
    std::vector<std::vector<std::string>> rows{{"theorem", report.theorem}, {"seed", std::to_string(plan.seed)},
                                               {"pass rate", fmt(report.pass_rate)},
                                               {"runtime ms", fmt(report.runtime_ms)}};
    for (const auto& [name, value] : report.summary) rows.push_back({name, fmt(value)});
    print_rows(out, rows);
    for (const auto& c : report.checks) {
      if (!c.pass)
        out << "FAIL " << c.theorem << " config " << c.config_index << ": risk "
            << fmt(c.risk.value_or(std::nan(""))) << " bound " << fmt(c.bound) << "\n";
    }
    if (!o.out_path.empty()) out << "report written to " << o.out_path << "\n";
  }
  return report.all_passed() ? kExitOk : kExitVerificationFailed;
}

int cmd_gen_world(const Options& o, const Config& cfg, json& result, std::ostream& out) {
  if (o.x < 1) fail(ErrorKind::InvalidInput, "--x must be at least 1");
  const SyntheticWorld world =
      lab::generate_world(o.seed, o.x, o.m, o.features, lab::Completeness{o.rho});
  json doc = world_to_json(world);
  doc["config"] = cfg.to_json();
  write_json(o.out_path, doc);
  result = {{"command", "gen-world"}, {"output", o.out_path}, {"seed", world.seed},
            {"alphabet", world.alphabet_size()}, {"M", world.M()}, {"K", world.K()},
            {"rho_target", world.rho_target}, {"rho_achieved", world.rho_achieved},
            {"config", cfg.to_json()}};
  if (!o.json_out)
    print_rows(out, {{"alphabet", std::to_string(world.alphabet_size())}, {"M", std::to_string(world.M())},
                     {"K", std::to_string(world.K())}, {"rho achieved", fmt(world.rho_achieved)},
                     {"written", o.out_path}});
  return kExitOk;
}

int cmd_embed(const Options& o, const Config& cfg, const CliEnvironment& environment, json& result,
              std::ostream& out) {
  const json doc = read_json(o.input_path);
  if (!doc.is_object() || !doc.contains("labels") || !doc.contains("items") || !doc["items"].is_array())
    fail(ErrorKind::FormatError, "/: embed input needs \"labels\" and \"items\"");
  const LabelSpace labels(doc["labels"].get<std::vector<std::string>>());
  const auto& items = doc["items"];

  ProviderRequest request;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].contains("text") || !items[i]["text"].is_string())
      fail(ErrorKind::FormatError, "/items/" + std::to_string(i) + "/text: expected a string");
    for (auto& t : label_conditioned_texts(items[i]["text"].get<std::string>(), labels, o.separator))
      request.texts.push_back(std::move(t));
  }
  const ProviderResponse response = fetch_embeddings(request, cfg, environment.env, environment.sleep);

  const auto m = static_cast<Eigen::Index>(labels.size());
  const auto d = static_cast<Eigen::Index>(response.dimension);
  RawEmbeddingSet raw;
  raw.source = response.model;
  for (std::size_t i = 0; i < items.size(); ++i) {
    RawEmbeddingSet::Item item;
    item.id = items[i].value("id", "item" + std::to_string(i));
    if (items[i].contains("label") && items[i]["label"].is_string()) item.label = items[i]["label"].get<std::string>();
    item.vectors.resize(d, m);
    for (Eigen::Index y = 0; y < m; ++y) {
      const auto& v = response.vectors[i * labels.size() + static_cast<std::size_t>(y)];
      for (Eigen::Index k = 0; k < d; ++k) item.vectors(k, y) = v[static_cast<std::size_t>(k)];
    }
    raw.items.push_back(std::move(item));
  }
  const EmbeddingFile file = normalize_set(raw, labels);
  save_embeddings(o.out_path, file);
  result = {{"command", "embed"}, {"model", response.model}, {"items", file.items.size()},
            {"D", response.dimension}, {"K", file.K()}, {"M", file.M()},
            {"attempts", response.attempts}, {"log", response.log}, {"config", cfg.to_json()}};
  if (!o.json_out) {
    for (const auto& line : response.log) out << line << "\n";
    print_rows(out, {{"model", response.model}, {"items", std::to_string(file.items.size())},
                     {"D", std::to_string(response.dimension)}, {"written", o.out_path}});
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const CliEnvironment& environment) {
  CLI::App app{"Concept-based in-context learning toolkit", "cbicl"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  app.add_flag("--json", o.json_out, "Print machine-readable JSON on stdout");
  app.add_option("--config", o.flags.config_path, "Config file (JSON)");
  app.add_option("--tol", o.flags.tol_factor, "Pseudo-inverse tolerance factor")->check(CLI::PositiveNumber);
  app.add_option("--budget", o.flags.enumeration_budget, "Enumeration budget (max M^n)");
  app.add_option("--mc-trials", o.flags.mc_trials, "Monte Carlo trials when enumeration is too large");
  app.add_option("--endpoint", o.flags.endpoint, "Embedding provider base URL");
  app.add_option("--workers", o.flags.workers, "Worker threads for verification sweeps");

  auto* normalize = app.add_subcommand("normalize", "Normalize a raw embedding file");
  normalize->add_option("in", o.in_path, "Input embeddings")->required();
  normalize->add_option("out", o.out_path, "Output embeddings")->required();

  auto* extract = app.add_subcommand("extract", "Extract the concept vector from demonstrations");
  extract->add_option("--demos", o.demos_path, "Labelled demonstrations")->required();
  extract->add_option("--out", o.out_path, "Concept file to write");

  auto* predict = app.add_subcommand("predict", "Predict posteriors and labels for queries");
  predict->add_option("--demos", o.demos_path, "Labelled demonstrations")->required();
  predict->add_option("--query", o.query_path, "Query embeddings")->required();

  auto* score = app.add_subcommand("score", "Similarity score of queries against a demonstration pool");
  score->add_option("--pool", o.pool_path, "Pool embeddings")->required();
  score->add_option("--query", o.query_path, "Query embeddings")->required();

  auto* select = app.add_subcommand("select", "Rank pool items as golden demonstrations");
  select->add_option("--pool", o.pool_path, "Candidate embeddings")->required();
  select->add_option("--query", o.query_path, "Query embeddings")->required();
  select->add_option("-k", o.k, "Number of demonstrations to keep");

  auto* residual = app.add_subcommand("residual", "Fit the concept and report the mean residual of a world");
  residual->add_option("--world", o.world_path, "World file")->required();

  auto* verify = app.add_subcommand("verify", "Run a seeded verification sweep");
  verify->add_option("--theorem", o.theorem, "1, 2, 3, or 4 (error-probability guarantees)")
      ->required()->check(CLI::Range(1, 4));
  verify->add_option("--seed", o.seed, "Sweep seed");
  verify->add_option("--sweeps", o.sweeps, "Configurations (distributions for theorem 4)");
  verify->add_option("--samples", o.samples, "Random estimates per distribution (theorem 4)");
  verify->add_option("--out", o.out_path, "Report file to write");

  auto* gen = app.add_subcommand("gen-world", "Generate a seeded synthetic world");
  gen->add_option("--seed", o.seed, "World seed")->required();
  gen->add_option("--x", o.x, "Alphabet size |X|")->required();
  gen->add_option("--m", o.m, "Number of labels M")->required();
  gen->add_option("--k", o.features, "Feature count K including the bias row")->required();
  gen->add_option("--rho", o.rho, "Target mean residual (0 for a complete world)");
  gen->add_option("--out", o.out_path, "World file to write")->required();

  auto* embed = app.add_subcommand("embed", "Fetch label-conditioned embeddings from the provider");
  embed->add_option("--input", o.input_path, "Texts file {labels, items:[{id,text,label}]}")->required();
  embed->add_option("--out", o.out_path, "Embeddings file to write")->required();
  embed->add_option("--separator", o.separator, "Text placed between input and label");

  std::vector<std::string> argv_store{"cbicl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  json result;
  try {
    const Config cfg = resolve_config(o.flags, environment.env);
    int code = kExitOk;
    if (*normalize) code = cmd_normalize(o, cfg, result, out);
    else if (*extract) code = cmd_extract(o, cfg, result, out);
    else if (*predict) code = cmd_predict(o, cfg, result, out);
    else if (*score) code = cmd_score(o, cfg, result, out);
    else if (*select) code = cmd_select(o, cfg, result, out);
    else if (*residual) code = cmd_residual(o, cfg, result, out);
    else if (*verify) code = cmd_verify(o, cfg, result, out);
    else if (*gen) code = cmd_gen_world(o, cfg, result, out);
    else if (*embed) code = cmd_embed(o, cfg, environment, result, out);
    if (o.json_out) out << result.dump(2) << "\n";
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (o.json_out) out << json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump(2) << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (o.json_out) out << json{{"error", "InternalError"}, {"message", e.what()}}.dump(2) << "\n";
    return kExitError;
  }
}

}  // namespace cbicl::io
