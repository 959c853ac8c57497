#include "cbicl/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cbicl/errors.hpp"

namespace cbicl::io {

namespace {

[[noreturn]] void format_error(const std::string& pointer, const std::string& what) {
  fail(ErrorKind::FormatError, (pointer.empty() ? std::string("/") : pointer) + ": " + what);
}

const json& field(const json& obj, const std::string& pointer, const char* key) {
  if (!obj.is_object()) format_error(pointer, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) format_error(pointer + "/" + key, "missing field");
  return *it;
}

const json* optional_field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

double number_at(const json& v, const std::string& pointer) {
  if (!v.is_number()) format_error(pointer, "expected a number");
  return v.get<double>();
}

long long integer_at(const json& v, const std::string& pointer) {
  if (!v.is_number_integer()) format_error(pointer, "expected an integer");
  return v.get<long long>();
}

std::string string_at(const json& v, const std::string& pointer) {
  if (!v.is_string()) format_error(pointer, "expected a string");
  return v.get<std::string>();
}

Vector vector_at(const json& v, const std::string& pointer, Eigen::Index expected = -1) {
  if (!v.is_array()) format_error(pointer, "expected an array of numbers");
  if (expected >= 0 && static_cast<Eigen::Index>(v.size()) != expected)
    format_error(pointer, "has " + std::to_string(v.size()) + " entries, expected " + std::to_string(expected));
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = number_at(v[i], pointer + "/" + std::to_string(i));
  return out;
}

Matrix matrix_at(const json& v, const std::string& pointer, Eigen::Index rows, Eigen::Index cols) {
  if (!v.is_array()) format_error(pointer, "expected an array of rows");
  if (rows >= 0 && static_cast<Eigen::Index>(v.size()) != rows)
    format_error(pointer, "has " + std::to_string(v.size()) + " rows, expected " + std::to_string(rows));
  if (v.empty()) format_error(pointer, "matrix has no rows");
  const Eigen::Index r = static_cast<Eigen::Index>(v.size());
  const Eigen::Index c = cols >= 0 ? cols : (v[0].is_array() ? static_cast<Eigen::Index>(v[0].size()) : 0);
  Matrix out(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    out.row(i) = vector_at(v[static_cast<std::size_t>(i)], pointer + "/" + std::to_string(i), c).transpose();
  return out;
}

void expect_schema(const json& doc, const char* schema) {
  const std::string got = string_at(field(doc, "", "schema"), "/schema");
  if (got != schema) format_error("/schema", "expected \"" + std::string(schema) + "\", got \"" + got + "\"");
}

std::string concept_kind_name(ConceptKind kind) {
  return kind == ConceptKind::GroundTruth ? "ground_truth" : "extracted";
}

json pairs_to_object(const std::vector<std::pair<std::string, double>>& pairs) {
  json out = json::object();
  for (const auto& [name, value] : pairs) out[name] = value;
  return out;
}

}  // namespace

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::InvalidInput, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::FormatError, path + ": " + e.what());
  }
}

void write_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::InvalidInput, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      fail(ErrorKind::InvalidInput, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::InvalidInput, "cannot replace " + path);
  }
}

// ---------------------------------------------------------------------------
// Embeddings

DemonstrationSet EmbeddingFile::demonstrations() const {
  std::vector<Demonstration> demos;
  for (const auto& item : items) {
    if (!item.label) fail(ErrorKind::InvalidInput, "demonstration '" + item.id + "' has no label");
    const auto idx = labels.index_of(*item.label);
    if (!idx) fail(ErrorKind::InvalidInput, "demonstration '" + item.id + "' has unknown label " + *item.label);
    demos.push_back({item.id, item.embedding, *idx});
  }
  return DemonstrationSet(std::move(demos));
}

std::vector<Query> EmbeddingFile::queries() const {
  std::vector<Query> out;
  for (const auto& item : items) {
    std::optional<int> label;
    if (item.label) label = labels.index_of(*item.label);
    out.push_back({item.id, item.embedding, label});
  }
  return out;
}

std::vector<Candidate> EmbeddingFile::candidates() const {
  std::vector<Candidate> out;
  for (const auto& item : items) out.push_back({item.id, item.embedding});
  return out;
}

EmbeddingFile normalize_set(const RawEmbeddingSet& raw, const LabelSpace& labels) {
  raw.validate();
  EmbeddingFile out{labels, {}, raw.source};
  for (const auto& item : raw.items) {
    if (item.vectors.cols() != static_cast<Eigen::Index>(labels.size()))
      fail(ErrorKind::ShapeMismatch, "item '" + item.id + "' has " + std::to_string(item.vectors.cols()) +
                                         " columns for " + std::to_string(labels.size()) + " labels");
    out.items.push_back({item.id, item.label, normalize_embedding(item.vectors)});
  }
  return out;
}

EmbeddingFile parse_embeddings(const json& doc) {
  expect_schema(doc, kEmbeddingsSchema);
  const json& labels_json = field(doc, "", "labels");
  if (!labels_json.is_array()) format_error("/labels", "expected an array of strings");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < labels_json.size(); ++i)
    names.push_back(string_at(labels_json[i], "/labels/" + std::to_string(i)));
  std::optional<LabelSpace> labels;
  try {
    labels.emplace(names);
  } catch (const Error& e) {
    format_error("/labels", e.what());
  }

  const long long m = integer_at(field(doc, "", "M"), "/M");
  if (m != static_cast<long long>(labels->size()))
    format_error("/M", "M=" + std::to_string(m) + " but " + std::to_string(labels->size()) + " labels");
  const long long k = integer_at(field(doc, "", "K"), "/K");
  if (k < 1) format_error("/K", "K must be positive");
  const json& normalized_json = field(doc, "", "normalized");
  if (!normalized_json.is_boolean()) format_error("/normalized", "expected a boolean");
  const bool normalized = normalized_json.get<bool>();

  const json& items = field(doc, "", "items");
  if (!items.is_array() || items.empty()) format_error("/items", "expected a non-empty array");

  EmbeddingFile out{*labels, {}, ""};
  if (const json* src = optional_field(doc, "source")) out.source = string_at(*src, "/source");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string ptr = "/items/" + std::to_string(i);
    const std::string id = string_at(field(items[i], ptr, "id"), ptr + "/id");
    std::optional<std::string> label;
    if (const json* l = optional_field(items[i], "label")) {
      label = string_at(*l, ptr + "/label");
      if (!labels->index_of(*label)) format_error(ptr + "/label", "unknown label \"" + *label + "\"");
    }
    Matrix m_raw = matrix_at(field(items[i], ptr, "matrix"), ptr + "/matrix", k, m);
    if (normalized) {
      try {
        out.items.push_back({id, label, EmbeddingMatrix::from_normalized(std::move(m_raw))});
      } catch (const Error& e) {
        fail(ErrorKind::ValidationError, "item '" + id + "' (" + ptr + "/matrix): " + e.what());
      }
    } else {
      out.items.push_back({id, label, normalize_embedding(m_raw)});
    }
  }
  return out;
}

EmbeddingFile load_embeddings(const std::string& path) { return parse_embeddings(read_json(path)); }

json embeddings_to_json(const EmbeddingFile& file) {
  if (file.items.empty()) fail(ErrorKind::InvalidInput, "embedding file has no items");
  json doc;
  doc["schema"] = kEmbeddingsSchema;
  doc["K"] = file.K();
  doc["M"] = file.M();
  doc["labels"] = file.labels.labels();
  doc["normalized"] = true;
  if (!file.source.empty()) doc["source"] = file.source;
  json items = json::array();
  for (const auto& item : file.items) {
    json j;
    j["id"] = item.id;
    j["label"] = item.label ? json(*item.label) : json(nullptr);
    j["matrix"] = matrix_to_json(item.embedding.matrix());
    items.push_back(std::move(j));
  }
  doc["items"] = std::move(items);
  return doc;
}

void save_embeddings(const std::string& path, const EmbeddingFile& file) {
  write_atomic(path, embeddings_to_json(file).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Worlds

SyntheticWorld parse_world(const json& doc) {
  expect_schema(doc, kWorldSchema);
  const Vector p_x = vector_at(field(doc, "", "p_x"), "/p_x");
  const json& emb = field(doc, "", "embeddings");
  if (!emb.is_array() || emb.size() != static_cast<std::size_t>(p_x.size()))
    format_error("/embeddings", "expected one matrix per entry of p_x");
  const Eigen::Index k = static_cast<Eigen::Index>(integer_at(field(doc, "", "K"), "/K"));
  const Eigen::Index m = static_cast<Eigen::Index>(integer_at(field(doc, "", "M"), "/M"));

  std::vector<EmbeddingMatrix> embeddings;
  for (std::size_t x = 0; x < emb.size(); ++x) {
    const std::string ptr = "/embeddings/" + std::to_string(x);
    try {
      embeddings.push_back(EmbeddingMatrix::from_normalized(matrix_at(emb[x], ptr, k, m)));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::FormatError) throw;
      fail(ErrorKind::ValidationError, "input " + std::to_string(x) + " (" + ptr + "): " + e.what());
    }
  }

  const auto n_x = p_x.size();
  std::optional<Matrix> stored;
  if (const json* c = optional_field(doc, "conditionals")) stored = matrix_at(*c, "/conditionals", n_x, m);

  SyntheticWorld w;
  if (const json* a = optional_field(doc, "alpha")) {
    const Vector alpha = vector_at(*a, "/alpha", k);
    Matrix residual;
    if (const json* r = optional_field(doc, "residual")) residual = matrix_at(*r, "/residual", n_x, m);
    w = make_world(p_x, std::move(embeddings), alpha, residual);
    if (stored && (*stored - w.conditionals).cwiseAbs().maxCoeff() > 1e-9)
      fail(ErrorKind::ValidationError, "stored conditionals disagree with alpha and residual");
  } else {
    if (!stored) format_error("/alpha", "world needs alpha or conditionals");
    w = world_from_conditionals(p_x, std::move(embeddings), *stored);
  }
  if (const json* s = optional_field(doc, "seed")) {
    if (!s->is_number_unsigned() && !s->is_number_integer()) format_error("/seed", "expected an integer");
    w.seed = s->get<std::uint64_t>();
  }
  if (const json* t = optional_field(doc, "rho_target")) w.rho_target = number_at(*t, "/rho_target");
  if (const json* t = optional_field(doc, "alpha_shrink_steps"))
    w.alpha_shrink_steps = static_cast<int>(integer_at(*t, "/alpha_shrink_steps"));
  if (const json* t = optional_field(doc, "residual_shrink_steps"))
    w.residual_shrink_steps = static_cast<int>(integer_at(*t, "/residual_shrink_steps"));
  return w;
}

SyntheticWorld load_world(const std::string& path) { return parse_world(read_json(path)); }

json world_to_json(const SyntheticWorld& world) {
  json doc;
  doc["schema"] = kWorldSchema;
  doc["seed"] = world.seed;
  doc["K"] = world.K();
  doc["M"] = world.M();
  doc["alphabet"] = world.alphabet_size();
  doc["p_x"] = vector_to_json(world.p_x);
  json emb = json::array();
  for (const auto& e : world.embeddings) emb.push_back(matrix_to_json(e.matrix()));
  doc["embeddings"] = std::move(emb);
  doc["alpha"] = vector_to_json(world.alpha);
  doc["residual"] = matrix_to_json(world.residual);
  doc["conditionals"] = matrix_to_json(world.conditionals);
  doc["rho_target"] = world.rho_target;
  doc["rho_achieved"] = world.rho_achieved;
  doc["alpha_shrink_steps"] = world.alpha_shrink_steps;
  doc["residual_shrink_steps"] = world.residual_shrink_steps;
  return doc;
}

// ---------------------------------------------------------------------------
// Concepts and reports

json concept_to_json(const ConceptVector& c) {
  json doc;
  doc["schema"] = kConceptSchema;
  doc["kind"] = concept_kind_name(c.kind);
  doc["K"] = c.coefficients.size();
  doc["pool_rank"] = c.pool_rank;
  doc["alpha"] = vector_to_json(c.coefficients);
  return doc;
}

ConceptVector parse_concept(const json& doc) {
  expect_schema(doc, kConceptSchema);
  const auto k = static_cast<Eigen::Index>(integer_at(field(doc, "", "K"), "/K"));
  ConceptVector c;
  c.coefficients = vector_at(field(doc, "", "alpha"), "/alpha", k);
  if (!c.coefficients.allFinite()) format_error("/alpha", "entries must be finite");
  if (const json* kind = optional_field(doc, "kind")) {
    const std::string name = string_at(*kind, "/kind");
    if (name == "ground_truth")
      c.kind = ConceptKind::GroundTruth;
    else if (name == "extracted")
      c.kind = ConceptKind::Extracted;
    else
      format_error("/kind", "unknown concept kind \"" + name + "\"");
  }
  if (const json* r = optional_field(doc, "pool_rank")) c.pool_rank = integer_at(*r, "/pool_rank");
  return c;
}

json to_json(const BoundReport& r) {
  json doc;
  doc["theorem"] = r.theorem;
  doc["terms"] = pairs_to_object(r.terms);
  doc["bound"] = r.bound;
  doc["risk"] = r.risk ? json(*r.risk) : json(nullptr);
  doc["margin"] = std::isfinite(r.margin) ? json(r.margin) : json(nullptr);
  doc["pass"] = r.pass;
  doc["slack"] = r.slack;
  doc["risk_kind"] = r.risk_kind;
  doc["risk_standard_error"] = r.risk_standard_error;
  doc["config_index"] = r.config_index;
  doc["world_seed"] = r.world_seed;
  doc["context"] = pairs_to_object(r.context);
  return doc;
}

json to_json(const lab::TrialPlan& plan) {
  json doc;
  doc["seed"] = plan.seed;
  doc["sweeps"] = plan.sweeps;
  doc["n_min"] = plan.n_min;
  doc["n_max"] = plan.n_max;
  doc["m_min"] = plan.m_min;
  doc["m_max"] = plan.m_max;
  doc["k_max"] = plan.k_max;
  doc["enumeration_budget"] = plan.enumeration_budget;
  doc["mc_trials"] = plan.mc_trials;
  doc["samples"] = plan.samples;
  doc["workers"] = plan.workers;
  doc["tol_factor"] = plan.tol_factor;
  doc["rho_levels"] = plan.rho_levels;
  return doc;
}

json to_json(const lab::VerificationReport& r) {
  json doc;
  doc["schema"] = kReportSchema;
  doc["theorem"] = r.theorem;
  doc["world_seed"] = r.world_seed;
  doc["plan"] = to_json(r.plan);
  json checks = json::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  doc["checks"] = std::move(checks);
  doc["pass_rate"] = r.pass_rate;
  doc["runtime_ms"] = r.runtime_ms;
  doc["summary"] = pairs_to_object(r.summary);
  return doc;
}

}  // namespace cbicl::io
