#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cbicl/bounds.hpp"
#include "cbicl/concept.hpp"
#include "cbicl/embedding.hpp"
#include "cbicl/lab.hpp"
#include "cbicl/world.hpp"

namespace cbicl::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kEmbeddingsSchema = "cbicl-embeddings-v1";
inline constexpr const char* kWorldSchema = "cbicl-world-v1";
inline constexpr const char* kConceptSchema = "cbicl-concept-v1";
inline constexpr const char* kReportSchema = "cbicl-report-v1";

/// Contents of a cbicl-embeddings-v1 file after normalization.
struct EmbeddingFile {
  struct Item {
    std::string id;
    std::optional<std::string> label;
    EmbeddingMatrix embedding;
  };

  LabelSpace labels;
  std::vector<Item> items;
  std::string source;

  Eigen::Index K() const { return items.front().embedding.K(); }
  Eigen::Index M() const { return items.front().embedding.M(); }

  /// Every item must carry a label from the label space (InvalidInput).
  DemonstrationSet demonstrations() const;
  std::vector<Query> queries() const;
  std::vector<Candidate> candidates() const;
};

/// Normalize a raw provider set against a label space.
EmbeddingFile normalize_set(const RawEmbeddingSet& raw, const LabelSpace& labels);

/// Parse a v1 document. Structural problems raise FormatError with a JSON
/// pointer to the offending field. With "normalized": true each matrix is
/// re-verified (ValidationError naming item and row); otherwise the stored
/// rows are raw vectors and are normalized on load.
EmbeddingFile parse_embeddings(const json& doc);
EmbeddingFile load_embeddings(const std::string& path);
json embeddings_to_json(const EmbeddingFile& file);
void save_embeddings(const std::string& path, const EmbeddingFile& file);

/// A world document needs p_x and embeddings plus either alpha (with an
/// optional residual) or the conditionals table. Stored conditionals are
/// cross-checked against the derived ones within 1e-9.
SyntheticWorld parse_world(const json& doc);
SyntheticWorld load_world(const std::string& path);
json world_to_json(const SyntheticWorld& world);

json concept_to_json(const ConceptVector& c);
ConceptVector parse_concept(const json& doc);

json to_json(const BoundReport& r);
json to_json(const lab::TrialPlan& plan);
json to_json(const lab::VerificationReport& r);

json read_json(const std::string& path);
/// Write to a sibling temp file then rename over the target.
void write_atomic(const std::string& path, const std::string& contents);

json matrix_to_json(const Matrix& m);
json vector_to_json(const Vector& v);

}  // namespace cbicl::io
