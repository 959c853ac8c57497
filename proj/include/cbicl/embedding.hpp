#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cbicl/linalg.hpp"

namespace cbicl {

/// Ordered set of M >= 2 distinct label names. Column j of every
/// EmbeddingMatrix corresponds to labels()[j].
class LabelSpace {
 public:
  explicit LabelSpace(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& name(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<int> index_of(const std::string& name) const;

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<std::string> labels_;
};

/// Provider output before normalization: one D x M matrix per item, column j
/// holding the raw vector for the item paired with label j.
struct RawEmbeddingSet {
  struct Item {
    std::string id;
    Matrix vectors;  // D x M
    std::optional<std::string> label;
  };
  std::vector<Item> items;
  std::string source;

  /// Throws ShapeMismatch when items disagree on D or M, InvalidInput on
  /// non-finite entries or an empty item.
  void validate() const;
};

/// Normalized K x M embedding f(x): rows are features, columns are labels.
/// Every non-degenerate, non-bias row is centered with unit l2 norm,
/// degenerate rows are all zero, and the last row is the constant 1/sqrt(M).
class EmbeddingMatrix {
 public:
  /// Wrap an already-normalized matrix after verifying the invariants.
  /// Rows that are exactly zero are recorded as degenerate. Throws
  /// ValidationError naming the first offending row.
  static EmbeddingMatrix from_normalized(Matrix matrix, double tol = 1e-12);

  const Matrix& matrix() const { return matrix_; }
  Eigen::Index K() const { return matrix_.rows(); }
  Eigen::Index M() const { return matrix_.cols(); }
  const std::vector<Eigen::Index>& degenerate_rows() const { return degenerate_; }
  auto column(Eigen::Index label) const { return matrix_.col(label); }

  bool operator==(const EmbeddingMatrix& other) const {
    return matrix_ == other.matrix_ && degenerate_ == other.degenerate_;
  }

 private:
  friend EmbeddingMatrix normalize_embedding(const Matrix& raw);
  EmbeddingMatrix(Matrix m, std::vector<Eigen::Index> degenerate)
      : matrix_(std::move(m)), degenerate_(std::move(degenerate)) {}

  Matrix matrix_;
  std::vector<Eigen::Index> degenerate_;
};

struct Demonstration {
  std::string id;
  EmbeddingMatrix embedding;
  int label = 0;  // zero-based index into the LabelSpace
};

/// Ordered, non-empty list of labelled demonstrations sharing K and M.
class DemonstrationSet {
 public:
  explicit DemonstrationSet(std::vector<Demonstration> items);

  const std::vector<Demonstration>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  Eigen::Index K() const { return items_.front().embedding.K(); }
  Eigen::Index M() const { return items_.front().embedding.M(); }

 private:
  std::vector<Demonstration> items_;
};

struct Query {
  std::string id;
  EmbeddingMatrix embedding;
  std::optional<int> label;
};

/// Row-wise center, scale to unit norm, zero rows whose centered norm is
/// below 1e-12, and append the 1/sqrt(M) bias row. Output is (D+1) x M.
EmbeddingMatrix normalize_embedding(const Matrix& raw);

/// F(x) = f(x) f(x)^T.
Matrix gram_query(const EmbeddingMatrix& e);

struct PoolGram {
  Matrix gram;
  Eigen::Index rank = 0;
};

/// F_n = (1/n) sum_i F(x_i), with numerical rank at the pseudo-inverse cutoff.
PoolGram gram_pool(const DemonstrationSet& demos, double tol_factor = 1.0);

/// Average of the observed-label columns, (1/n) sum_i f(x_i, y_i).
Vector mean_feature(const DemonstrationSet& demos);

/// Raw provider input for one item: "text + separator + label" for each label.
std::vector<std::string> label_conditioned_texts(const std::string& text,
                                                 const LabelSpace& labels,
                                                 const std::string& separator = "\n");

}  // namespace cbicl
