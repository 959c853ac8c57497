#include "cbicl/embedding.hpp"

#include <cmath>
#include <set>

#include "cbicl/errors.hpp"

namespace cbicl {

namespace {
constexpr double kDegenerateNorm = 1e-12;
}

LabelSpace::LabelSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) fail(ErrorKind::InvalidInput, "label space needs at least 2 labels");
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) fail(ErrorKind::InvalidInput, "label names must be distinct");
}

std::optional<int> LabelSpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

void RawEmbeddingSet::validate() const {
  if (items.empty()) return;
  const auto d = items.front().vectors.rows();
  const auto m = items.front().vectors.cols();
  for (const auto& item : items) {
    if (item.vectors.size() == 0) fail(ErrorKind::InvalidInput, "item '" + item.id + "' is empty");
    if (item.vectors.rows() != d || item.vectors.cols() != m)
      fail(ErrorKind::ShapeMismatch, "item '" + item.id + "' does not share D and M");
    if (!item.vectors.allFinite())
      fail(ErrorKind::InvalidInput, "item '" + item.id + "' has non-finite entries");
  }
}

EmbeddingMatrix normalize_embedding(const Matrix& raw) {
  if (raw.rows() < 1) fail(ErrorKind::InvalidInput, "raw embedding needs D >= 1");
  if (raw.cols() < 2) fail(ErrorKind::InvalidInput, "raw embedding needs M >= 2");
  if (!raw.allFinite()) fail(ErrorKind::InvalidInput, "raw embedding has non-finite entries");

  const auto d = raw.rows();
  const auto m = raw.cols();
  Matrix out(d + 1, m);
  std::vector<Eigen::Index> degenerate;
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::RowVectorXd centered = raw.row(k).array() - raw.row(k).mean();
    const double norm = centered.norm();
    if (norm < kDegenerateNorm) {
      out.row(k).setZero();
      degenerate.push_back(k);
    } else {
      out.row(k) = centered / norm;
    }
  }
  out.row(d).setConstant(1.0 / std::sqrt(static_cast<double>(m)));
  return EmbeddingMatrix(std::move(out), std::move(degenerate));
}

EmbeddingMatrix EmbeddingMatrix::from_normalized(Matrix matrix, double tol) {
  if (matrix.rows() < 1 || matrix.cols() < 2)
    fail(ErrorKind::ValidationError, "normalized embedding needs K >= 1 and M >= 2");
  if (!matrix.allFinite()) fail(ErrorKind::ValidationError, "normalized embedding has non-finite entries");
  const auto k_bias = matrix.rows() - 1;
  const double bias = 1.0 / std::sqrt(static_cast<double>(matrix.cols()));
  for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
    if (std::abs(matrix(k_bias, j) - bias) > tol)
      fail(ErrorKind::ValidationError,
           "row " + std::to_string(k_bias) + " (bias) is not the constant 1/sqrt(M)");
  }
  // Snap the bias row to the exact constant so downstream identities hold bit-for-bit.
  matrix.row(k_bias).setConstant(bias);

  std::vector<Eigen::Index> degenerate;
  for (Eigen::Index k = 0; k < k_bias; ++k) {
    if ((matrix.row(k).array() == 0.0).all()) {
      degenerate.push_back(k);
      continue;
    }
    if (std::abs(matrix.row(k).sum()) > tol)
      fail(ErrorKind::ValidationError, "row " + std::to_string(k) + " is not centered");
    if (std::abs(matrix.row(k).squaredNorm() - 1.0) > tol)
      fail(ErrorKind::ValidationError, "row " + std::to_string(k) + " does not have unit norm");
  }
  return EmbeddingMatrix(std::move(matrix), std::move(degenerate));
}

DemonstrationSet::DemonstrationSet(std::vector<Demonstration> items) : items_(std::move(items)) {
  if (items_.empty()) fail(ErrorKind::InvalidInput, "demonstration set needs n >= 1");
  const auto k = items_.front().embedding.K();
  const auto m = items_.front().embedding.M();
  for (const auto& d : items_) {
    if (d.embedding.K() != k || d.embedding.M() != m)
      fail(ErrorKind::ShapeMismatch, "demonstration '" + d.id + "' has K=" +
                                         std::to_string(d.embedding.K()) + ", M=" +
                                         std::to_string(d.embedding.M()) + "; expected K=" +
                                         std::to_string(k) + ", M=" + std::to_string(m));
    if (d.label < 0 || d.label >= m)
      fail(ErrorKind::InvalidInput, "demonstration '" + d.id + "' label index out of range");
  }
}

Matrix gram_query(const EmbeddingMatrix& e) {
  return symmetrized(e.matrix() * e.matrix().transpose());
}

PoolGram gram_pool(const DemonstrationSet& demos, double tol_factor) {
  const auto k = demos.K();
  Matrix sum = Matrix::Zero(k, k);
  for (const auto& d : demos.items()) sum += gram_query(d.embedding);
  PoolGram out;
  out.gram = sum / static_cast<double>(demos.size());
  out.rank = pinv_psd(out.gram, tol_factor).rank;
  return out;
}

Vector mean_feature(const DemonstrationSet& demos) {
  Vector sum = Vector::Zero(demos.K());
  for (const auto& d : demos.items()) {
    if (d.label < 0 || d.label >= d.embedding.M())
      fail(ErrorKind::InvalidInput, "label index out of range for '" + d.id + "'");
    sum += d.embedding.column(d.label);
  }
  return sum / static_cast<double>(demos.size());
}

std::vector<std::string> label_conditioned_texts(const std::string& text,
                                                 const LabelSpace& labels,
                                                 const std::string& separator) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& name : labels.labels()) out.push_back(text + separator + name);
  return out;
}

}  // namespace cbicl
