#pragma once

// Embedding matrices, vocabularies, labels and view bundles, plus the EMB1 /
// EMB8 / LAB1 binary formats shared with the feature extractor.
//
// EMB1: "EMB1" | u32 N | u32 d | u8 normalized | N*d f32, all little-endian, row-major.
// EMB8: identical layout with "EMB8" magic and f64 payload.
// LAB1: "LAB1" | u32 N | u32 K | N u32 labels.
// Vocab sidecar `<stem>.json`: {"names": [...], "source": str, "dim": int}.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace laic {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Tolerance on row norms for matrices flagged as normalized.
inline constexpr double kNormalizedTolerance = 1e-3;

/// Dense N x d float matrix. Immutable after construction; the constructor
/// enforces finiteness, non-zero dimensions and the normalized-flag contract.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values,
                  bool normalized = false);

  /// Downcasts to 32-bit.
  static EmbeddingMatrix from_f64(const Matrix& m, bool normalized = false);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> row(std::size_t i) const noexcept {
    return {values_.data() + i * dim_, dim_};
  }
  float at(std::size_t i, std::size_t j) const noexcept { return values_[i * dim_ + j]; }

  Matrix to_f64() const;

  /// Rows `[first, first + count)` as a new matrix.
  EmbeddingMatrix block(std::size_t first, std::size_t count) const;
  /// Rows picked by index, in the given order.
  EmbeddingMatrix gather(std::span<const std::size_t> indices) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_;
  std::size_t dim_;
  std::vector<float> values_;
  bool normalized_;
};

/// Noun strings paired with their embedding rows.
class VocabSet {
 public:
  /// Names are trimmed; duplicates after trimming are rejected.
  VocabSet(std::vector<std::string> names, EmbeddingMatrix embeddings);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }

  VocabSet subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> names_;
  EmbeddingMatrix embeddings_;
};

/// Base features plus precomputed strongly and weakly augmented views.
struct ViewBundle {
  EmbeddingMatrix base;
  std::vector<EmbeddingMatrix> strong;
  std::vector<EmbeddingMatrix> weak;

  std::size_t samples() const noexcept { return base.rows(); }
  std::size_t dim() const noexcept { return base.dim(); }
  /// Throws DimMismatch if any view block disagrees with `base` on N or d,
  /// MissingView if views are required but absent.
  void validate(bool require_views) const;
};

struct LabelVector {
  std::vector<int> values;
  int num_classes = 0;

  LabelVector() = default;
  /// Throws InvalidArgument unless every value is in [0, num_classes).
  LabelVector(std::vector<int> values, int num_classes);

  std::size_t size() const noexcept { return values.size(); }
  int operator[](std::size_t i) const noexcept { return values[i]; }
  friend bool operator==(const LabelVector&, const LabelVector&) = default;
};

EmbeddingMatrix read_embedding(const std::filesystem::path& path);
void write_embedding(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// EMB8 round-trip for exact resumption of 64-bit intermediates.
Matrix read_matrix_f64(const std::filesystem::path& path, bool* normalized = nullptr);
void write_matrix_f64(const Matrix& m, const std::filesystem::path& path, bool normalized = false);

LabelVector read_labels(const std::filesystem::path& path);
void write_labels(const LabelVector& labels, const std::filesystem::path& path);

/// `<stem>.json` next to an EMB1 file.
std::filesystem::path sidecar_path(const std::filesystem::path& emb_path);
VocabSet read_vocab(const std::filesystem::path& emb_path);
void write_vocab(const VocabSet& vocab, const std::filesystem::path& emb_path,
                 const std::string& source);

/// Reads stacked view files: a strong file holding V_s * N rows is split into
/// V_s blocks of N rows each. Either view path may be empty.
ViewBundle read_view_bundle(const std::filesystem::path& base,
                            const std::filesystem::path& strong,
                            const std::filesystem::path& weak);
/// Stacks blocks vertically into a single matrix.
EmbeddingMatrix stack_blocks(std::span<const EmbeddingMatrix> blocks);

/// Unit-normalizes every row. Throws ZeroRow naming the first all-zero row.
EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m);
void l2_normalize_rows_inplace(Matrix& m);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace laic
