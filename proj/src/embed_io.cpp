#include "laic/embed_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "laic/error.hpp"

namespace laic {

namespace {

using Bytes = std::vector<unsigned char>;

constexpr std::size_t kHeaderBytes = 13;

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

Bytes slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const Bytes& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

struct Header {
  std::uint32_t rows;
  std::uint32_t dim;
  bool normalized;
};

// Shared header check for EMB1/EMB8; returns the parsed header after verifying
// the payload length is exactly rows * dim * elem_size.
Header parse_header(const Bytes& bytes, const char* magic, std::size_t elem_size,
                    const std::filesystem::path& path) {
  if (bytes.size() < 4) throw Error(ErrorKind::TruncatedFile, path.string() + ": shorter than magic");
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw Error(ErrorKind::MagicMismatch, path.string() + ": expected magic " + magic);
  if (bytes.size() < kHeaderBytes)
    throw Error(ErrorKind::TruncatedFile, path.string() + ": header incomplete");
  Header h{get_u32(bytes.data() + 4), get_u32(bytes.data() + 8), false};
  if (h.rows == 0 || h.dim == 0)
    throw Error(ErrorKind::DimensionZero, path.string() + ": header has a zero dimension");
  const unsigned char flag = bytes[12];
  if (flag > 1) throw Error(ErrorKind::InvalidArgument, path.string() + ": normalized flag not 0/1");
  h.normalized = flag == 1;
  const std::uint64_t expected =
      static_cast<std::uint64_t>(h.rows) * h.dim * elem_size;
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (payload < expected)
    throw Error(ErrorKind::TruncatedFile, path.string() + ": payload has " +
                                              std::to_string(payload) + " bytes, header promises " +
                                              std::to_string(expected));
  if (payload > expected)
    throw Error(ErrorKind::DimMismatch, path.string() + ": " + std::to_string(payload - expected) +
                                            " trailing bytes after payload");
  return h;
}

void write_header(Bytes& out, const char* magic, std::size_t rows, std::size_t dim, bool normalized) {
  out.insert(out.end(), magic, magic + 4);
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(dim));
  out.push_back(normalized ? 1 : 0);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

void check_finite(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw Error(ErrorKind::NonFiniteValue,
                    "non-finite value at row " + std::to_string(i) + ", col " + std::to_string(j));
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values,
                                 bool normalized)
    : rows_(rows), dim_(dim), values_(std::move(values)), normalized_(normalized) {
  if (rows_ == 0 || dim_ == 0) throw Error(ErrorKind::DimensionZero, "embedding matrix needs rows, dim >= 1");
  if (values_.size() != rows_ * dim_)
    throw Error(ErrorKind::DimMismatch, "value count " + std::to_string(values_.size()) +
                                            " != rows*dim " + std::to_string(rows_ * dim_));
  for (std::size_t i = 0; i < rows_; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const float v = values_[i * dim_ + j];
      if (!std::isfinite(v))
        throw Error(ErrorKind::NonFiniteValue,
                    "non-finite value at row " + std::to_string(i) + ", col " + std::to_string(j));
      sq += static_cast<double>(v) * v;
    }
    if (normalized_ && std::abs(std::sqrt(sq) - 1.0) > kNormalizedTolerance)
      throw Error(ErrorKind::InvariantViolation,
                  "row " + std::to_string(i) + " flagged normalized but has norm " +
                      std::to_string(std::sqrt(sq)));
  }
}

EmbeddingMatrix EmbeddingMatrix::from_f64(const Matrix& m, bool normalized) {
  std::vector<float> values(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      values[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
  return EmbeddingMatrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                         std::move(values), normalized);
}

Matrix EmbeddingMatrix::to_f64() const {
  Matrix m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < rows_ * dim_; ++i) m.data()[i] = values_[i];
  return m;
}

EmbeddingMatrix EmbeddingMatrix::block(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw Error(ErrorKind::DimMismatch, "block out of range");
  std::vector<float> v(values_.begin() + static_cast<std::ptrdiff_t>(first * dim_),
                       values_.begin() + static_cast<std::ptrdiff_t>((first + count) * dim_));
  return EmbeddingMatrix(count, dim_, std::move(v), normalized_);
}

EmbeddingMatrix EmbeddingMatrix::gather(std::span<const std::size_t> indices) const {
  std::vector<float> v;
  v.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    if (i >= rows_) throw Error(ErrorKind::DimMismatch, "gather index out of range");
    auto r = row(i);
    v.insert(v.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(indices.size(), dim_, std::move(v), normalized_);
}

VocabSet::VocabSet(std::vector<std::string> names, EmbeddingMatrix embeddings)
    : names_(std::move(names)), embeddings_(std::move(embeddings)) {
  if (names_.size() != embeddings_.rows())
    throw Error(ErrorKind::DimMismatch, std::to_string(names_.size()) + " names for " +
                                            std::to_string(embeddings_.rows()) + " embedding rows");
  std::set<std::string> seen;
  for (auto& n : names_) {
    n = trim(n);
    if (!seen.insert(n).second) throw Error(ErrorKind::InvalidArgument, "duplicate noun '" + n + "'");
  }
}

VocabSet VocabSet::subset(std::span<const std::size_t> indices) const {
  std::vector<std::string> names;
  names.reserve(indices.size());
  for (std::size_t i : indices) names.push_back(names_.at(i));
  return VocabSet(std::move(names), embeddings_.gather(indices));
}

void ViewBundle::validate(bool require_views) const {
  for (const auto* group : {&strong, &weak})
    for (const auto& v : *group)
      if (v.rows() != base.rows() || v.dim() != base.dim())
        throw Error(ErrorKind::DimMismatch, "view block shape " + std::to_string(v.rows()) + "x" +
                                                std::to_string(v.dim()) + " != base " +
                                                std::to_string(base.rows()) + "x" +
                                                std::to_string(base.dim()));
  if (require_views && (strong.empty() || weak.empty()))
    throw Error(ErrorKind::MissingView, "consistency loss needs at least one strong and one weak view");
}

LabelVector::LabelVector(std::vector<int> v, int k) : values(std::move(v)), num_classes(k) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "num_classes must be >= 1");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] < 0 || values[i] >= k)
      throw Error(ErrorKind::InvalidArgument, "label " + std::to_string(values[i]) + " at index " +
                                                  std::to_string(i) + " outside [0, " +
                                                  std::to_string(k) + ")");
}

EmbeddingMatrix read_embedding(const std::filesystem::path& path) {
  const Bytes bytes = slurp(path);
  const Header h = parse_header(bytes, "EMB1", 4, path);
  const std::size_t count = static_cast<std::size_t>(h.rows) * h.dim;
  std::vector<float> values(count);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    if (!std::isfinite(values[i]))
      throw Error(ErrorKind::NonFiniteValue, path.string() + ": non-finite value at row " +
                                                 std::to_string(i / h.dim) + ", col " +
                                                 std::to_string(i % h.dim));
  }
  return EmbeddingMatrix(h.rows, h.dim, std::move(values), h.normalized);
}

void write_embedding(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  Bytes out;
  out.reserve(kHeaderBytes + m.values().size() * 4);
  write_header(out, "EMB1", m.rows(), m.dim(), m.normalized());
  for (float v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  spit(out, path);
}

Matrix read_matrix_f64(const std::filesystem::path& path, bool* normalized) {
  const Bytes bytes = slurp(path);
  const Header h = parse_header(bytes, "EMB8", 8, path);
  Matrix m(h.rows, h.dim);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(get_u64(p + 8 * i));
  check_finite(m);
  if (normalized) *normalized = h.normalized;
  return m;
}

void write_matrix_f64(const Matrix& m, const std::filesystem::path& path, bool normalized) {
  if (m.rows() == 0 || m.cols() == 0) throw Error(ErrorKind::DimensionZero, "empty matrix");
  check_finite(m);
  Bytes out;
  out.reserve(kHeaderBytes + static_cast<std::size_t>(m.size()) * 8);
  write_header(out, "EMB8", static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
               normalized);
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
  spit(out, path);
}

LabelVector read_labels(const std::filesystem::path& path) {
  const Bytes bytes = slurp(path);
  if (bytes.size() < 4) throw Error(ErrorKind::TruncatedFile, path.string() + ": shorter than magic");
  if (std::memcmp(bytes.data(), "LAB1", 4) != 0)
    throw Error(ErrorKind::MagicMismatch, path.string() + ": expected magic LAB1");
  if (bytes.size() < 12) throw Error(ErrorKind::TruncatedFile, path.string() + ": header incomplete");
  const std::uint32_t n = get_u32(bytes.data() + 4);
  const std::uint32_t k = get_u32(bytes.data() + 8);
  const std::uint64_t expected = 12 + static_cast<std::uint64_t>(n) * 4;
  if (bytes.size() < expected) throw Error(ErrorKind::TruncatedFile, path.string() + ": label payload short");
  if (bytes.size() > expected) throw Error(ErrorKind::DimMismatch, path.string() + ": trailing bytes");
  std::vector<int> values(n);
  for (std::uint32_t i = 0; i < n; ++i) values[i] = static_cast<int>(get_u32(bytes.data() + 12 + 4 * i));
  return LabelVector(std::move(values), static_cast<int>(k));
}

void write_labels(const LabelVector& labels, const std::filesystem::path& path) {
  Bytes out;
  out.insert(out.end(), {'L', 'A', 'B', '1'});
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  put_u32(out, static_cast<std::uint32_t>(labels.num_classes));
  for (int v : labels.values) put_u32(out, static_cast<std::uint32_t>(v));
  spit(out, path);
}

std::filesystem::path sidecar_path(const std::filesystem::path& emb_path) {
  auto p = emb_path;
  p.replace_extension(".json");
  return p;
}

VocabSet read_vocab(const std::filesystem::path& emb_path) {
  EmbeddingMatrix emb = read_embedding(emb_path);
  const auto side = sidecar_path(emb_path);
  std::ifstream in(side);
  if (!in) throw Error(ErrorKind::IoFailure, "missing sidecar " + side.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoFailure, side.string() + ": " + e.what());
  }
  if (!j.contains("names") || !j["names"].is_array())
    throw Error(ErrorKind::IoFailure, side.string() + ": no names array");
  if (j.contains("dim") && j["dim"].get<std::size_t>() != emb.dim())
    throw Error(ErrorKind::DimMismatch, side.string() + ": sidecar dim disagrees with matrix");
  return VocabSet(j["names"].get<std::vector<std::string>>(), std::move(emb));
}

void write_vocab(const VocabSet& vocab, const std::filesystem::path& emb_path,
                 const std::string& source) {
  write_embedding(vocab.embeddings(), emb_path);
  nlohmann::json j;
  j["names"] = vocab.names();
  j["source"] = source;
  j["dim"] = vocab.embeddings().dim();
  std::ofstream out(sidecar_path(emb_path), std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + sidecar_path(emb_path).string());
  out << j.dump(2) << '\n';
}

namespace {

std::vector<EmbeddingMatrix> split_views(const EmbeddingMatrix& stacked, std::size_t n,
                                         const std::filesystem::path& path) {
  if (stacked.rows() % n != 0)
    throw Error(ErrorKind::DimMismatch, path.string() + ": " + std::to_string(stacked.rows()) +
                                            " rows is not a multiple of N=" + std::to_string(n));
  std::vector<EmbeddingMatrix> blocks;
  for (std::size_t b = 0; b < stacked.rows() / n; ++b) blocks.push_back(stacked.block(b * n, n));
  return blocks;
}

}  // namespace

ViewBundle read_view_bundle(const std::filesystem::path& base, const std::filesystem::path& strong,
                            const std::filesystem::path& weak) {
  ViewBundle bundle{read_embedding(base), {}, {}};
  const std::size_t n = bundle.base.rows();
  if (!strong.empty()) bundle.strong = split_views(read_embedding(strong), n, strong);
  if (!weak.empty()) bundle.weak = split_views(read_embedding(weak), n, weak);
  bundle.validate(false);
  return bundle;
}

EmbeddingMatrix stack_blocks(std::span<const EmbeddingMatrix> blocks) {
  if (blocks.empty()) throw Error(ErrorKind::DimensionZero, "no blocks to stack");
  std::vector<float> v;
  std::size_t rows = 0;
  bool normalized = true;
  for (const auto& b : blocks) {
    if (b.dim() != blocks.front().dim()) throw Error(ErrorKind::DimMismatch, "blocks differ in dim");
    v.insert(v.end(), b.values().begin(), b.values().end());
    rows += b.rows();
    normalized = normalized && b.normalized();
  }
  return EmbeddingMatrix(rows, blocks.front().dim(), std::move(v), normalized);
}

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m) {
  std::vector<float> out(m.values().begin(), m.values().end());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (float v : m.row(i)) sq += static_cast<double>(v) * v;
    if (sq == 0.0) throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i) + " is all zeros");
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < m.dim(); ++j)
      out[i * m.dim() + j] = static_cast<float>(m.at(i, j) * inv);
  }
  return EmbeddingMatrix(m.rows(), m.dim(), std::move(out), true);
}

void l2_normalize_rows_inplace(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n == 0.0) throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i) + " is all zeros");
    m.row(i) /= n;
  }
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimMismatch, "cosine of unequal lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::ZeroVector, "cosine of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace laic
