#pragma once

// Data-parallel inner loops of the pipeline.
//
// Every kernel exists twice: `serial::` is the straightforward reference,
// `omp::` parallelizes over independent rows with OpenMP. Each output element
// is produced by exactly one thread with the same arithmetic as the serial
// version, so the two agree bit-for-bit regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Cholesky>

#include "laic/embed_io.hpp"

namespace laic::kernels {

/// Per-row winner and its score.
struct Nearest {
  std::vector<int> index;
  std::vector<double> score;
};

/// Row-major N x k table of neighbor indices.
struct NeighborTable {
  std::size_t k = 0;
  std::vector<std::size_t> indices;

  std::size_t rows() const noexcept { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::size_t> row(std::size_t i) const noexcept {
    return {indices.data() + i * k, k};
  }
};

/// Row norms; throws ZeroVector when `allow_zero` is false and a row is zero.
Vector row_norms(const Matrix& m, bool allow_zero);

namespace serial {

/// Nearest center in squared Euclidean distance; score is the distance. Ties
/// go to the lowest center index.
Nearest nearest_sq_euclidean(const Matrix& data, const Matrix& centers);

/// Highest-cosine anchor for each query row; score is the cosine. Ties go to
/// the lowest anchor index. Zero rows on either side throw ZeroVector.
Nearest argmax_cosine(const Matrix& queries, const Matrix& anchors);

/// Exact cosine k-NN excluding self, ordered by (cosine desc, index asc).
/// Zero rows have cosine 0 to everything.
NeighborTable knn_cosine(const Matrix& rows, std::size_t k);

/// Solves A c_i = b_i for every row b_i of `rhs`, A given by its Cholesky factor.
Matrix solve_rows_spd(const Eigen::LLT<Eigen::MatrixXd>& factor, const Matrix& rhs);

/// logits(i, k) = cos(x_i, s_k) / temperature.
Matrix cosine_logits(const Matrix& x, const Matrix& centers, double temperature);

/// Chain rule from logit gradients to center gradients:
/// grad_k = sum_i dlogits(i, k) * (x̂_i - cos_ik ŝ_k) / (T ||s_k||).
Matrix accumulate_center_grad(const Matrix& x, const Matrix& dlogits, const Matrix& centers,
                              double temperature);

}  // namespace serial

namespace omp {

Nearest nearest_sq_euclidean(const Matrix& data, const Matrix& centers);
Nearest argmax_cosine(const Matrix& queries, const Matrix& anchors);
NeighborTable knn_cosine(const Matrix& rows, std::size_t k);
Matrix solve_rows_spd(const Eigen::LLT<Eigen::MatrixXd>& factor, const Matrix& rhs);
Matrix cosine_logits(const Matrix& x, const Matrix& centers, double temperature);
Matrix accumulate_center_grad(const Matrix& x, const Matrix& dlogits, const Matrix& centers,
                              double temperature);

}  // namespace omp

}  // namespace laic::kernels
