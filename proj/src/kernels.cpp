#include "laic/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "laic/error.hpp"

namespace laic::kernels {

namespace {

using Index = Eigen::Index;

// Rows scaled to unit length; zero rows stay zero.
Matrix unit_rows(const Matrix& m, const Vector& norms) {
  Matrix out = m;
  for (Index i = 0; i < m.rows(); ++i)
    if (norms(i) > 0.0) out.row(i) /= norms(i);
  return out;
}

struct ScoreOrder {
  const std::vector<double>& score;
  bool operator()(std::size_t a, std::size_t b) const {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  }
};

double sq_distance(const Matrix& a, Index i, const Matrix& b, Index j) {
  double acc = 0.0;
  for (Index c = 0; c < a.cols(); ++c) {
    const double diff = a(i, c) - b(j, c);
    acc += diff * diff;
  }
  return acc;
}

void nearest_row(const Matrix& data, const Matrix& centers, Index i, Nearest& out) {
  int best = 0;
  double best_d = sq_distance(data, i, centers, 0);
  for (Index k = 1; k < centers.rows(); ++k) {
    const double d = sq_distance(data, i, centers, k);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  out.index[static_cast<std::size_t>(i)] = best;
  out.score[static_cast<std::size_t>(i)] = best_d;
}

void argmax_row(const Matrix& q, const Matrix& a, Index i, Nearest& out) {
  int best = 0;
  double best_s = q.row(i).dot(a.row(0));
  for (Index k = 1; k < a.rows(); ++k) {
    const double s = q.row(i).dot(a.row(k));
    if (s > best_s) {
      best_s = s;
      best = static_cast<int>(k);
    }
  }
  out.index[static_cast<std::size_t>(i)] = best;
  out.score[static_cast<std::size_t>(i)] = best_s;
}

std::vector<double> cosine_row(const Matrix& unit, Index i) {
  std::vector<double> score(static_cast<std::size_t>(unit.rows()));
  for (Index j = 0; j < unit.rows(); ++j) score[static_cast<std::size_t>(j)] = unit.row(i).dot(unit.row(j));
  return score;
}

void check_knn(const Matrix& rows, std::size_t k) {
  if (k == 0 || k >= static_cast<std::size_t>(rows.rows()))
    throw Error(ErrorKind::KHatTooLarge, "k_hat=" + std::to_string(k) + " needs 1 <= k_hat < N=" +
                                             std::to_string(rows.rows()));
}

void check_centers(const Matrix& data, const Matrix& centers) {
  if (centers.rows() == 0) throw Error(ErrorKind::InvalidArgument, "no centers");
  if (data.cols() != centers.cols()) throw Error(ErrorKind::DimMismatch, "data/center dim mismatch");
}

void center_grad_row(const Matrix& xhat, const Matrix& dlogits, const Matrix& centers, double temperature,
                     Index k, Matrix& grad) {
  const double norm = centers.row(k).norm();
  const Eigen::RowVectorXd shat = centers.row(k) / norm;
  Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(centers.cols());
  for (Index i = 0; i < xhat.rows(); ++i) {
    const double w = dlogits(i, k);
    if (w == 0.0) continue;
    const double c = xhat.row(i).dot(shat);
    g += w * (xhat.row(i) - c * shat);
  }
  grad.row(k) = g / (temperature * norm);
}

void check_grad_inputs(const Matrix& x, const Matrix& dlogits, const Matrix& centers) {
  if (x.cols() != centers.cols() || dlogits.rows() != x.rows() || dlogits.cols() != centers.rows())
    throw Error(ErrorKind::DimMismatch, "gradient accumulation shapes disagree");
}

}  // namespace

Vector row_norms(const Matrix& m, bool allow_zero) {
  Vector n(m.rows());
  for (Index i = 0; i < m.rows(); ++i) {
    n(i) = m.row(i).norm();
    if (!allow_zero && n(i) == 0.0)
      throw Error(ErrorKind::ZeroVector, "row " + std::to_string(i) + " has zero norm");
  }
  return n;
}

namespace serial {

Nearest nearest_sq_euclidean(const Matrix& data, const Matrix& centers) {
  check_centers(data, centers);
  Nearest out{std::vector<int>(static_cast<std::size_t>(data.rows())),
              std::vector<double>(static_cast<std::size_t>(data.rows()))};
  for (Index i = 0; i < data.rows(); ++i) nearest_row(data, centers, i, out);
  return out;
}

Nearest argmax_cosine(const Matrix& queries, const Matrix& anchors) {
  check_centers(queries, anchors);
  const Matrix q = unit_rows(queries, row_norms(queries, false));
  const Matrix a = unit_rows(anchors, row_norms(anchors, false));
  Nearest out{std::vector<int>(static_cast<std::size_t>(q.rows())),
              std::vector<double>(static_cast<std::size_t>(q.rows()))};
  for (Index i = 0; i < q.rows(); ++i) argmax_row(q, a, i, out);
  return out;
}

NeighborTable knn_cosine(const Matrix& rows, std::size_t k) {
  check_knn(rows, k);
  const Matrix unit = unit_rows(rows, row_norms(rows, true));
  const auto n = static_cast<std::size_t>(rows.rows());
  NeighborTable table{k, std::vector<std::size_t>(n * k)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto score = cosine_row(unit, static_cast<Index>(i));
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::sort(order.begin(), order.end(), ScoreOrder{score});
    std::copy_n(order.begin(), k, table.indices.begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  return table;
}

Matrix solve_rows_spd(const Eigen::LLT<Eigen::MatrixXd>& factor, const Matrix& rhs) {
  Matrix out(rhs.rows(), rhs.cols());
  for (Index i = 0; i < rhs.rows(); ++i) out.row(i) = factor.solve(rhs.row(i).transpose()).transpose();
  return out;
}

Matrix cosine_logits(const Matrix& x, const Matrix& centers, double temperature) {
  check_centers(x, centers);
  const Matrix xh = unit_rows(x, row_norms(x, false));
  const Matrix sh = unit_rows(centers, row_norms(centers, false));
  Matrix out(x.rows(), centers.rows());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index k = 0; k < centers.rows(); ++k) out(i, k) = xh.row(i).dot(sh.row(k)) / temperature;
  return out;
}

Matrix accumulate_center_grad(const Matrix& x, const Matrix& dlogits, const Matrix& centers,
                              double temperature) {
  check_grad_inputs(x, dlogits, centers);
  const Matrix xh = unit_rows(x, row_norms(x, false));
  row_norms(centers, false);
  Matrix grad(centers.rows(), centers.cols());
  for (Index k = 0; k < centers.rows(); ++k) center_grad_row(xh, dlogits, centers, temperature, k, grad);
  return grad;
}

}  // namespace serial

namespace omp {

Nearest nearest_sq_euclidean(const Matrix& data, const Matrix& centers) {
  check_centers(data, centers);
  Nearest out{std::vector<int>(static_cast<std::size_t>(data.rows())),
              std::vector<double>(static_cast<std::size_t>(data.rows()))};
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < data.rows(); ++i) nearest_row(data, centers, i, out);
  return out;
}

Nearest argmax_cosine(const Matrix& queries, const Matrix& anchors) {
  check_centers(queries, anchors);
  const Matrix q = unit_rows(queries, row_norms(queries, false));
  const Matrix a = unit_rows(anchors, row_norms(anchors, false));
  Nearest out{std::vector<int>(static_cast<std::size_t>(q.rows())),
              std::vector<double>(static_cast<std::size_t>(q.rows()))};
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < q.rows(); ++i) argmax_row(q, a, i, out);
  return out;
}

NeighborTable knn_cosine(const Matrix& rows, std::size_t k) {
  check_knn(rows, k);
  const Matrix unit = unit_rows(rows, row_norms(rows, true));
  const auto n = static_cast<std::size_t>(rows.rows());
  NeighborTable table{k, std::vector<std::size_t>(n * k)};
#pragma omp parallel
  {
    std::vector<std::size_t> order(n - 1);
#pragma omp for schedule(dynamic, 16)
    for (std::size_t i = 0; i < n; ++i) {
      auto score = cosine_row(unit, static_cast<Index>(i));
      std::size_t w = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) order[w++] = j;
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        ScoreOrder{score});
      std::copy_n(order.begin(), k, table.indices.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
  }
  return table;
}

Matrix solve_rows_spd(const Eigen::LLT<Eigen::MatrixXd>& factor, const Matrix& rhs) {
  Matrix out(rhs.rows(), rhs.cols());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < rhs.rows(); ++i) out.row(i) = factor.solve(rhs.row(i).transpose()).transpose();
  return out;
}

Matrix cosine_logits(const Matrix& x, const Matrix& centers, double temperature) {
  check_centers(x, centers);
  const Matrix xh = unit_rows(x, row_norms(x, false));
  const Matrix sh = unit_rows(centers, row_norms(centers, false));
  Matrix out(x.rows(), centers.rows());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < x.rows(); ++i)
    for (Index k = 0; k < centers.rows(); ++k) out(i, k) = xh.row(i).dot(sh.row(k)) / temperature;
  return out;
}

Matrix accumulate_center_grad(const Matrix& x, const Matrix& dlogits, const Matrix& centers,
                              double temperature) {
  check_grad_inputs(x, dlogits, centers);
  const Matrix xh = unit_rows(x, row_norms(x, false));
  row_norms(centers, false);
  Matrix grad(centers.rows(), centers.cols());
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < centers.rows(); ++k) center_grad_row(xh, dlogits, centers, temperature, k, grad);
  return grad;
}

}  // namespace omp

}  // namespace laic::kernels
