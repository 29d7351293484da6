#include "laic/xmodal_repr.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "laic/error.hpp"
#include "laic/kernels.hpp"

namespace laic {

namespace {

void check_shapes(const Matrix& x, const Matrix& u) {
  if (x.cols() != u.cols())
    throw Error(ErrorKind::DimMismatch, "image dim " + std::to_string(x.cols()) + " != noun dim " +
                                            std::to_string(u.cols()));
}

Eigen::MatrixXd regularized_gram(const Matrix& u, double gamma) {
  Eigen::MatrixXd g = u * u.transpose();
  g.diagonal().array() += gamma;
  return g;
}

}  // namespace

ReprMatrix ridge_representation(const Matrix& x, const Matrix& u, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw Error(ErrorKind::InvalidArgument, "gamma must be a positive finite number");
  check_shapes(x, u);
  if (x.rows() == 0 || u.rows() == 0) throw Error(ErrorKind::DimensionZero, "empty X or U");

  const Eigen::MatrixXd gram = regularized_gram(u, gamma);
  Eigen::LLT<Eigen::MatrixXd> factor(gram);
  if (factor.info() != Eigen::Success || !gram.allFinite() || !x.allFinite())
    throw Error(ErrorKind::FactorizationFailure, "U U^T + gamma I is not positive definite (non-finite input?)");

  const Matrix rhs = x * u.transpose();
  ReprMatrix out;
  out.c = kernels::omp::solve_rows_spd(factor, rhs);
  if (!out.c.allFinite()) throw Error(ErrorKind::FactorizationFailure, "solution has non-finite entries");
  out.gamma = gamma;
  out.n = static_cast<std::size_t>(x.rows());
  out.m = static_cast<std::size_t>(u.rows());
  out.d = static_cast<std::size_t>(x.cols());
  return out;
}

ReprMatrix ridge_representation(const EmbeddingMatrix& x, const VocabSet& u, double gamma) {
  return ridge_representation(x.to_f64(), u.embeddings().to_f64(), gamma);
}

double residual_objective(const Matrix& x, const Matrix& u, const Matrix& c, double gamma) {
  check_shapes(x, u);
  if (c.rows() != x.rows() || c.cols() != u.rows())
    throw Error(ErrorKind::DimMismatch, "C must be N x M");
  return (x - c * u).squaredNorm() + gamma * c.squaredNorm();
}

double normal_equation_residual(const Matrix& x, const Matrix& u, const Matrix& c, double gamma) {
  check_shapes(x, u);
  if (c.rows() != x.rows() || c.cols() != u.rows())
    throw Error(ErrorKind::DimMismatch, "C must be N x M");
  const Matrix rhs = x * u.transpose();
  const Matrix lhs = c * regularized_gram(u, gamma);
  const double r = (lhs - rhs).norm();
  const double scale = rhs.norm();
  return scale > 0.0 ? r / scale : r;
}

}  // namespace laic
