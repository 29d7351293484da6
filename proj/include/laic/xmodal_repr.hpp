#pragma once

// Image-text representation by ridge regression: every image feature is
// reconstructed from the whole candidate noun set, and the N x M coefficient
// matrix C becomes the new sample representation.

#include <cstddef>

#include "laic/embed_io.hpp"

namespace laic {

/// Default ridge weight.
inline constexpr double kDefaultGamma = 5.0;

struct ReprMatrix {
  Matrix c;  ///< N x M
  double gamma = kDefaultGamma;
  std::size_t n = 0, m = 0, d = 0;
};

/// C = X U^T (U U^T + gamma I_M)^{-1}, solved row by row through a Cholesky
/// factor of the M x M system; no inverse is formed.
/// Throws InvalidArgument (gamma <= 0), DimMismatch, FactorizationFailure.
ReprMatrix ridge_representation(const Matrix& x, const Matrix& u, double gamma);
ReprMatrix ridge_representation(const EmbeddingMatrix& x, const VocabSet& u, double gamma);

/// ||X - C U||_F^2 + gamma ||C||_F^2
double residual_objective(const Matrix& x, const Matrix& u, const Matrix& c, double gamma);

/// ||C (U U^T + gamma I) - X U^T||_F / ||X U^T||_F (absolute when X U^T = 0).
double normal_equation_residual(const Matrix& x, const Matrix& u, const Matrix& c, double gamma);

}  // namespace laic
