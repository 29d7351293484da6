#include <cmath>
#include <cstring>

#include "laic/xmodal_repr.hpp"
#include "support.hpp"

using namespace laic;

namespace {

// Plain gradient descent on the ridge objective, stepped at 1/L.
Matrix descend(const Matrix& x, const Matrix& u, double gamma) {
  Matrix c = Matrix::Zero(x.rows(), u.rows());
  const double lipschitz = 2.0 * (u.squaredNorm() + gamma);
  for (int it = 0; it < 200000; ++it) {
    const Matrix grad = -2.0 * (x - c * u) * u.transpose() + 2.0 * gamma * c;
    c -= grad / lipschitz;
    if (grad.norm() < 1e-13 * (1.0 + x.norm())) break;
  }
  return c;
}

}  // namespace

TEST_CASE("closed-form edge cases") {
  std::mt19937_64 rng(1);
  const Matrix u = test::unit_rows(4, 3, rng);
  CHECK(ridge_representation(Matrix::Zero(5, 3), u, 5.0).c.isZero(0.0));
  Matrix x1(1, 1), u1(1, 1);
  x1 << 2;
  u1 << 1;
  CHECK(ridge_representation(x1, u1, 1.0).c(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(kDefaultGamma == 5.0);
}

TEST_CASE("closed form matches an iterative minimizer") {
  std::mt19937_64 rng(2);
  const Matrix x = test::unit_rows(50, 8, rng), u = test::unit_rows(20, 8, rng);
  const ReprMatrix r = ridge_representation(x, u, 5.0);
  const Matrix oracle = descend(x, u, 5.0);
  CHECK((r.c - oracle).norm() / oracle.norm() <= 1e-4);
  CHECK(normal_equation_residual(x, u, r.c, 5.0) <= 1e-8);
  CHECK(r.n == 50);
  CHECK(r.m == 20);
  CHECK(r.d == 8);
}

TEST_CASE("objective properties") {
  std::mt19937_64 rng(3);
  const Matrix x = test::unit_rows(30, 6, rng), u = test::unit_rows(12, 6, rng);
  CHECK(residual_objective(x, u, Matrix::Zero(30, 12), 5.0) == doctest::Approx(x.squaredNorm()));
  const Matrix c = ridge_representation(x, u, 5.0).c;
  const double best = residual_objective(x, u, c, 5.0);
  for (int t = 0; t < 100; ++t) {
    Matrix delta = test::gaussian(30, 12, rng);
    delta *= 1e-3 / delta.norm();
    CHECK(best <= residual_objective(x, u, c + delta, 5.0));
  }
}

TEST_CASE("larger gamma shrinks C") {
  std::mt19937_64 rng(4);
  const Matrix x = test::unit_rows(40, 10, rng), u = test::unit_rows(15, 10, rng);
  double prev = INFINITY;
  for (double gamma : {0.01, 0.1, 1.0, 5.0, 20.0, 100.0, 1e4}) {
    const double n = ridge_representation(x, u, gamma).c.norm();
    CHECK(n <= prev);
    prev = n;
  }
  CHECK(ridge_representation(x, u, 1e9).c.norm() < 1e-6);
}

TEST_CASE("identical inputs give bit-identical C") {
  std::mt19937_64 rng(5);
  const Matrix x = test::unit_rows(64, 9, rng), u = test::unit_rows(25, 9, rng);
  const Matrix a = ridge_representation(x, u, 5.0).c, b = ridge_representation(x, u, 5.0).c;
  CHECK(std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0);
}

TEST_CASE("argument checks") {
  std::mt19937_64 rng(6);
  const Matrix x = test::unit_rows(5, 3, rng), u = test::unit_rows(4, 3, rng);
  CHECK_THROWS_KIND(ridge_representation(x, u, 0.0), ErrorKind::InvalidArgument);
  CHECK_THROWS_KIND(ridge_representation(x, u, -1.0), ErrorKind::InvalidArgument);
  CHECK_THROWS_KIND(ridge_representation(x, test::unit_rows(4, 2, rng), 5.0), ErrorKind::DimMismatch);
  CHECK_THROWS_KIND(residual_objective(x, u, Matrix::Zero(5, 3), 5.0), ErrorKind::DimMismatch);
}

TEST_CASE("embedding overload uses the vocabulary rows") {
  std::mt19937_64 rng(7);
  const EmbeddingMatrix x = EmbeddingMatrix::from_f64(test::unit_rows(10, 4, rng), true);
  const VocabSet u({"a", "b", "c"}, EmbeddingMatrix::from_f64(test::unit_rows(3, 4, rng), true));
  const Matrix want = ridge_representation(x.to_f64(), u.embeddings().to_f64(), 5.0).c;
  CHECK(ridge_representation(x, u, 5.0).c == want);
}
