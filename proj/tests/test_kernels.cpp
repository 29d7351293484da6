#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <omp.h>

#include "laic/kernels.hpp"
#include "support.hpp"

using namespace laic;
namespace serial = laic::kernels::serial;
namespace omp = laic::kernels::omp;

namespace {

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

bool same(const kernels::Nearest& a, const kernels::Nearest& b) {
  return a.index == b.index &&
         std::memcmp(a.score.data(), b.score.data(), a.score.size() * sizeof(double)) == 0;
}

double plain_cos(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    dot += a(i, c) * b(j, c);
    na += a(i, c) * a(i, c);
    nb += b(j, c) * b(j, c);
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("omp kernels match the serial reference bit for bit") {
  std::mt19937_64 rng(1);
  const int saved = omp_get_max_threads();
  for (int threads : {1, 3, 8}) {
    omp_set_num_threads(threads);
    const Matrix x = test::gaussian(203, 11, rng), c = test::gaussian(7, 11, rng);
    CHECK(same(serial::nearest_sq_euclidean(x, c), omp::nearest_sq_euclidean(x, c)));
    CHECK(same(serial::argmax_cosine(x, c), omp::argmax_cosine(x, c)));
    const auto a = serial::knn_cosine(x, 6), b = omp::knn_cosine(x, 6);
    CHECK(a.indices == b.indices);
    Eigen::MatrixXd gram = c.transpose() * c;
    gram.diagonal().array() += 5.0;
    const Eigen::LLT<Eigen::MatrixXd> llt(gram);
    CHECK(same_bits(serial::solve_rows_spd(llt, x), omp::solve_rows_spd(llt, x)));
    CHECK(same_bits(serial::cosine_logits(x, c, 0.01), omp::cosine_logits(x, c, 0.01)));
    const Matrix dl = test::gaussian(203, 7, rng);
    CHECK(same_bits(serial::accumulate_center_grad(x, dl, c, 0.05), omp::accumulate_center_grad(x, dl, c, 0.05)));
  }
  omp_set_num_threads(saved);
}

TEST_CASE("nearest and argmax kernels against exhaustive scans") {
  std::mt19937_64 rng(2);
  const Matrix x = test::gaussian(150, 6, rng), c = test::gaussian(9, 6, rng);
  const auto near = omp::nearest_sq_euclidean(x, c);
  const auto best = omp::argmax_cosine(x, c);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index e = 0, a = 0;
    double ed = INFINITY, ac = -INFINITY;
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
      const double dist = (x.row(i) - c.row(k)).squaredNorm();
      if (dist < ed) ed = dist, e = k;
      const double cs = plain_cos(x, i, c, k);
      if (cs > ac) ac = cs, a = k;
    }
    CHECK(near.index[static_cast<std::size_t>(i)] == e);
    CHECK(near.score[static_cast<std::size_t>(i)] == doctest::Approx(ed).epsilon(1e-12));
    CHECK(best.index[static_cast<std::size_t>(i)] == a);
    CHECK(best.score[static_cast<std::size_t>(i)] == doctest::Approx(ac).epsilon(1e-12));
  }
}

TEST_CASE("ties resolve to the lowest index") {
  Matrix c(3, 2);
  c << 1, 0, 0, 1, 1, 0;
  Matrix x(2, 2);
  x << 1, 1, 2, 0;
  CHECK(omp::argmax_cosine(x, c).index == std::vector<int>{0, 0});
  CHECK(omp::nearest_sq_euclidean(x, c).index == std::vector<int>{0, 0});
  Matrix z = Matrix::Zero(1, 2);
  CHECK_THROWS_KIND(omp::argmax_cosine(z, c), ErrorKind::ZeroVector);
}

TEST_CASE("knn rows follow a full sort of cosines") {
  std::mt19937_64 rng(3);
  const Matrix x = test::gaussian(60, 5, rng);
  const auto table = omp::knn_cosine(x, 7);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      if (j != i) all.emplace_back(-plain_cos(x, i, x, j), j);
    std::sort(all.begin(), all.end());
    const auto row = table.row(static_cast<std::size_t>(i));
    for (std::size_t r = 0; r < 7; ++r) CHECK(row[r] == static_cast<std::size_t>(all[r].second));
  }
  CHECK_THROWS_KIND(omp::knn_cosine(x, 60), ErrorKind::KHatTooLarge);
  CHECK_THROWS_KIND(serial::knn_cosine(x, 0), ErrorKind::KHatTooLarge);
}

TEST_CASE("SPD row solve agrees with a direct dense solve") {
  std::mt19937_64 rng(4);
  const Matrix u = test::gaussian(8, 5, rng), rhs = test::gaussian(30, 8, rng);
  Eigen::MatrixXd gram = u * u.transpose();
  gram.diagonal().array() += 2.0;
  const Matrix got = omp::solve_rows_spd(Eigen::LLT<Eigen::MatrixXd>(gram), rhs);
  const Matrix want = gram.partialPivLu().solve(rhs.transpose()).transpose();
  CHECK((got - want).norm() <= 1e-10 * want.norm());
}

TEST_CASE("cosine logits scale with 1/T") {
  std::mt19937_64 rng(5);
  const Matrix x = test::gaussian(10, 4, rng), c = test::gaussian(3, 4, rng);
  const Matrix l = omp::cosine_logits(x, c, 0.01);
  for (Eigen::Index i = 0; i < 10; ++i)
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(l(i, k) * 0.01 - plain_cos(x, i, c, k)) <= 1e-12);
}
