#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "laic/cluster.hpp"
#include "support.hpp"

using namespace laic;

namespace {

// Independent metric implementations from raw label lists.
double oracle_nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> ca, cb;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1;
    cb[b[i]] += 1;
    joint[{a[i], b[i]}] += 1;
  }
  double mi = 0, ha = 0, hb = 0;
  for (auto& [key, v] : joint) mi += v / n * std::log(n * v / (ca[key.first] * cb[key.second]));
  for (auto& [key, v] : ca) ha -= v / n * std::log(v / n);
  for (auto& [key, v] : cb) hb -= v / n * std::log(v / n);
  return (ha + hb) == 0 ? 1.0 : mi / ((ha + hb) / 2);
}

// Rand-index based ARI by explicit pair enumeration.
double oracle_ari(const std::vector<int>& a, const std::vector<int>& b) {
  double both = 0, in_a = 0, in_b = 0, pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      in_a += sa;
      in_b += sb;
      pairs += 1;
    }
  const double expected = in_a * in_b / pairs;
  const double top = 0.5 * (in_a + in_b);
  return top == expected ? 1.0 : (both - expected) / (top - expected);
}

std::int64_t brute_force_trace(const CountMatrix& t) {
  std::vector<int> perm(t.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = -1;
  do {
    std::int64_t s = 0;
    for (std::size_t r = 0; r < t.size(); ++r) s += t[r][static_cast<std::size_t>(perm[r])];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("k equal to the row count gives singletons and zero inertia") {
  std::mt19937_64 rng(1);
  const Matrix x = test::gaussian(6, 3, rng);
  const KMeansResult r = kmeans(x, 6, 0);
  CHECK(r.inertia == 0.0);
  std::vector<int> l = r.labels.values;
  std::sort(l.begin(), l.end());
  CHECK(std::adjacent_find(l.begin(), l.end()) == l.end());
}

TEST_CASE("two separated duplicate pairs are recovered") {
  Matrix x(4, 2);
  x << 0, 0, 10, 10, 0, 0, 10, 10;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const KMeansResult r = kmeans(x, 2, seed);
    CHECK(r.labels[0] == r.labels[2]);
    CHECK(r.labels[1] == r.labels[3]);
    CHECK(r.labels[0] != r.labels[1]);
    CHECK(r.inertia == 0.0);
  }
}

TEST_CASE("final labels satisfy the nearest-center property") {
  std::mt19937_64 rng(2);
  const Matrix x = test::gaussian(200, 5, rng);
  const KMeansResult r = kmeans(x, 4, 7);
  double inertia = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int own = r.labels[static_cast<std::size_t>(i)];
    const double d_own = (x.row(i) - r.centers.row(own)).squaredNorm();
    inertia += d_own;
    for (Eigen::Index k = 0; k < 4; ++k) CHECK(d_own <= (x.row(i) - r.centers.row(k)).squaredNorm());
  }
  CHECK(r.inertia == doctest::Approx(inertia).epsilon(1e-12));
}

TEST_CASE("inertia trace never increases") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix x = test::gaussian(120, 3, rng);
    const KMeansResult r = kmeans(x, 6, seed, {300, 1e-12, 1});
    for (std::size_t t = 1; t < r.inertia_trace.size(); ++t)
      CHECK(r.inertia_trace[t] <= r.inertia_trace[t - 1] * (1 + 1e-12));
  }
}

TEST_CASE("kmeans is deterministic per seed and rejects impossible k") {
  std::mt19937_64 rng(3);
  const Matrix x = test::gaussian(80, 4, rng);
  const KMeansResult a = kmeans(x, 5, 42), b = kmeans(x, 5, 42);
  CHECK(a.labels == b.labels);
  CHECK(a.inertia == b.inertia);
  CHECK_THROWS_KIND(kmeans(x, 81, 0), ErrorKind::KTooLarge);
  CHECK_THROWS_KIND(kmeans(x, 0, 0), ErrorKind::KTooLarge);
  Matrix same = Matrix::Ones(5, 2);
  CHECK_THROWS_KIND(kmeans(same, 2, 0), ErrorKind::KTooLarge);
}

TEST_CASE("Hungarian matching") {
  SUBCASE("identity") {
    const CountMatrix t{{5, 0, 0}, {0, 3, 0}, {0, 0, 9}};
    const Matching m = hungarian_match(t);
    CHECK(m.permutation == std::vector<int>{0, 1, 2});
    CHECK(m.matched == 17);
  }
  SUBCASE("permutation contingency") {
    // predicted r holds true class perm[r]
    const std::vector<int> perm{2, 0, 3, 1};
    CountMatrix t(4, std::vector<std::int64_t>(4, 0));
    for (int r = 0; r < 4; ++r) t[static_cast<std::size_t>(r)][static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = 4 + r;
    const Matching m = hungarian_match(t);
    CHECK(m.permutation == perm);
    CHECK(m.matched == 4 + 5 + 6 + 7);
  }
  SUBCASE("random 6x6 against all 720 permutations") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> cnt(0, 30);
    for (int t = 0; t < 100; ++t) {
      CountMatrix c(6, std::vector<std::int64_t>(6));
      for (auto& row : c)
        for (auto& v : row) v = cnt(rng);
      CHECK(hungarian_match(c).matched == brute_force_trace(c));
    }
  }
  SUBCASE("errors and empties") {
    CHECK_THROWS_KIND(hungarian_match({{1, 2}, {3}}), ErrorKind::NonSquare);
    CHECK(hungarian_match({}).matched == 0);
  }
}

TEST_CASE("metrics on identical and relabeled predictions") {
  std::mt19937_64 rng(5);
  const auto truth_v = test::random_labels(300, 6, rng);
  const LabelVector truth(truth_v, 6);
  MetricsReport m = evaluate(truth, truth);
  CHECK(m.nmi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.acc == 1.0);
  CHECK(m.ari == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<int> perm{3, 5, 0, 1, 4, 2};
  std::vector<int> relabeled(truth_v.size());
  for (std::size_t i = 0; i < truth_v.size(); ++i) relabeled[i] = perm[static_cast<std::size_t>(truth_v[i])];
  m = evaluate(LabelVector(relabeled, 6), truth);
  CHECK(m.acc == 1.0);
  CHECK(m.nmi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.ari == doctest::Approx(1.0).epsilon(1e-12));
  for (int c = 0; c < 6; ++c) CHECK(m.matching[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])] == c);
}

TEST_CASE("metrics match independent recomputation and are relabeling invariant") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto a = test::random_labels(150, 4, rng);
    auto b = a;
    for (std::size_t i = 0; i < b.size(); ++i)
      if (i % 3 == 0) b[i] = static_cast<int>(rng() % 4);
    const MetricsReport m = evaluate(LabelVector(b, 4), LabelVector(a, 4));
    CHECK(m.nmi == doctest::Approx(oracle_nmi(b, a)).epsilon(1e-10));
    CHECK(m.ari == doctest::Approx(oracle_ari(b, a)).epsilon(1e-10));
    CHECK(std::abs(m.nmi - evaluate(LabelVector(a, 4), LabelVector(b, 4)).nmi) <= 1e-12);

    std::vector<int> renamed(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) renamed[i] = (b[i] + 1) % 4;
    const MetricsReport r = evaluate(LabelVector(renamed, 4), LabelVector(a, 4));
    CHECK(r.acc == m.acc);
    CHECK(r.nmi == doctest::Approx(m.nmi).epsilon(1e-12));
    CHECK(r.ari == doctest::Approx(m.ari).epsilon(1e-12));
  }
}

TEST_CASE("uniform random labelings have ARI near zero") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const LabelVector a(test::random_labels(500, 10, rng), 10), b(test::random_labels(500, 10, rng), 10);
    CHECK(std::abs(evaluate(a, b).ari) <= 0.05);
  }
}

TEST_CASE("metric edge cases") {
  CHECK_THROWS_KIND(evaluate(LabelVector({0, 1}, 2), LabelVector({0}, 2)), ErrorKind::LengthMismatch);
  const MetricsReport one = evaluate(LabelVector({0}, 1), LabelVector({0}, 1));
  CHECK(one.acc == 1.0);
  CHECK(one.nmi == 1.0);
  CHECK(one.ari == 1.0);
  // differing class counts use the larger square table
  const MetricsReport m = evaluate(LabelVector({0, 0, 1, 2}, 3), LabelVector({0, 0, 1, 1}, 2));
  CHECK(m.acc == doctest::Approx(0.75));
  CHECK(m.to_json().at("nmi_normalization") == "arithmetic");
}
