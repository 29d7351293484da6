#include "laic/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "laic/error.hpp"
#include "laic/kernels.hpp"

namespace laic {

namespace {

using Index = Eigen::Index;

Matrix plus_plus_init(const Matrix& data, int k, std::mt19937_64& rng) {
  const Index n = data.rows();
  Matrix centers(k, data.cols());
  std::uniform_int_distribution<Index> pick(0, n - 1);
  centers.row(0) = data.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double d = (data.row(i) - centers.row(c - 1)).squaredNorm();
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], d);
      total += d2[static_cast<std::size_t>(i)];
    }
    Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= d2[static_cast<std::size_t>(chosen)];
        if (target <= 0.0 && d2[static_cast<std::size_t>(chosen)] > 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = data.row(chosen);
  }
  return centers;
}

// Moves every empty cluster's center onto the point farthest from its own
// center. Returns false if some cluster could not be repaired (all remaining
// points sit exactly on their centers).
bool reseed_empty(const Matrix& data, Matrix& centers, const kernels::Nearest& assign,
                  const std::vector<std::int64_t>& counts) {
  std::vector<double> dist = assign.score;
  bool repaired_all = true;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) continue;
    const auto far = std::max_element(dist.begin(), dist.end());
    if (*far <= 0.0) {
      repaired_all = false;
      continue;
    }
    const auto idx = static_cast<Index>(far - dist.begin());
    centers.row(static_cast<Index>(c)) = data.row(idx);
    *far = 0.0;
  }
  return repaired_all;
}

std::vector<std::int64_t> cluster_counts(const kernels::Nearest& assign, int k) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
  for (int l : assign.index) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

KMeansResult lloyd(const Matrix& data, int k, std::mt19937_64& rng, const KMeansOptions& opt) {
  Matrix centers = plus_plus_init(data, k, rng);
  KMeansResult result;
  kernels::Nearest assign;
  int iter = 0;
  for (iter = 1; iter <= opt.max_iter; ++iter) {
    assign = kernels::omp::nearest_sq_euclidean(data, centers);
    double inertia = 0.0;
    for (double d : assign.score) inertia += d;
    result.inertia_trace.push_back(inertia);

    const auto counts = cluster_counts(assign, k);
    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) {
      if (!reseed_empty(data, centers, assign, counts))
        throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " exceeds the number of distinct points");
      continue;
    }

    Matrix updated = Matrix::Zero(k, data.cols());
    for (Index i = 0; i < data.rows(); ++i) updated.row(assign.index[static_cast<std::size_t>(i)]) += data.row(i);
    for (int c = 0; c < k; ++c) updated.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    const double shift = (updated - centers).squaredNorm();
    centers = std::move(updated);
    if (shift < opt.tol) break;
  }
  // Final assignment against the final centers keeps labels and centers consistent.
  assign = kernels::omp::nearest_sq_euclidean(data, centers);
  for (int repair = 0; repair < k; ++repair) {
    const auto counts = cluster_counts(assign, k);
    if (std::find(counts.begin(), counts.end(), 0) == counts.end()) break;
    if (!reseed_empty(data, centers, assign, counts))
      throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " exceeds the number of distinct points");
    assign = kernels::omp::nearest_sq_euclidean(data, centers);
  }
  double inertia = 0.0;
  for (double d : assign.score) inertia += d;
  result.inertia_trace.push_back(inertia);
  result.inertia = inertia;
  result.iterations = std::min(iter, opt.max_iter);
  result.centers = std::move(centers);
  result.labels = LabelVector(std::move(assign.index), k);
  return result;
}

double entropy_of(const std::vector<std::int64_t>& counts, double n) {
  double h = 0.0;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

KMeansResult kmeans(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1 || k > data.rows())
    throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " with " + std::to_string(data.rows()) + " rows");
  if (options.max_iter < 1) throw Error(ErrorKind::InvalidArgument, "max_iter must be >= 1");
  const int restarts = std::max(1, options.restarts);
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    KMeansResult run = lloyd(data, k, rng, options);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return best;
}

Matching hungarian_match(const CountMatrix& contingency) {
  const std::size_t n = contingency.size();
  for (const auto& row : contingency)
    if (row.size() != n) throw Error(ErrorKind::NonSquare, "contingency table must be square");
  Matching out;
  if (n == 0) return out;

  std::int64_t maxv = 0;
  for (const auto& row : contingency)
    for (auto v : row) {
      if (v < 0) throw Error(ErrorKind::InvalidArgument, "negative count in contingency table");
      maxv = std::max(maxv, v);
    }

  // Shortest augmenting path formulation on cost = max - count, 1-based.
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> match_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match_col[0] = row;
    std::size_t col0 = 0;
    std::vector<std::int64_t> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r0 = match_col[col0];
      std::int64_t delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const std::int64_t cost = maxv - contingency[r0 - 1][col - 1];
        const std::int64_t cur = cost - u[r0] - v[col];
        if (cur < minv[col]) {
          minv[col] = cur;
          way[col] = col0;
        }
        if (minv[col] < delta) {
          delta = minv[col];
          col1 = col;
        }
      }
      for (std::size_t col = 0; col <= n; ++col) {
        if (used[col]) {
          u[match_col[col]] += delta;
          v[col] -= delta;
        } else {
          minv[col] -= delta;
        }
      }
      col0 = col1;
    } while (match_col[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match_col[col0] = match_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  out.permutation.assign(n, -1);
  for (std::size_t col = 1; col <= n; ++col) out.permutation[match_col[col] - 1] = static_cast<int>(col - 1);
  for (std::size_t row = 0; row < n; ++row)
    out.matched += contingency[row][static_cast<std::size_t>(out.permutation[row])];
  return out;
}

CountMatrix contingency_table(const LabelVector& pred, const LabelVector& truth, int size) {
  if (pred.size() != truth.size())
    throw Error(ErrorKind::LengthMismatch, "prediction has " + std::to_string(pred.size()) +
                                               " labels, truth has " + std::to_string(truth.size()));
  CountMatrix table(static_cast<std::size_t>(size), std::vector<std::int64_t>(static_cast<std::size_t>(size), 0));
  for (std::size_t i = 0; i < pred.size(); ++i)
    ++table[static_cast<std::size_t>(pred[i])][static_cast<std::size_t>(truth[i])];
  return table;
}

MetricsReport evaluate(const LabelVector& pred, const LabelVector& truth) {
  if (pred.size() != truth.size())
    throw Error(ErrorKind::LengthMismatch, "prediction has " + std::to_string(pred.size()) +
                                               " labels, truth has " + std::to_string(truth.size()));
  if (pred.size() == 0) throw Error(ErrorKind::InvalidArgument, "cannot evaluate empty labelings");
  const int size = std::max(pred.num_classes, truth.num_classes);
  const CountMatrix table = contingency_table(pred, truth, size);
  const double n = static_cast<double>(pred.size());

  std::vector<std::int64_t> row_sum(static_cast<std::size_t>(size), 0), col_sum(static_cast<std::size_t>(size), 0);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      row_sum[static_cast<std::size_t>(r)] += table[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      col_sum[static_cast<std::size_t>(c)] += table[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }

  MetricsReport report;

  // NMI
  double mi = 0.0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const auto nij = table[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (nij == 0) continue;
      const double pij = static_cast<double>(nij) / n;
      mi += pij * std::log(static_cast<double>(nij) * n /
                           (static_cast<double>(row_sum[static_cast<std::size_t>(r)]) *
                            static_cast<double>(col_sum[static_cast<std::size_t>(c)])));
    }
  const double h_pred = entropy_of(row_sum, n);
  const double h_true = entropy_of(col_sum, n);
  const double denom = 0.5 * (h_pred + h_true);
  report.nmi = denom > 0.0 ? std::clamp(mi / denom, 0.0, 1.0) : 1.0;

  // ACC
  const Matching m = hungarian_match(table);
  report.acc = static_cast<double>(m.matched) / n;
  report.matching = m.permutation;

  // ARI
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      index += comb2(static_cast<double>(table[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
  for (auto a : row_sum) sum_a += comb2(static_cast<double>(a));
  for (auto b : col_sum) sum_b += comb2(static_cast<double>(b));
  const double pairs = comb2(n);
  const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  report.ari = (max_index - expected) != 0.0 ? (index - expected) / (max_index - expected) : 1.0;
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  return {{"nmi", nmi}, {"acc", acc}, {"ari", ari}, {"matching", matching}, {"nmi_normalization", kNmiNormalization}};
}

}  // namespace laic
