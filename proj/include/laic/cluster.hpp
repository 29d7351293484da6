#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "laic/embed_io.hpp"

namespace laic {

struct KMeansOptions {
  int max_iter = 300;
  /// Convergence threshold on the summed squared center shift.
  double tol = 1e-6;
  /// Seeded restarts; the run with the lowest inertia wins.
  int restarts = 10;
};

struct KMeansResult {
  LabelVector labels;
  Matrix centers;
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after every assignment step of the winning run.
  std::vector<double> inertia_trace;
};

/// k-means++ seeding, Lloyd iterations, empty clusters reseeded to the point
/// farthest from its current center. Throws KTooLarge if k > rows or if the
/// data has fewer than k distinct points.
KMeansResult kmeans(const Matrix& data, int k, std::uint64_t seed, const KMeansOptions& options = {});

using CountMatrix = std::vector<std::vector<std::int64_t>>;

struct Matching {
  /// permutation[row] = column assigned to that row.
  std::vector<int> permutation;
  std::int64_t matched = 0;
};

/// Maximum-trace column permutation of a square non-negative count matrix
/// (Hungarian algorithm, O(n^3)). Throws NonSquare.
Matching hungarian_match(const CountMatrix& contingency);

/// size x size table, rows indexed by predicted label, columns by true label.
CountMatrix contingency_table(const LabelVector& pred, const LabelVector& truth, int size);

struct MetricsReport {
  double nmi = 0.0;
  double acc = 0.0;
  double ari = 0.0;
  /// matching[predicted class] = true class.
  std::vector<int> matching;

  nlohmann::json to_json() const;
};

/// NMI normalization used by `evaluate`, surfaced in reports.
inline constexpr const char* kNmiNormalization = "arithmetic";

/// NMI (arithmetic-mean normalization), Hungarian-matched ACC and ARI from one
/// contingency table. Throws LengthMismatch.
MetricsReport evaluate(const LabelVector& pred, const LabelVector& truth);

}  // namespace laic
