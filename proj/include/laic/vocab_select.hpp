#pragma once

// Dataset-specific candidate nouns: fine-grained image centers route every
// corpus noun to its nearest center, and each center keeps its top-theta nouns.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "laic/cluster.hpp"
#include "laic/embed_io.hpp"

namespace laic {

/// ceil(n / 300), or 3k when classes are known to be small.
int default_k_tilde(std::size_t n, int k, bool small_classes);

struct FineCenters {
  Matrix centers;               ///< k_tilde x d, each row the mean of its partition
  std::vector<int> assignment;  ///< per-image center index
  int k_tilde = 0;
};

/// K-means on the (normalized) image features; centers are recomputed as exact
/// partition means. Throws KTooLarge if k_tilde > N.
FineCenters compute_fine_centers(const EmbeddingMatrix& x, int k_tilde, std::uint64_t seed,
                                 const KMeansOptions& options = {});

/// Index of the highest-cosine center for every noun (ties: lowest index).
std::vector<int> assign_nouns(const VocabSet& w, const FineCenters& centers);

struct CandidateSelection {
  std::vector<int> noun_assignment;
  /// Cosine of each noun to its assigned center.
  std::vector<double> noun_cosine;
  /// Per center, up to theta noun indices into W, best first.
  std::vector<std::vector<std::size_t>> per_center_top;
  /// Indices into W forming U, in first-occurrence order.
  std::vector<std::size_t> union_indices;
  VocabSet candidates;

  /// Sidecar describing which center contributed each candidate.
  nlohmann::json provenance_json(const VocabSet& corpus) const;
};

/// Throws InvalidArgument for theta < 1, EmptyCandidateSet if no center
/// received any noun.
CandidateSelection select_candidates(const VocabSet& w, const FineCenters& centers, int theta);

}  // namespace laic
