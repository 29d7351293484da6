#include "laic/vocab_select.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "laic/error.hpp"
#include "laic/kernels.hpp"

namespace laic {

int default_k_tilde(std::size_t n, int k, bool small_classes) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "sample count must be >= 1");
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "cluster count must be >= 2");
  if (small_classes) return 3 * k;
  return static_cast<int>((n + 299) / 300);
}

FineCenters compute_fine_centers(const EmbeddingMatrix& x, int k_tilde, std::uint64_t seed,
                                 const KMeansOptions& options) {
  if (k_tilde < 1 || static_cast<std::size_t>(k_tilde) > x.rows())
    throw Error(ErrorKind::KTooLarge, "k_tilde=" + std::to_string(k_tilde) + " with N=" + std::to_string(x.rows()));
  if (!x.normalized()) throw Error(ErrorKind::InvalidArgument, "image features must be L2-normalized");
  const Matrix data = x.to_f64();
  KMeansResult km = kmeans(data, k_tilde, seed, options);

  FineCenters out;
  out.k_tilde = k_tilde;
  out.assignment = km.labels.values;
  out.centers = Matrix::Zero(k_tilde, data.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k_tilde), 0);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const int r = out.assignment[static_cast<std::size_t>(i)];
    out.centers.row(r) += data.row(i);
    ++counts[static_cast<std::size_t>(r)];
  }
  for (int r = 0; r < k_tilde; ++r) {
    if (counts[static_cast<std::size_t>(r)] == 0)
      throw Error(ErrorKind::InvariantViolation, "fine center " + std::to_string(r) + " is empty after repair");
    out.centers.row(r) /= static_cast<double>(counts[static_cast<std::size_t>(r)]);
  }
  return out;
}

std::vector<int> assign_nouns(const VocabSet& w, const FineCenters& centers) {
  if (w.embeddings().dim() != static_cast<std::size_t>(centers.centers.cols()))
    throw Error(ErrorKind::DimMismatch, "noun dim != center dim");
  return kernels::omp::argmax_cosine(w.embeddings().to_f64(), centers.centers).index;
}

CandidateSelection select_candidates(const VocabSet& w, const FineCenters& centers, int theta) {
  if (theta < 1) throw Error(ErrorKind::InvalidArgument, "theta must be >= 1");
  if (w.embeddings().dim() != static_cast<std::size_t>(centers.centers.cols()))
    throw Error(ErrorKind::DimMismatch, "noun dim != center dim");
  const auto nearest = kernels::omp::argmax_cosine(w.embeddings().to_f64(), centers.centers);

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(centers.k_tilde));
  for (std::size_t i = 0; i < nearest.index.size(); ++i)
    members[static_cast<std::size_t>(nearest.index[i])].push_back(i);

  std::vector<std::vector<std::size_t>> top(members.size());
  for (std::size_t r = 0; r < members.size(); ++r) {
    auto& m = members[r];
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(theta), m.size());
    std::partial_sort(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(keep), m.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (nearest.score[a] != nearest.score[b]) return nearest.score[a] > nearest.score[b];
                        return a < b;
                      });
    top[r].assign(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(keep));
  }

  std::vector<std::size_t> union_indices;
  std::set<std::size_t> seen;
  for (const auto& list : top)
    for (std::size_t i : list)
      if (seen.insert(i).second) union_indices.push_back(i);
  if (union_indices.empty()) throw Error(ErrorKind::EmptyCandidateSet, "no center received any noun");

  return CandidateSelection{nearest.index, nearest.score, std::move(top), union_indices, w.subset(union_indices)};
}

nlohmann::json CandidateSelection::provenance_json(const VocabSet& corpus) const {
  nlohmann::json j;
  j["names"] = candidates.names();
  j["corpus_indices"] = union_indices;
  nlohmann::json per_center = nlohmann::json::array();
  for (std::size_t r = 0; r < per_center_top.size(); ++r) {
    nlohmann::json entry;
    entry["center"] = r;
    nlohmann::json nouns = nlohmann::json::array();
    for (std::size_t i : per_center_top[r])
      nouns.push_back({{"name", corpus.names()[i]}, {"corpus_index", i}, {"cosine", noun_cosine[i]}});
    entry["nouns"] = std::move(nouns);
    per_center.push_back(std::move(entry));
  }
  j["per_center"] = std::move(per_center);
  return j;
}

}  // namespace laic
