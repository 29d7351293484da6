#pragma once

// Neighbor-consistency filtering of K-means pseudo-labels in C-space.

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "laic/embed_io.hpp"
#include "laic/kernels.hpp"

namespace laic {

/// 10, or 1 once the cluster count exceeds 50.
int default_k_hat(int k);

/// Exact cosine k-NN over rows of C, self excluded, ties to the lowest index.
/// Throws KHatTooLarge unless 1 <= k_hat < N.
kernels::NeighborTable knn_graph(const Matrix& c, std::size_t k_hat);

struct ConsistencyScores {
  std::vector<int> agree;      ///< neighbors sharing the sample's label
  std::vector<double> alpha;   ///< agree / k_hat
  std::size_t k_hat = 0;
};

ConsistencyScores consistency_scores(const LabelVector& labels, const kernels::NeighborTable& neighbors);

struct Selection {
  std::vector<std::size_t> selected;
  std::vector<std::size_t> unselected;
  double tau_requested = 1.0;
  double tau_effective = 1.0;
  bool relaxed() const noexcept { return tau_effective != tau_requested; }
};

/// D_L = {i : alpha_i >= tau}. If that is empty and `relax` is set, tau drops
/// in steps of 1/k_hat until at least K samples are selected and every
/// non-empty pseudo-class is represented (or everything is selected).
/// Throws InvalidArgument for tau outside (0, 1], EmptySelection when empty
/// and `relax` is false.
Selection select_high_quality(const ConsistencyScores& scores, const LabelVector& labels, double tau,
                              bool relax = true);

struct PseudoLabelState {
  LabelVector labels;
  kernels::NeighborTable neighbors;
  ConsistencyScores scores;
  Selection selection;

  nlohmann::json selection_json() const;
};

PseudoLabelState filter_pseudo_labels(const Matrix& c, const LabelVector& labels, std::size_t k_hat,
                                      double tau, bool relax = true);

struct FilterGain {
  double acc_before = 0.0;
  double acc_after = 0.0;
  double fraction_selected = 0.0;
};

/// Hungarian-matched accuracy of all pseudo-labels and of the selected subset;
/// the matching is computed once on the full set and reused for the subset.
FilterGain filter_gain_report(const PseudoLabelState& state, const LabelVector& truth);

}  // namespace laic
