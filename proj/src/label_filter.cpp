#include "laic/label_filter.hpp"

#include <cmath>

#include "laic/cluster.hpp"
#include "laic/error.hpp"

namespace laic {

namespace {

// agree / k_hat >= tau, decided in integer space so boundaries are exact.
bool passes(int agree, std::size_t k_hat, double tau) {
  const double needed = std::ceil(tau * static_cast<double>(k_hat) - 1e-9);
  return static_cast<double>(agree) >= needed;
}

Selection split(const ConsistencyScores& scores, double tau) {
  Selection s;
  for (std::size_t i = 0; i < scores.agree.size(); ++i)
    (passes(scores.agree[i], scores.k_hat, tau) ? s.selected : s.unselected).push_back(i);
  return s;
}

bool covers_classes(const Selection& s, const LabelVector& labels) {
  std::vector<bool> present(static_cast<std::size_t>(labels.num_classes), false);
  std::vector<bool> chosen(static_cast<std::size_t>(labels.num_classes), false);
  for (int l : labels.values) present[static_cast<std::size_t>(l)] = true;
  for (std::size_t i : s.selected) chosen[static_cast<std::size_t>(labels[i])] = true;
  return present == chosen;
}

}  // namespace

int default_k_hat(int k) { return k > 50 ? 1 : 10; }

kernels::NeighborTable knn_graph(const Matrix& c, std::size_t k_hat) {
  return kernels::omp::knn_cosine(c, k_hat);
}

ConsistencyScores consistency_scores(const LabelVector& labels, const kernels::NeighborTable& neighbors) {
  if (neighbors.k == 0) throw Error(ErrorKind::InvalidArgument, "neighbor table has k = 0");
  if (neighbors.rows() != labels.size())
    throw Error(ErrorKind::LengthMismatch, "neighbor table rows != label count");
  ConsistencyScores out;
  out.k_hat = neighbors.k;
  out.agree.resize(labels.size());
  out.alpha.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int agree = 0;
    for (std::size_t j : neighbors.row(i)) agree += labels[j] == labels[i] ? 1 : 0;
    out.agree[i] = agree;
    out.alpha[i] = static_cast<double>(agree) / static_cast<double>(neighbors.k);
  }
  return out;
}

Selection select_high_quality(const ConsistencyScores& scores, const LabelVector& labels, double tau, bool relax) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in (0, 1]");
  if (scores.agree.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "scores/labels length");
  Selection s = split(scores, tau);
  s.tau_requested = s.tau_effective = tau;
  if (!s.selected.empty()) return s;
  if (!relax) throw Error(ErrorKind::EmptySelection, "no sample reaches tau=" + std::to_string(tau));

  const auto k_hat = static_cast<int>(scores.k_hat);
  const int start = static_cast<int>(std::ceil(tau * k_hat - 1e-9)) - 1;
  const std::size_t need = static_cast<std::size_t>(labels.num_classes);
  for (int step = start; step >= 0; --step) {
    const double t = static_cast<double>(step) / k_hat;
    Selection relaxed = split(scores, t);
    relaxed.tau_requested = tau;
    relaxed.tau_effective = t;
    if (step == 0 || (relaxed.selected.size() >= need && covers_classes(relaxed, labels))) return relaxed;
  }
  return s;  // unreachable: step 0 selects everything
}

PseudoLabelState filter_pseudo_labels(const Matrix& c, const LabelVector& labels, std::size_t k_hat, double tau,
                                      bool relax) {
  if (static_cast<std::size_t>(c.rows()) != labels.size())
    throw Error(ErrorKind::LengthMismatch, "C rows != label count");
  PseudoLabelState state;
  state.labels = labels;
  state.neighbors = knn_graph(c, k_hat);
  state.scores = consistency_scores(labels, state.neighbors);
  state.selection = select_high_quality(state.scores, labels, tau, relax);
  return state;
}

nlohmann::json PseudoLabelState::selection_json() const {
  std::vector<int> chosen_labels;
  chosen_labels.reserve(selection.selected.size());
  for (std::size_t i : selection.selected) chosen_labels.push_back(labels[i]);
  return {{"indices", selection.selected},
          {"labels", chosen_labels},
          {"tau_requested", selection.tau_requested},
          {"tau_effective", selection.tau_effective},
          {"k_hat", scores.k_hat}};
}

FilterGain filter_gain_report(const PseudoLabelState& state, const LabelVector& truth) {
  const MetricsReport full = evaluate(state.labels, truth);
  FilterGain gain;
  gain.acc_before = full.acc;
  const auto& sel = state.selection.selected;
  gain.fraction_selected = static_cast<double>(sel.size()) / static_cast<double>(truth.size());
  if (sel.empty()) return gain;
  std::size_t hits = 0;
  for (std::size_t i : sel)
    hits += full.matching[static_cast<std::size_t>(state.labels[i])] == truth[i] ? 1 : 0;
  gain.acc_after = static_cast<double>(hits) / static_cast<double>(sel.size());
  return gain;
}

}  // namespace laic
