#pragma once

// Continuous per-cluster semantic centers trained under
//   L = L_sup + lambda1 * L_con - lambda2 * L_ent
// with L_sup the generalized cross-entropy on filtered pseudo-labels (strong
// views), L_con the squared distance between strong- and weak-view logit
// vectors on the unfiltered samples, and L_ent the entropy of the batch-mean
// prediction. Centers are unit vectors in the embedding space; logits are
// cos(x, s_k) / T.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "laic/embed_io.hpp"

namespace laic {

enum class ConsistencyOn { Logits, Softmax };
enum class CenterInit {
  /// Common anchor (normalized feature mean) plus a small random spread per
  /// center: every center starts nearly identical and only the losses
  /// separate them.
  Anchor,
  /// Normalized mean of each pseudo-class over the selected samples.
  ClassMean,
};

std::string to_string(ConsistencyOn v);
std::string to_string(CenterInit v);
ConsistencyOn parse_consistency_on(const std::string& s);
CenterInit parse_center_init(const std::string& s);

struct TrainConfig {
  double q = 0.8;
  double lambda1 = 2.0;
  double lambda2 = 0.1;
  int epochs = 20;
  int batch_size = 32;
  double lr0 = 2e-3;
  double momentum = 0.0;
  double temperature = 0.01;
  bool enable_sup = true;
  bool enable_con = true;
  bool enable_ent = true;
  ConsistencyOn consistency_on = ConsistencyOn::Logits;
  CenterInit init = CenterInit::ClassMean;
  /// Anchor init only: norm of the random offset added before normalization.
  double init_spread = 0.5;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on out-of-range values.
  void validate() const;
};

struct SemanticCenters {
  Matrix s;  ///< K x d, unit rows
  double temperature = 0.01;
  std::int64_t step = 0;

  int k() const noexcept { return static_cast<int>(s.rows()); }
};

struct LossBreakdown {
  double sup = 0.0;
  double con = 0.0;
  double ent = 0.0;
  double total = 0.0;
};

/// softmax_k(cos(x, s_k) / T). Throws ZeroVector.
Vector predict_probs(const Vector& x, const SemanticCenters& centers);
/// (cos(x, s_1) / T, ..., cos(x, s_K) / T). Throws ZeroVector.
Vector logit_vector(const Vector& x, const SemanticCenters& centers);

struct LabeledBatch {
  Matrix strong;            ///< one strong view per sample
  std::vector<int> labels;  ///< pseudo-labels
};

struct UnlabeledBatch {
  Matrix strong;
  Matrix weak;
};

struct Batch {
  LabeledBatch labeled;
  UnlabeledBatch unlabeled;
};

/// Mean GCE (1 - p(y|x)^q) / q. Throws EmptyBatch.
double loss_sup(const LabeledBatch& batch, const SemanticCenters& centers, double q);
/// Mean ||P(strong) - P(weak)||^2. Throws EmptyBatch, MissingView.
double loss_con(const UnlabeledBatch& batch, const SemanticCenters& centers,
                ConsistencyOn on = ConsistencyOn::Logits);
/// -sum_k qbar_k log qbar_k with qbar the mean prediction over `strong` rows.
double loss_ent(const Matrix& strong, const SemanticCenters& centers);

struct LossAndGrad {
  LossBreakdown loss;
  Matrix grad;  ///< K x d, d total / d s
};

/// Loss terms for the enabled switches (disabled terms report 0) and the exact
/// gradient with respect to the raw center rows. The entropy batch is the
/// union of the labeled and unlabeled strong views. An empty unlabeled part
/// contributes no consistency term.
LossAndGrad total_loss_and_grad(const Batch& batch, const SemanticCenters& centers, const TrainConfig& config);

struct TraceRow {
  std::int64_t step = 0;
  int epoch = 0;
  LossBreakdown loss;
  double lr = 0.0;
};

struct TrainResult {
  SemanticCenters centers;
  std::vector<TraceRow> trace;
};

/// Learning rate for `epoch` under cosine annealing from lr0 to 0.
double cosine_annealed_lr(double lr0, int epoch, int epochs);

SemanticCenters initial_centers(const ViewBundle& views, const LabelVector& pseudo,
                                const std::vector<std::size_t>& selected, const TrainConfig& config);

/// Mini-batch SGD over D_L (one epoch = one shuffled pass), D_U batches drawn
/// cyclically alongside; each sample uses one uniformly drawn strong (and weak)
/// view per step. Rows are re-normalized after every update.
/// Throws EmptySelection if D_L is empty, DivergenceDetected on a non-finite loss.
TrainResult train_centers(const ViewBundle& views, const LabelVector& pseudo,
                          const std::vector<std::size_t>& selected, const std::vector<std::size_t>& unselected,
                          const TrainConfig& config, const SemanticCenters& init);

/// argmax_k cos(x, s_k), ties to the lowest k.
LabelVector assign(const EmbeddingMatrix& x, const SemanticCenters& centers);
LabelVector assign(const Matrix& x, const SemanticCenters& centers);

void write_loss_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

}  // namespace laic
