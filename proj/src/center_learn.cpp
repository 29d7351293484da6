#include "laic/center_learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "laic/error.hpp"
#include "laic/kernels.hpp"

namespace laic {

namespace {

using Index = Eigen::Index;

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Index k = 0; k < logits.cols(); ++k) z += (p(i, k) = std::exp(logits(i, k) - m));
    p.row(i) /= z;
  }
  return p;
}

// Pulls a gradient w.r.t. probabilities back to logits through the softmax Jacobian.
Matrix softmax_backward(const Matrix& p, const Matrix& dp) {
  Matrix dl(p.rows(), p.cols());
  for (Index i = 0; i < p.rows(); ++i) {
    const double inner = p.row(i).dot(dp.row(i));
    for (Index k = 0; k < p.cols(); ++k) dl(i, k) = p(i, k) * (dp(i, k) - inner);
  }
  return dl;
}

void check_labels(const LabeledBatch& b, int k) {
  if (b.strong.rows() == 0) throw Error(ErrorKind::EmptyBatch, "labeled batch is empty");
  if (static_cast<std::size_t>(b.strong.rows()) != b.labels.size())
    throw Error(ErrorKind::LengthMismatch, "labeled batch rows != labels");
  for (int y : b.labels)
    if (y < 0 || y >= k) throw Error(ErrorKind::InvalidArgument, "pseudo-label out of range");
}

void check_unlabeled(const UnlabeledBatch& b) {
  if (b.strong.rows() == 0 && b.weak.rows() == 0) throw Error(ErrorKind::EmptyBatch, "unlabeled batch is empty");
  if (b.strong.rows() != b.weak.rows() || b.strong.cols() != b.weak.cols())
    throw Error(ErrorKind::MissingView, "every unlabeled sample needs one strong and one weak view");
}

struct SupTerm {
  double value = 0.0;
  Matrix dlogits;
};

SupTerm sup_term(const LabeledBatch& b, const Matrix& logits, double q) {
  const Matrix p = softmax_rows(logits);
  const auto n = static_cast<double>(b.strong.rows());
  SupTerm t{0.0, Matrix::Zero(p.rows(), p.cols())};
  for (Index i = 0; i < p.rows(); ++i) {
    const auto y = static_cast<Index>(b.labels[static_cast<std::size_t>(i)]);
    const double py_q = std::pow(p(i, y), q);
    t.value += (1.0 - py_q) / q;
    // d/dl_j (1 - p_y^q)/q = -p_y^q (delta_jy - p_j)
    for (Index j = 0; j < p.cols(); ++j) t.dlogits(i, j) = -py_q * ((j == y ? 1.0 : 0.0) - p(i, j)) / n;
  }
  t.value /= n;
  return t;
}

struct ConTerm {
  double value = 0.0;
  Matrix d_strong;
  Matrix d_weak;
};

ConTerm con_term(const Matrix& ls, const Matrix& lw, ConsistencyOn on) {
  const auto n = static_cast<double>(ls.rows());
  ConTerm t;
  if (on == ConsistencyOn::Logits) {
    const Matrix diff = ls - lw;
    t.value = diff.squaredNorm() / n;
    t.d_strong = 2.0 * diff / n;
    t.d_weak = -t.d_strong;
  } else {
    const Matrix ps = softmax_rows(ls);
    const Matrix pw = softmax_rows(lw);
    const Matrix diff = ps - pw;
    t.value = diff.squaredNorm() / n;
    const Matrix dp = 2.0 * diff / n;
    t.d_strong = softmax_backward(ps, dp);
    t.d_weak = softmax_backward(pw, -dp);
  }
  return t;
}

struct EntTerm {
  double value = 0.0;
  Matrix dlogits;  ///< d H / d logits
};

EntTerm ent_term(const Matrix& logits) {
  const Matrix p = softmax_rows(logits);
  const auto n = static_cast<double>(p.rows());
  const Eigen::RowVectorXd qbar = p.colwise().sum() / n;
  EntTerm t;
  Matrix dp(p.rows(), p.cols());
  for (Index k = 0; k < p.cols(); ++k) {
    const double qk = qbar(k);
    if (qk > 0.0) t.value -= qk * std::log(qk);
    const double g = qk > 0.0 ? -(std::log(qk) + 1.0) / n : 0.0;
    dp.col(k).setConstant(g);
  }
  t.dlogits = softmax_backward(p, dp);
  return t;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

void normalize_centers(Matrix& s) {
  for (Index k = 0; k < s.rows(); ++k) {
    const double n = s.row(k).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw Error(ErrorKind::DivergenceDetected, "center " + std::to_string(k) + " lost its norm");
    s.row(k) /= n;
  }
}

Eigen::RowVectorXd random_unit(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::RowVectorXd v(d);
  do {
    for (Index j = 0; j < d; ++j) v(j) = g(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

}  // namespace

std::string to_string(ConsistencyOn v) { return v == ConsistencyOn::Logits ? "logits" : "softmax"; }
std::string to_string(CenterInit v) { return v == CenterInit::Anchor ? "anchor" : "class_mean"; }

ConsistencyOn parse_consistency_on(const std::string& s) {
  if (s == "logits") return ConsistencyOn::Logits;
  if (s == "softmax") return ConsistencyOn::Softmax;
  throw Error(ErrorKind::Config, "consistency_on must be 'logits' or 'softmax', got '" + s + "'");
}

CenterInit parse_center_init(const std::string& s) {
  if (s == "anchor") return CenterInit::Anchor;
  if (s == "class_mean") return CenterInit::ClassMean;
  throw Error(ErrorKind::Config, "center_init must be 'anchor' or 'class_mean', got '" + s + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
  if (!(q > 0.0 && q <= 1.0)) fail("q must lie in (0, 1]");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) fail("loss weights must be >= 0");
  if (!(lr0 > 0.0)) fail("lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(init_spread >= 0.0)) fail("init_spread must be >= 0");
}

Vector logit_vector(const Vector& x, const SemanticCenters& centers) {
  const Matrix row = x.transpose();
  return kernels::serial::cosine_logits(row, centers.s, centers.temperature).row(0).transpose();
}

Vector predict_probs(const Vector& x, const SemanticCenters& centers) {
  const Matrix l = logit_vector(x, centers).transpose();
  return softmax_rows(l).row(0).transpose();
}

double loss_sup(const LabeledBatch& batch, const SemanticCenters& centers, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw Error(ErrorKind::InvalidArgument, "q must lie in (0, 1]");
  check_labels(batch, centers.k());
  return sup_term(batch, kernels::omp::cosine_logits(batch.strong, centers.s, centers.temperature), q).value;
}

double loss_con(const UnlabeledBatch& batch, const SemanticCenters& centers, ConsistencyOn on) {
  check_unlabeled(batch);
  if (batch.strong.rows() == 0) throw Error(ErrorKind::EmptyBatch, "unlabeled batch is empty");
  const Matrix ls = kernels::omp::cosine_logits(batch.strong, centers.s, centers.temperature);
  const Matrix lw = kernels::omp::cosine_logits(batch.weak, centers.s, centers.temperature);
  return con_term(ls, lw, on).value;
}

double loss_ent(const Matrix& strong, const SemanticCenters& centers) {
  if (strong.rows() == 0) throw Error(ErrorKind::EmptyBatch, "entropy batch is empty");
  return ent_term(kernels::omp::cosine_logits(strong, centers.s, centers.temperature)).value;
}

LossAndGrad total_loss_and_grad(const Batch& batch, const SemanticCenters& centers, const TrainConfig& config) {
  const double T = centers.temperature;
  const auto K = centers.s.cols() > 0 ? centers.s.rows() : 0;
  const auto nl = batch.labeled.strong.rows();
  const auto nu = batch.unlabeled.strong.rows();
  if (config.enable_sup) check_labels(batch.labeled, centers.k());
  if (nu > 0 || batch.unlabeled.weak.rows() > 0) check_unlabeled(batch.unlabeled);

  // Rows: [labeled strong | unlabeled strong | unlabeled weak]
  Matrix x = vstack(vstack(batch.labeled.strong, batch.unlabeled.strong), batch.unlabeled.weak);
  if (x.rows() == 0) throw Error(ErrorKind::EmptyBatch, "batch is empty");
  const Matrix logits = kernels::omp::cosine_logits(x, centers.s, T);
  Matrix dlogits = Matrix::Zero(x.rows(), K);

  LossAndGrad out;
  if (config.enable_sup && nl > 0) {
    const SupTerm t = sup_term(batch.labeled, logits.topRows(nl), config.q);
    out.loss.sup = t.value;
    dlogits.topRows(nl) += t.dlogits;
  }
  if (config.enable_con && nu > 0) {
    const ConTerm t = con_term(logits.middleRows(nl, nu), logits.bottomRows(nu), config.consistency_on);
    out.loss.con = t.value;
    dlogits.middleRows(nl, nu) += config.lambda1 * t.d_strong;
    dlogits.bottomRows(nu) += config.lambda1 * t.d_weak;
  }
  if (config.enable_ent && nl + nu > 0) {
    const EntTerm t = ent_term(logits.topRows(nl + nu));
    out.loss.ent = t.value;
    dlogits.topRows(nl + nu) -= config.lambda2 * t.dlogits;
  }
  out.loss.total = out.loss.sup + config.lambda1 * out.loss.con - config.lambda2 * out.loss.ent;
  out.grad = kernels::omp::accumulate_center_grad(x, dlogits, centers.s, T);
  return out;
}

double cosine_annealed_lr(double lr0, int epoch, int epochs) {
  if (epochs <= 0) return lr0;
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

SemanticCenters initial_centers(const ViewBundle& views, const LabelVector& pseudo,
                                const std::vector<std::size_t>& selected, const TrainConfig& config) {
  const int K = pseudo.num_classes;
  const Matrix base = views.base.to_f64();
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  SemanticCenters c;
  c.temperature = config.temperature;
  c.s = Matrix::Zero(K, base.cols());

  if (config.init == CenterInit::Anchor) {
    Eigen::RowVectorXd anchor = base.colwise().sum();
    if (anchor.norm() == 0.0) anchor = random_unit(base.cols(), rng);
    anchor /= anchor.norm();
    for (int k = 0; k < K; ++k) c.s.row(k) = anchor + config.init_spread * random_unit(base.cols(), rng);
  } else {
    std::vector<int> count(static_cast<std::size_t>(K), 0);
    for (std::size_t i : selected) {
      c.s.row(pseudo[i]) += base.row(static_cast<Index>(i));
      ++count[static_cast<std::size_t>(pseudo[i])];
    }
    // classes absent from D_L fall back to all their members, then to a random direction
    for (int k = 0; k < K; ++k) {
      if (count[static_cast<std::size_t>(k)] > 0) continue;
      for (std::size_t i = 0; i < pseudo.size(); ++i)
        if (pseudo[i] == k) c.s.row(k) += base.row(static_cast<Index>(i));
      if (c.s.row(k).norm() == 0.0) c.s.row(k) = random_unit(base.cols(), rng);
    }
  }
  normalize_centers(c.s);
  return c;
}

TrainResult train_centers(const ViewBundle& views, const LabelVector& pseudo, const std::vector<std::size_t>& selected,
                          const std::vector<std::size_t>& unselected, const TrainConfig& config,
                          const SemanticCenters& init) {
  config.validate();
  views.validate(config.enable_con && !unselected.empty());
  if (selected.empty()) throw Error(ErrorKind::EmptySelection, "D_L is empty");
  if (pseudo.size() != views.samples()) throw Error(ErrorKind::LengthMismatch, "pseudo-labels vs samples");
  if (init.s.cols() != static_cast<Index>(views.dim()) || init.k() != pseudo.num_classes)
    throw Error(ErrorKind::DimMismatch, "initial centers do not match data / K");

  TrainResult result{init, {}};
  SemanticCenters& c = result.centers;
  c.temperature = config.temperature;

  // Missing view groups fall back to the base features.
  std::vector<Matrix> strong, weak;
  if (views.strong.empty()) strong.push_back(views.base.to_f64());
  for (const auto& v : views.strong) strong.push_back(v.to_f64());
  if (views.weak.empty()) weak.push_back(views.base.to_f64());
  for (const auto& v : views.weak) weak.push_back(v.to_f64());
  const bool use_unlabeled = !unselected.empty() && (config.enable_con || config.enable_ent);

  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x7a11u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick_strong(0, strong.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_weak(0, weak.size() - 1);

  std::vector<std::size_t> dl = selected;
  std::vector<std::size_t> du = unselected;
  std::size_t du_cursor = du.size();  // forces a shuffle on first use
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const Index d = static_cast<Index>(views.dim());
  Matrix velocity = Matrix::Zero(c.s.rows(), c.s.cols());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_annealed_lr(config.lr0, epoch, config.epochs);
    std::shuffle(dl.begin(), dl.end(), rng);
    for (std::size_t start = 0; start < dl.size(); start += bs) {
      const std::size_t nl = std::min(bs, dl.size() - start);
      Batch batch;
      batch.labeled.strong.resize(static_cast<Index>(nl), d);
      batch.labeled.labels.resize(nl);
      for (std::size_t r = 0; r < nl; ++r) {
        const std::size_t i = dl[start + r];
        batch.labeled.strong.row(static_cast<Index>(r)) = strong[pick_strong(rng)].row(static_cast<Index>(i));
        batch.labeled.labels[r] = pseudo[i];
      }
      if (use_unlabeled) {
        const std::size_t nu = std::min(bs, du.size());
        batch.unlabeled.strong.resize(static_cast<Index>(nu), d);
        batch.unlabeled.weak.resize(static_cast<Index>(nu), d);
        for (std::size_t r = 0; r < nu; ++r) {
          if (du_cursor == du.size()) {
            std::shuffle(du.begin(), du.end(), rng);
            du_cursor = 0;
          }
          const std::size_t i = du[du_cursor++];
          batch.unlabeled.strong.row(static_cast<Index>(r)) = strong[pick_strong(rng)].row(static_cast<Index>(i));
          batch.unlabeled.weak.row(static_cast<Index>(r)) = weak[pick_weak(rng)].row(static_cast<Index>(i));
        }
      }

      const LossAndGrad lg = total_loss_and_grad(batch, c, config);
      if (!std::isfinite(lg.loss.total) || !lg.grad.allFinite())
        throw Error(ErrorKind::DivergenceDetected, "non-finite loss at step " + std::to_string(c.step));
      velocity = config.momentum * velocity + lg.grad;
      c.s -= lr * velocity;
      normalize_centers(c.s);
      ++c.step;
      result.trace.push_back({c.step, epoch, lg.loss, lr});
    }
  }
  return result;
}

LabelVector assign(const Matrix& x, const SemanticCenters& centers) {
  if (x.cols() != centers.s.cols()) throw Error(ErrorKind::DimMismatch, "feature dim != center dim");
  return LabelVector(kernels::omp::argmax_cosine(x, centers.s).index, centers.k());
}

LabelVector assign(const EmbeddingMatrix& x, const SemanticCenters& centers) { return assign(x.to_f64(), centers); }

void write_loss_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out.precision(17);
  out << "step,sup,con,ent,total,lr\n";
  for (const auto& r : trace)
    out << r.step << ',' << r.loss.sup << ',' << r.loss.con << ',' << r.loss.ent << ',' << r.loss.total << ','
        << r.lr << '\n';
}

}  // namespace laic
