#include "laic/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "laic/error.hpp"

namespace laic {

namespace {

using Index = Eigen::Index;

Eigen::RowVectorXd gaussian(Index d, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  Eigen::RowVectorXd v(d);
  for (Index j = 0; j < d; ++j) v(j) = g(rng);
  return v;
}

Eigen::RowVectorXd unit(const Eigen::RowVectorXd& v) {
  const double n = v.norm();
  if (n == 0.0) throw Error(ErrorKind::ZeroVector, "degenerate synthetic vector");
  return v / n;
}

EmbeddingMatrix perturbed(const Matrix& base, double level, std::mt19937_64& rng) {
  const double sigma = level / std::sqrt(static_cast<double>(base.cols()));
  Matrix out(base.rows(), base.cols());
  for (Index i = 0; i < base.rows(); ++i) out.row(i) = unit(base.row(i) + gaussian(base.cols(), sigma, rng));
  return EmbeddingMatrix::from_f64(out, true);
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.k < 1 || spec.d < spec.k || spec.n_per < 1)
    throw Error(ErrorKind::BadDims, "need d >= k >= 1 and n_per >= 1");
  if (spec.nouns_per_class < 0 || spec.distractors < 0 || spec.nouns_per_class * spec.k + spec.distractors == 0)
    throw Error(ErrorKind::BadDims, "noun corpus would be empty");
  if (spec.strong_views < 0 || spec.weak_views < 0) throw Error(ErrorKind::BadDims, "negative view count");
  if (spec.noise < 0.0 || spec.noun_noise < 0.0 || spec.sigma_strong < 0.0 || spec.sigma_weak < 0.0)
    throw Error(ErrorKind::BadDims, "noise levels must be >= 0");

  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0xda7au};
  std::mt19937_64 rng(seq);
  const Index d = spec.d;
  const double per_coord = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix directions(spec.k, d);
  for (int c = 0; c < spec.k; ++c) directions.row(c) = unit(gaussian(d, 1.0, rng));

  const Index n = static_cast<Index>(spec.k) * spec.n_per;
  Matrix images(n, d);
  std::vector<int> truth(static_cast<std::size_t>(n));
  for (int c = 0; c < spec.k; ++c)
    for (int j = 0; j < spec.n_per; ++j) {
      const Index i = static_cast<Index>(c) * spec.n_per + j;
      images.row(i) = unit(directions.row(c) + gaussian(d, spec.noise * per_coord, rng));
      truth[static_cast<std::size_t>(i)] = c;
    }

  const Index l = static_cast<Index>(spec.k) * spec.nouns_per_class + spec.distractors;
  Matrix nouns(l, d);
  std::vector<std::string> names;
  std::vector<int> noun_class;
  Index row = 0;
  for (int c = 0; c < spec.k; ++c)
    for (int j = 0; j < spec.nouns_per_class; ++j, ++row) {
      nouns.row(row) = unit(directions.row(c) + gaussian(d, spec.noun_noise * per_coord, rng));
      names.push_back("class" + std::to_string(c) + "_noun" + std::to_string(j));
      noun_class.push_back(c);
    }
  for (int j = 0; j < spec.distractors; ++j, ++row) {
    nouns.row(row) = unit(gaussian(d, 1.0, rng));
    names.push_back("distractor" + std::to_string(j));
    noun_class.push_back(-1);
  }

  EmbeddingMatrix image_emb = EmbeddingMatrix::from_f64(images, true);
  // Views perturb the stored (float) images so they stay consistent with them.
  const Matrix stored = image_emb.to_f64();
  std::vector<EmbeddingMatrix> strong, weak;
  for (int v = 0; v < spec.strong_views; ++v) strong.push_back(perturbed(stored, spec.sigma_strong, rng));
  for (int v = 0; v < spec.weak_views; ++v) weak.push_back(perturbed(stored, spec.sigma_weak, rng));

  SyntheticData out{image_emb,
                    VocabSet(std::move(names), EmbeddingMatrix::from_f64(nouns, true)),
                    LabelVector(std::move(truth), spec.k),
                    ViewBundle{image_emb, std::move(strong), std::move(weak)},
                    directions,
                    std::move(noun_class)};
  return out;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_embedding(data.images, dir / "images.emb");
  write_vocab(data.nouns, dir / "nouns.emb", "synthetic");
  write_labels(data.truth, dir / "labels.lab");
  if (!data.views.strong.empty()) write_embedding(stack_blocks(data.views.strong), dir / "strong.emb");
  if (!data.views.weak.empty()) write_embedding(stack_blocks(data.views.weak), dir / "weak.emb");
}

LabelVector boundary_corrupted_labels(const Matrix& x, const Matrix& directions, const LabelVector& truth,
                                      double fraction) {
  if (static_cast<std::size_t>(x.rows()) != truth.size()) throw Error(ErrorKind::LengthMismatch, "x vs truth");
  if (directions.rows() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two classes");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fraction in [0, 1]");
  const Matrix sim = x * directions.transpose();
  std::vector<double> margin(truth.size());
  std::vector<int> runner_up(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Index own = truth[i];
    double best = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < directions.rows(); ++c)
      if (c != own && sim(static_cast<Index>(i), c) > best) {
        best = sim(static_cast<Index>(i), c);
        runner_up[i] = static_cast<int>(c);
      }
    margin[i] = sim(static_cast<Index>(i), own) - best;
  }
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return margin[a] < margin[b]; });
  const auto flips = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(truth.size())));
  std::vector<int> out = truth.values;
  for (std::size_t r = 0; r < flips; ++r) out[order[r]] = runner_up[order[r]];
  return LabelVector(std::move(out), truth.num_classes);
}

}  // namespace laic
