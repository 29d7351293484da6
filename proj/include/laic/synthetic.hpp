#pragma once

// Planted-cluster benchmark: K random unit class directions, images are
// direction + isotropic Gaussian noise (re-normalized), the noun corpus holds
// class-aligned nouns (direction + small noise) plus random distractors, and
// strong / weak views perturb each image with smaller noise.
//
// Noise levels are expressed as the expected norm of the perturbation before
// re-normalization (per-coordinate sigma = level / sqrt(d)).

#include <cstdint>
#include <filesystem>
#include <vector>

#include "laic/embed_io.hpp"

namespace laic {

struct SyntheticSpec {
  int k = 5;
  int n_per = 200;
  int d = 32;
  int nouns_per_class = 10;
  int distractors = 50;
  double noise = 0.3;
  double noun_noise = 0.1;
  int strong_views = 4;
  int weak_views = 4;
  double sigma_strong = 0.1;
  double sigma_weak = 0.02;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  EmbeddingMatrix images;
  VocabSet nouns;
  LabelVector truth;
  ViewBundle views;
  Matrix directions;            ///< K x d class directions
  std::vector<int> noun_class;  ///< planted class per noun, -1 for distractors
};

/// Throws BadDims unless d >= k >= 1, n_per >= 1, and the corpus is non-empty.
SyntheticData make_synthetic(const SyntheticSpec& spec);

/// images.emb, nouns.emb + nouns.json, labels.lab, strong.emb, weak.emb.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

/// Relabels the `fraction` of samples with the smallest margin between their
/// own class direction and the runner-up class to that runner-up.
LabelVector boundary_corrupted_labels(const Matrix& x, const Matrix& directions, const LabelVector& truth,
                                      double fraction);

}  // namespace laic
