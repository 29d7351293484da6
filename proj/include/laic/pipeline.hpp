#pragma once

// End-to-end orchestration. Every stage reads its inputs from the previous
// stage's directory under `out/` and writes its own directory plus a
// manifest.json of SHA-256 digests, so any stage can be rerun in isolation.
//
//   vocab/   candidates.emb (+ .json), provenance.json, fine_centers.emb8
//   repr/    c.emb8, c.emb, heatmap.png (when labels are known)
//   cluster/ pseudo.lab (K-means on C), kmeans_x.lab (K-means on X)
//   filter/  selection.json
//   train/   centers.emb8, centers.emb, loss_trace.csv
//   assign/  final.lab
//   eval/    report.json

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "laic/center_learn.hpp"
#include "laic/embed_io.hpp"

namespace laic {

struct PipelineConfig {
  std::filesystem::path images;
  std::filesystem::path nouns;
  std::filesystem::path strong;  ///< optional stacked views
  std::filesystem::path weak;    ///< optional stacked views
  std::filesystem::path labels;  ///< optional ground truth, enables metrics
  std::filesystem::path out;

  int k = 0;
  int theta = 2;
  double gamma = 5.0;
  int k_hat = 0;    ///< 0 = default for k
  double tau = 1.0;
  bool relax_tau = true;
  bool small_classes = false;
  int k_tilde = 0;  ///< 0 = derived from N and small_classes
  int kmeans_restarts = 10;
  std::uint64_t seed = 0;
  TrainConfig train;

  /// Throws Error(Config) for K < 2, missing files, or bad hyperparameters.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected with Error(Config).
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Reads a JSON config and applies the LAIC_SEED environment override.
PipelineConfig load_config(const std::filesystem::path& path);
void apply_env_overrides(PipelineConfig& config);

struct NounMatch {
  int center = 0;
  std::size_t noun = 0;
  std::string name;
  double cosine = 0.0;
};

/// Highest-cosine candidate noun per center, ties to the lowest noun index.
std::vector<NounMatch> nearest_noun_report(const SemanticCenters& centers, const VocabSet& nouns);

/// Held for the lifetime of a run; a second process on the same output
/// directory fails with IoFailure.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& out_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  int fd_ = -1;
};

std::string sha256_file(const std::filesystem::path& path);
/// Writes `<dir>/manifest.json` listing the digest of every other regular file.
void write_manifest(const std::filesystem::path& dir, const std::string& stage);

namespace stage {
void vocab(const PipelineConfig& config);
void repr(const PipelineConfig& config);
void cluster(const PipelineConfig& config);
void filter(const PipelineConfig& config);
void train(const PipelineConfig& config);
void assign(const PipelineConfig& config);
/// Writes eval/report.json and returns its contents.
nlohmann::json eval(const PipelineConfig& config);
}  // namespace stage

/// Stage names in execution order.
const std::vector<std::string>& stage_names();
/// Runs one stage by name; errors are annotated with the stage name.
void run_stage(const std::string& name, const PipelineConfig& config);

/// All stages in order under an output lock; returns the report.
nlohmann::json run_pipeline(const PipelineConfig& config);

}  // namespace laic
