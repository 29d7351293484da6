#include "laic/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "laic/cluster.hpp"
#include "laic/error.hpp"
#include "laic/heatmap.hpp"
#include "laic/kernels.hpp"
#include "laic/label_filter.hpp"
#include "laic/vocab_select.hpp"
#include "laic/xmodal_repr.hpp"

namespace laic {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

// Independent stream per stage so rerunning one stage never shifts another.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw Error(ErrorKind::IoFailure, "write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoFailure, path.string() + ": " + e.what());
  }
}

fs::path stage_dir(const PipelineConfig& c, const char* name) {
  fs::path dir = c.out / name;
  fs::create_directories(dir);
  return dir;
}

EmbeddingMatrix load_images(const PipelineConfig& c) {
  EmbeddingMatrix x = read_embedding(c.images);
  return x.normalized() ? x : l2_normalize_rows(x);
}

VocabSet load_nouns(const fs::path& path) {
  VocabSet w = read_vocab(path);
  if (w.embeddings().normalized()) return w;
  return VocabSet(w.names(), l2_normalize_rows(w.embeddings()));
}

KMeansOptions kmeans_options(const PipelineConfig& c) {
  KMeansOptions o;
  o.restarts = c.kmeans_restarts;
  return o;
}

int resolved_k_tilde(const PipelineConfig& c, std::size_t n) {
  return c.k_tilde > 0 ? c.k_tilde : default_k_tilde(n, c.k, c.small_classes);
}

std::size_t resolved_k_hat(const PipelineConfig& c) {
  return static_cast<std::size_t>(c.k_hat > 0 ? c.k_hat : default_k_hat(c.k));
}

std::vector<std::size_t> complement(const std::vector<std::size_t>& chosen, std::size_t n) {
  std::vector<char> mark(n, 0);
  for (std::size_t i : chosen) mark[i] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i)
    if (!mark[i]) rest.push_back(i);
  return rest;
}

SemanticCenters load_centers(const PipelineConfig& c) {
  SemanticCenters s;
  s.s = read_matrix_f64(c.out / "train" / "centers.emb8");
  s.temperature = c.train.temperature;
  return s;
}

json train_to_json(const TrainConfig& t) {
  return {{"q", t.q},
          {"lambda1", t.lambda1},
          {"lambda2", t.lambda2},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr0", t.lr0},
          {"momentum", t.momentum},
          {"temperature", t.temperature},
          {"enable_sup", t.enable_sup},
          {"enable_con", t.enable_con},
          {"enable_ent", t.enable_ent},
          {"consistency_on", to_string(t.consistency_on)},
          {"init", to_string(t.init)},
          {"init_spread", t.init_spread}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  const std::map<std::string, std::function<void(const json&)>> setters{
      {"q", [&](const json& v) { t.q = v.get<double>(); }},
      {"lambda1", [&](const json& v) { t.lambda1 = v.get<double>(); }},
      {"lambda2", [&](const json& v) { t.lambda2 = v.get<double>(); }},
      {"epochs", [&](const json& v) { t.epochs = v.get<int>(); }},
      {"batch_size", [&](const json& v) { t.batch_size = v.get<int>(); }},
      {"lr0", [&](const json& v) { t.lr0 = v.get<double>(); }},
      {"momentum", [&](const json& v) { t.momentum = v.get<double>(); }},
      {"temperature", [&](const json& v) { t.temperature = v.get<double>(); }},
      {"enable_sup", [&](const json& v) { t.enable_sup = v.get<bool>(); }},
      {"enable_con", [&](const json& v) { t.enable_con = v.get<bool>(); }},
      {"enable_ent", [&](const json& v) { t.enable_ent = v.get<bool>(); }},
      {"consistency_on", [&](const json& v) { t.consistency_on = parse_consistency_on(v.get<std::string>()); }},
      {"init", [&](const json& v) { t.init = parse_center_init(v.get<std::string>()); }},
      {"init_spread", [&](const json& v) { t.init_spread = v.get<double>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) config_error("unknown train key '" + key + "'");
    it->second(value);
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
  if (k < 2) config_error("k must be >= 2");
  if (theta < 1) config_error("theta must be >= 1");
  if (!(gamma > 0.0)) config_error("gamma must be > 0");
  if (k_hat < 0) config_error("k_hat must be >= 0 (0 selects the default)");
  if (!(tau > 0.0 && tau <= 1.0)) config_error("tau must lie in (0, 1]");
  if (k_tilde < 0) config_error("k_tilde must be >= 0 (0 selects the default)");
  if (kmeans_restarts < 1) config_error("kmeans_restarts must be >= 1");
  if (out.empty()) config_error("out directory is required");
  if (images.empty() || nouns.empty()) config_error("images and nouns are required");
  for (const fs::path* p : {&images, &nouns, &strong, &weak, &labels})
    if (!p->empty() && !fs::is_regular_file(*p)) config_error("missing file: " + p->string());
  if (!fs::is_regular_file(sidecar_path(nouns))) config_error("missing sidecar: " + sidecar_path(nouns).string());
  try {
    train.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
}

json PipelineConfig::to_json() const {
  return {{"images", images.string()},
          {"nouns", nouns.string()},
          {"strong", strong.string()},
          {"weak", weak.string()},
          {"labels", labels.string()},
          {"out", out.string()},
          {"k", k},
          {"theta", theta},
          {"gamma", gamma},
          {"k_hat", k_hat},
          {"tau", tau},
          {"relax_tau", relax_tau},
          {"small_classes", small_classes},
          {"k_tilde", k_tilde},
          {"kmeans_restarts", kmeans_restarts},
          {"seed", seed},
          {"train", train_to_json(train)}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  PipelineConfig c;
  const std::map<std::string, std::function<void(const json&)>> setters{
      {"images", [&](const json& v) { c.images = v.get<std::string>(); }},
      {"nouns", [&](const json& v) { c.nouns = v.get<std::string>(); }},
      {"strong", [&](const json& v) { c.strong = v.get<std::string>(); }},
      {"weak", [&](const json& v) { c.weak = v.get<std::string>(); }},
      {"labels", [&](const json& v) { c.labels = v.get<std::string>(); }},
      {"out", [&](const json& v) { c.out = v.get<std::string>(); }},
      {"k", [&](const json& v) { c.k = v.get<int>(); }},
      {"theta", [&](const json& v) { c.theta = v.get<int>(); }},
      {"gamma", [&](const json& v) { c.gamma = v.get<double>(); }},
      {"k_hat", [&](const json& v) { c.k_hat = v.get<int>(); }},
      {"tau", [&](const json& v) { c.tau = v.get<double>(); }},
      {"relax_tau", [&](const json& v) { c.relax_tau = v.get<bool>(); }},
      {"small_classes", [&](const json& v) { c.small_classes = v.get<bool>(); }},
      {"k_tilde", [&](const json& v) { c.k_tilde = v.get<int>(); }},
      {"kmeans_restarts", [&](const json& v) { c.kmeans_restarts = v.get<int>(); }},
      {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
      {"train", [&](const json& v) { c.train = train_from_json(v); }},
  };
  try {
    for (const auto& [key, value] : j.items()) {
      auto it = setters.find(key);
      if (it == setters.end()) config_error("unknown config key '" + key + "'");
      it->second(value);
    }
  } catch (const json::exception& e) {
    config_error(std::string("bad config value: ") + e.what());
  }
  return c;
}

void apply_env_overrides(PipelineConfig& config) {
  const char* env = std::getenv("LAIC_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') config_error(std::string("LAIC_SEED is not an unsigned integer: ") + env);
  config.seed = v;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) config_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    config_error(path.string() + ": " + e.what());
  }
  PipelineConfig c = PipelineConfig::from_json(j);
  apply_env_overrides(c);
  return c;
}

// ---------------------------------------------------------------- helpers

std::vector<NounMatch> nearest_noun_report(const SemanticCenters& centers, const VocabSet& nouns) {
  if (static_cast<std::size_t>(centers.s.cols()) != nouns.embeddings().dim())
    throw Error(ErrorKind::DimMismatch, "center dim vs noun dim");
  const auto best = kernels::serial::argmax_cosine(centers.s, nouns.embeddings().to_f64());
  std::vector<NounMatch> table;
  for (int k = 0; k < centers.k(); ++k) {
    const auto idx = static_cast<std::size_t>(best.index[static_cast<std::size_t>(k)]);
    table.push_back({k, idx, nouns.names()[idx], best.score[static_cast<std::size_t>(k)]});
  }
  return table;
}

OutputLock::OutputLock(const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const fs::path path = out_dir / ".lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorKind::IoFailure, "output directory in use by another process: " + out_dir.string());
  }
}

OutputLock::~OutputLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::IoFailure, "sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

void write_manifest(const fs::path& dir, const std::string& stage) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  json files = json::object();
  for (const auto& n : names) files[n] = sha256_file(dir / n);
  write_json({{"stage", stage}, {"sha256", files}}, dir / "manifest.json");
}

// ---------------------------------------------------------------- stages

namespace stage {

void vocab(const PipelineConfig& c) {
  const fs::path dir = stage_dir(c, "vocab");
  const EmbeddingMatrix x = load_images(c);
  const VocabSet w = load_nouns(c.nouns);
  const int k_tilde = resolved_k_tilde(c, x.rows());
  const FineCenters fine = compute_fine_centers(x, k_tilde, stage_seed(c.seed, 1), kmeans_options(c));
  const CandidateSelection sel = select_candidates(w, fine, c.theta);
  write_vocab(sel.candidates, dir / "candidates.emb", "candidates");
  json prov = sel.provenance_json(w);
  prov["k_tilde"] = k_tilde;
  write_json(prov, dir / "provenance.json");
  write_matrix_f64(fine.centers, dir / "fine_centers.emb8");
  write_manifest(dir, "vocab");
}

void repr(const PipelineConfig& c) {
  const fs::path dir = stage_dir(c, "repr");
  const Matrix x = load_images(c).to_f64();
  const Matrix u = read_vocab(c.out / "vocab" / "candidates.emb").embeddings().to_f64();
  const ReprMatrix r = ridge_representation(x, u, c.gamma);
  write_matrix_f64(r.c, dir / "c.emb8");
  write_embedding(EmbeddingMatrix::from_f64(r.c), dir / "c.emb");
  write_json({{"n", r.n},
              {"m", r.m},
              {"d", r.d},
              {"gamma", r.gamma},
              {"objective", residual_objective(x, u, r.c, r.gamma)},
              {"normal_equation_residual", normal_equation_residual(x, u, r.c, r.gamma)}},
             dir / "stats.json");
  if (!c.labels.empty()) export_heatmap(r.c, read_labels(c.labels), dir / "heatmap.png");
  write_manifest(dir, "repr");
}

void cluster(const PipelineConfig& c) {
  const fs::path dir = stage_dir(c, "cluster");
  const Matrix cm = read_matrix_f64(c.out / "repr" / "c.emb8");
  const KMeansResult on_c = kmeans(cm, c.k, stage_seed(c.seed, 2), kmeans_options(c));
  const KMeansResult on_x = kmeans(load_images(c).to_f64(), c.k, stage_seed(c.seed, 3), kmeans_options(c));
  write_labels(on_c.labels, dir / "pseudo.lab");
  write_labels(on_x.labels, dir / "kmeans_x.lab");
  write_json({{"inertia_c", on_c.inertia},
              {"iterations_c", on_c.iterations},
              {"inertia_x", on_x.inertia},
              {"iterations_x", on_x.iterations}},
             dir / "stats.json");
  write_manifest(dir, "cluster");
}

void filter(const PipelineConfig& c) {
  const fs::path dir = stage_dir(c, "filter");
  const Matrix cm = read_matrix_f64(c.out / "repr" / "c.emb8");
  const LabelVector pseudo = read_labels(c.out / "cluster" / "pseudo.lab");
  const PseudoLabelState state = filter_pseudo_labels(cm, pseudo, resolved_k_hat(c), c.tau, c.relax_tau);
  json j = state.selection_json();
  j["fraction_selected"] = static_cast<double>(state.selection.selected.size()) / static_cast<double>(pseudo.size());
  write_json(j, dir / "selection.json");
  write_manifest(dir, "filter");
}

void train(const PipelineConfig& c) {
  const fs::path dir = stage_dir(c, "train");
  ViewBundle views = read_view_bundle(c.images, c.strong, c.weak);
  if (!views.base.normalized()) views.base = l2_normalize_rows(views.base);
  views.validate(false);
  const LabelVector pseudo = read_labels(c.out / "cluster" / "pseudo.lab");
  const json sel = read_json(c.out / "filter" / "selection.json");
  const auto selected = sel.at("indices").get<std::vector<std::size_t>>();
  for (std::size_t i : selected)
    if (i >= pseudo.size()) throw Error(ErrorKind::InvariantViolation, "selection index out of range");
  const auto unselected = complement(selected, pseudo.size());

  TrainConfig tc = c.train;
  tc.seed = stage_seed(c.seed, 4);
  const SemanticCenters init = initial_centers(views, pseudo, selected, tc);
  const TrainResult result = train_centers(views, pseudo, selected, unselected, tc, init);
  write_matrix_f64(result.centers.s, dir / "centers.emb8", true);
  write_embedding(EmbeddingMatrix::from_f64(result.centers.s, true), dir / "centers.emb");
  write_loss_trace_csv(result.trace, dir / "loss_trace.csv");
  write_manifest(dir, "train");
}

void assign(const PipelineConfig& c) {
  const fs::path dir = stage_dir(c, "assign");
  write_labels(laic::assign(load_images(c), load_centers(c)), dir / "final.lab");
  write_manifest(dir, "assign");
}

json eval(const PipelineConfig& c) {
  const fs::path dir = stage_dir(c, "eval");
  const json sel = read_json(c.out / "filter" / "selection.json");
  const VocabSet candidates = read_vocab(c.out / "vocab" / "candidates.emb");
  const json prov = read_json(c.out / "vocab" / "provenance.json");

  json report;
  report["config"] = c.to_json();
  report["resolved"] = {{"k_tilde", prov.at("k_tilde")},
                        {"candidates", candidates.size()},
                        {"k_hat", sel.at("k_hat")},
                        {"tau_requested", sel.at("tau_requested")},
                        {"tau_effective", sel.at("tau_effective")},
                        {"tau_relaxed", sel.at("tau_effective") != sel.at("tau_requested")},
                        {"selected", sel.at("indices").size()},
                        {"fraction_selected", sel.at("fraction_selected")},
                        {"nmi_normalization", kNmiNormalization}};
  report["loss_trace"] = "train/loss_trace.csv";

  json nouns = json::array();
  for (const NounMatch& m : nearest_noun_report(load_centers(c), candidates))
    nouns.push_back({{"center", m.center}, {"noun", m.name}, {"noun_index", m.noun}, {"cosine", m.cosine}});
  report["nearest_nouns"] = std::move(nouns);

  if (!c.labels.empty()) {
    const LabelVector truth = read_labels(c.labels);
    const LabelVector pseudo = read_labels(c.out / "cluster" / "pseudo.lab");
    report["metrics"] = {{"kmeans_x", evaluate(read_labels(c.out / "cluster" / "kmeans_x.lab"), truth).to_json()},
                         {"no_train", evaluate(pseudo, truth).to_json()},
                         {"final", evaluate(read_labels(c.out / "assign" / "final.lab"), truth).to_json()}};
    PseudoLabelState state;
    state.labels = pseudo;
    state.selection.selected = sel.at("indices").get<std::vector<std::size_t>>();
    const FilterGain gain = filter_gain_report(state, truth);
    report["filter_gain"] = {{"acc_before", gain.acc_before},
                             {"acc_after", gain.acc_after},
                             {"fraction_selected", gain.fraction_selected}};
    const CorrelationGap gap = row_correlation_gap(read_matrix_f64(c.out / "repr" / "c.emb8"), truth);
    report["repr_row_correlation"] = {{"within", gap.within}, {"between", gap.between}, {"gap", gap.gap()}};
  }
  write_json(report, dir / "report.json");
  write_manifest(dir, "eval");
  return report;
}

}  // namespace stage

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"vocab", "repr", "cluster", "filter", "train", "assign", "eval"};
  return names;
}

void run_stage(const std::string& name, const PipelineConfig& config) {
  static const std::map<std::string, std::function<void(const PipelineConfig&)>> table{
      {"vocab", stage::vocab},   {"repr", stage::repr},     {"cluster", stage::cluster},
      {"filter", stage::filter}, {"train", stage::train},   {"assign", stage::assign},
      {"eval", [](const PipelineConfig& c) { stage::eval(c); }},
  };
  auto it = table.find(name);
  if (it == table.end()) config_error("unknown stage '" + name + "'");
  try {
    it->second(config);
  } catch (const Error& e) {
    throw e.with_context("stage " + name);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorKind::IoFailure, e.what()).with_context("stage " + name);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::IoFailure, e.what()).with_context("stage " + name);
  }
}

json run_pipeline(const PipelineConfig& config) {
  config.validate();
  OutputLock lock(config.out);
  for (const auto& name : stage_names()) run_stage(name, config);
  return read_json(config.out / "eval" / "report.json");
}

}  // namespace laic
