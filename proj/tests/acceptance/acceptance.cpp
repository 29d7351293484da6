// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "laic/center_learn.hpp"
#include "laic/cluster.hpp"
#include "laic/label_filter.hpp"
#include "laic/pipeline.hpp"
#include "laic/synthetic.hpp"
#include "laic/vocab_select.hpp"
#include "laic/xmodal_repr.hpp"

using namespace laic;
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail, double seconds) {
  std::printf("%s %s: %s [%.2fs]\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  failures += !ok;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> g(0.0, sigma);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// --- ridge representation ----------------------------------------------------

Matrix ridge_by_descent(const Matrix& x, const Matrix& u, double gamma) {
  Matrix c = Matrix::Zero(x.rows(), u.rows());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(u * u.transpose());
  const double step = 1.0 / (2.0 * (eig.eigenvalues().maxCoeff() + gamma));
  for (int it = 0; it < 500000; ++it) {
    const Matrix grad = -2.0 * (x - c * u) * u.transpose() + 2.0 * gamma * c;
    c -= step * grad;
    if (grad.norm() < 1e-12 * (1.0 + x.norm())) break;
  }
  return c;
}

void check_ridge() {
  std::mt19937_64 rng(101);
  double worst_rel = 0, worst_res = 0, solve_time = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = uniform_int(rng, 5, 100), m = uniform_int(rng, 2, 40), d = uniform_int(rng, 2, 16);
    Matrix x = gaussian(n, d, rng), u = gaussian(m, d, rng);
    x.rowwise().normalize();
    u.rowwise().normalize();
    const auto t0 = Clock::now();
    const Matrix c = ridge_representation(x, u, 5.0).c;
    solve_time += since(t0);
    const Matrix oracle = ridge_by_descent(x, u, 5.0);
    worst_rel = std::max(worst_rel, (c - oracle).norm() / std::max(oracle.norm(), 1e-300));
    worst_res = std::max(worst_res, normal_equation_residual(x, u, c, 5.0));
  }
  report(worst_rel <= 1e-4 && worst_res <= 1e-8 && solve_time < 1.0, "ridge-closed-form",
         fmt("20 instances, max rel err %.3g (<=1e-4), max normal-eq residual %.3g (<=1e-8), closed-form time %.4fs (<1s)",
             worst_rel, worst_res, solve_time),
         solve_time);
}

// --- gradient check ----------------------------------------------------------

double loss_total(const Batch& b, const Matrix& s, double temp, const TrainConfig& cfg) {
  SemanticCenters c;
  c.s = s;
  c.temperature = temp;
  return total_loss_and_grad(b, c, cfg).loss.total;
}

double grad_rel_error(const Batch& b, const Matrix& s, double temp, const TrainConfig& cfg) {
  SemanticCenters c;
  c.s = s;
  c.temperature = temp;
  const Matrix analytic = total_loss_and_grad(b, c, cfg).grad;
  Matrix numeric(s.rows(), s.cols());
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    Matrix plus = s, minus = s;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    numeric.data()[i] = (loss_total(b, plus, temp, cfg) - loss_total(b, minus, temp, cfg)) / (2 * h);
  }
  // Central differences cannot resolve entries below ~eps * |L| / h; entries
  // under 1e4 times that level are compared against it instead of themselves.
  const double resolution = std::numeric_limits<double>::epsilon() * std::abs(loss_total(b, s, temp, cfg)) / h;
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  const double floor = std::max({1e4 * resolution, 1e-6 * scale, 1e-12});
  double worst = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double a = analytic.data()[i], f = numeric.data()[i];
    worst = std::max(worst, std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor}));
  }
  return worst;
}

void check_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  const double temps[] = {0.01, 0.1, 0.2, 0.5, 1.0};
  double worst = 0;
  int checks = 0;
  for (int t = 0; t < 50; ++t) {
    const int k = uniform_int(rng, 2, 6), d = uniform_int(rng, 2, 8);
    Batch b;
    b.labeled.strong = gaussian(uniform_int(rng, 1, 6), d, rng);
    b.labeled.labels.resize(static_cast<std::size_t>(b.labeled.strong.rows()));
    for (int& y : b.labeled.labels) y = uniform_int(rng, 0, k - 1);
    const int nu = uniform_int(rng, 1, 6);
    b.unlabeled.strong = gaussian(nu, d, rng);
    b.unlabeled.weak = b.unlabeled.strong + gaussian(nu, d, rng, 0.3);
    const Matrix s = gaussian(k, d, rng);
    const double temp = temps[t % 5];
    TrainConfig base;
    base.q = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    base.lambda1 = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
    base.lambda2 = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    base.consistency_on = t % 2 ? ConsistencyOn::Softmax : ConsistencyOn::Logits;
    for (int mask : {1, 2, 4, 7}) {
      TrainConfig cfg = base;
      cfg.enable_sup = mask & 1;
      cfg.enable_con = mask & 2;
      cfg.enable_ent = mask & 4;
      worst = std::max(worst, grad_rel_error(b, s, temp, cfg));
      ++checks;
    }
  }
  const double secs = since(t0);
  report(worst <= 1e-4 && secs < 10.0, "gradient-check",
         fmt("50 configs x {sup, con, ent, combined} = %d checks, max rel err %.3g (<=1e-4)", checks, worst), secs);
}

// --- Hungarian ----------------------------------------------------------------

void check_hungarian() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const int k = uniform_int(rng, 1, 7);
    CountMatrix c(static_cast<std::size_t>(k), std::vector<std::int64_t>(static_cast<std::size_t>(k)));
    for (auto& row : c)
      for (auto& v : row) v = uniform_int(rng, 0, 50);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::int64_t best = -1;
    do {
      std::int64_t s = 0;
      for (int r = 0; r < k; ++r) s += c[static_cast<std::size_t>(r)][static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    mismatches += hungarian_match(c).matched != best;
  }
  const double secs = since(t0);
  report(mismatches == 0 && secs < 5.0, "hungarian-vs-brute-force",
         fmt("200 tables K<=7, %d mismatches", mismatches), secs);
}

// --- metric sanity ------------------------------------------------------------

void check_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  bool ok = true;
  double worst_ari = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(seed);
    std::vector<int> a(500), b(500);
    for (auto& v : a) v = uniform_int(r, 0, 9);
    for (auto& v : b) v = uniform_int(r, 0, 9);
    const LabelVector la(a, 10), lb(b, 10);
    const MetricsReport same = evaluate(la, la);
    ok &= std::abs(same.nmi - 1) <= 1e-12 && same.acc == 1.0 && std::abs(same.ari - 1) <= 1e-12;
    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> relabeled(500);
    for (std::size_t i = 0; i < 500; ++i) relabeled[i] = perm[static_cast<std::size_t>(a[i])];
    ok &= evaluate(LabelVector(relabeled, 10), la).acc == 1.0;
    worst_ari = std::max(worst_ari, std::abs(evaluate(la, lb).ari));
  }
  ok &= worst_ari <= 0.05;
  report(ok, "metric-sanity", fmt("identical -> 1/1/1, permuted -> ACC 1, random |ARI| max %.4f (<=0.05) over 20 seeds", worst_ari),
         since(t0));
}

// --- filter gain ----------------------------------------------------------------

void check_filter_gain() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const SyntheticData d = make_synthetic(spec);
    const EmbeddingMatrix x = l2_normalize_rows(d.images);
    const LabelVector noisy = boundary_corrupted_labels(x.to_f64(), d.directions, d.truth, 0.2);
    const FineCenters fine = compute_fine_centers(x, default_k_tilde(x.rows(), spec.k, true), seed);
    const CandidateSelection cand = select_candidates(d.nouns, fine, 2);
    const Matrix c = ridge_representation(x, cand.candidates, 5.0).c;
    const PseudoLabelState st = filter_pseudo_labels(c, noisy, default_k_hat(spec.k), 1.0);
    const FilterGain g = filter_gain_report(st, d.truth);
    wins += g.acc_after > g.acc_before;
    detail += fmt(" seed%d %.3f->%.3f sel=%.3f;", static_cast<int>(seed), g.acc_before, g.acc_after, g.fraction_selected);
  }
  report(wins >= 4, "filter-gain", fmt("%d/5 seeds gain (>=4);", wins) + detail, since(t0));
}

// --- pipeline-level checks --------------------------------------------------------

struct Dataset {
  fs::path dir;
  PipelineConfig config;
};

Dataset make_dataset(const fs::path& root, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  Dataset ds;
  ds.dir = root / ("seed" + std::to_string(seed));
  fs::create_directories(ds.dir);
  write_synthetic(make_synthetic(spec), ds.dir);
  PipelineConfig& c = ds.config;
  c.images = ds.dir / "images.emb";
  c.nouns = ds.dir / "nouns.emb";
  c.strong = ds.dir / "strong.emb";
  c.weak = ds.dir / "weak.emb";
  c.labels = ds.dir / "labels.lab";
  c.out = ds.dir / "run";
  c.k = spec.k;
  c.small_classes = true;
  c.seed = seed;
  return ds;
}

double metric(const json& r, const char* which) { return r.at("metrics").at(which).at("acc").get<double>(); }

void check_end_to_end(const std::vector<Dataset>& data) {
  const auto t0 = Clock::now();
  double final_acc = 0, no_train = 0, kmx = 0;
  std::string detail;
  for (const Dataset& ds : data) {
    const json r = run_pipeline(ds.config);
    final_acc += metric(r, "final") / static_cast<double>(data.size());
    no_train += metric(r, "no_train") / static_cast<double>(data.size());
    kmx += metric(r, "kmeans_x") / static_cast<double>(data.size());
  }
  const double secs = since(t0);
  const bool ok = final_acc >= 0.95 && final_acc >= no_train && no_train >= kmx && secs < 60.0;
  report(ok, "end-to-end",
         fmt("mean ACC final %.4f (>=0.95), no_train %.4f, kmeans_x %.4f (final>=no_train>=kmeans_x), 5 seeds (<60s)",
             final_acc, no_train, kmx),
         secs);
}

void check_ablation(const std::vector<Dataset>& data) {
  const auto t0 = Clock::now();
  std::map<std::string, double> mean;
  const std::vector<std::pair<std::string, std::array<bool, 3>>> variants{
      {"all", {true, true, true}}, {"sup_only", {true, false, false}}, {"con_ent", {false, true, true}}};
  for (const auto& [name, on] : variants)
    for (const Dataset& ds : data) {
      PipelineConfig c = ds.config;
      c.out = ds.dir / ("ablate_" + name);
      c.train.enable_sup = on[0];
      c.train.enable_con = on[1];
      c.train.enable_ent = on[2];
      mean[name] += metric(run_pipeline(c), "final") / static_cast<double>(data.size());
    }
  const bool keeps = mean["all"] >= mean["sup_only"] - 0.01;
  const bool collapses = mean["con_ent"] < 0.5 * mean["all"];
  report(keeps && collapses, "ablation",
         fmt("mean ACC all %.4f, sup_only %.4f (all >= sup_only - 0.01: %s), con_ent %.4f (< 0.5 x all: %s)", mean["all"],
             mean["sup_only"], keeps ? "yes" : "no", mean["con_ent"], collapses ? "yes" : "no"),
         since(t0));
}

void check_determinism(const Dataset& ds) {
  const auto t0 = Clock::now();
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  PipelineConfig c = ds.config;
  c.out = ds.dir / "determinism";
  const std::vector<fs::path> files{"eval/report.json", "train/centers.emb8", "train/centers.emb"};
  std::vector<std::string> first;
  run_pipeline(c);
  for (const auto& f : files) first.push_back(slurp(c.out / f));
  fs::remove_all(c.out);
  run_pipeline(c);
  bool same = true;
  for (std::size_t i = 0; i < files.size(); ++i) same &= !first[i].empty() && first[i] == slurp(c.out / files[i]);
  report(same, "determinism", "two runs, same seed: report.json, centers.emb8, centers.emb byte-identical", since(t0));
}

}  // namespace

int main() {
  const auto guarded = [](const char* name, auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(false, name, std::string("threw: ") + e.what(), 0.0);
    }
  };
  guarded("ridge-closed-form", check_ridge);
  guarded("gradient-check", check_gradients);
  guarded("hungarian-vs-brute-force", check_hungarian);
  guarded("metric-sanity", check_metrics);
  guarded("filter-gain", check_filter_gain);

  std::string tmpl = (fs::temp_directory_path() / "laic-accept-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) return 2;
  const fs::path root = tmpl;
  std::vector<Dataset> data;
  for (std::uint64_t seed = 0; seed < 5; ++seed) data.push_back(make_dataset(root, seed));
  guarded("end-to-end", [&] { check_end_to_end(data); });
  guarded("ablation", [&] { check_ablation(data); });
  guarded("determinism", [&] { check_determinism(data.front()); });
  std::error_code ec;
  fs::remove_all(root, ec);

  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
