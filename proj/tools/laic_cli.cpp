// laic: command-line front end. Exit codes: 0 ok, 2 config error, 3 stage
// failure, 4 invariant violation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "laic/center_learn.hpp"
#include "laic/embed_io.hpp"
#include "laic/error.hpp"
#include "laic/pipeline.hpp"
#include "laic/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Flag values that, when given, override the config file.
struct Overrides {
  std::string config;
  std::optional<std::string> images, nouns, strong, weak, labels, out;
  std::optional<int> k, theta, k_hat, k_tilde, restarts, epochs, batch_size;
  std::optional<double> gamma, tau, lr0, q, lambda1, lambda2, temperature;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> init, consistency_on;
  bool small_classes = false, no_relax = false, no_sup = false, no_con = false, no_ent = false;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON config file");
  cmd->add_option("--images", o.images, "image features (EMB1)");
  cmd->add_option("--nouns", o.nouns, "noun corpus (EMB1 + .json sidecar)");
  cmd->add_option("--strong", o.strong, "stacked strong views (EMB1)");
  cmd->add_option("--weak", o.weak, "stacked weak views (EMB1)");
  cmd->add_option("--labels", o.labels, "ground-truth labels (LAB1)");
  cmd->add_option("-o,--out", o.out, "output directory");
  cmd->add_option("-k,--k", o.k, "number of clusters");
  cmd->add_option("--theta", o.theta, "nouns kept per fine center");
  cmd->add_option("--gamma", o.gamma, "ridge weight");
  cmd->add_option("--k-hat", o.k_hat, "neighbors for the consistency score");
  cmd->add_option("--tau", o.tau, "consistency threshold");
  cmd->add_option("--k-tilde", o.k_tilde, "fine center count");
  cmd->add_option("--kmeans-restarts", o.restarts);
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--lr", o.lr0);
  cmd->add_option("--q", o.q);
  cmd->add_option("--lambda1", o.lambda1);
  cmd->add_option("--lambda2", o.lambda2);
  cmd->add_option("--temperature", o.temperature);
  cmd->add_option("--init", o.init, "anchor | class_mean");
  cmd->add_option("--consistency-on", o.consistency_on, "logits | softmax");
  cmd->add_flag("--small-classes", o.small_classes, "fine center count 3K instead of N/300");
  cmd->add_flag("--no-relax", o.no_relax, "fail instead of relaxing tau when nothing passes");
  cmd->add_flag("--no-sup", o.no_sup);
  cmd->add_flag("--no-con", o.no_con);
  cmd->add_flag("--no-ent", o.no_ent);
}

laic::PipelineConfig resolve(const Overrides& o) {
  laic::PipelineConfig c;
  if (!o.config.empty()) c = laic::load_config(o.config);
  auto set = [](auto& dst, const auto& src) {
    if (src) dst = *src;
  };
  set(c.images, o.images);
  set(c.nouns, o.nouns);
  set(c.strong, o.strong);
  set(c.weak, o.weak);
  set(c.labels, o.labels);
  set(c.out, o.out);
  set(c.k, o.k);
  set(c.theta, o.theta);
  set(c.gamma, o.gamma);
  set(c.k_hat, o.k_hat);
  set(c.tau, o.tau);
  set(c.k_tilde, o.k_tilde);
  set(c.kmeans_restarts, o.restarts);
  set(c.seed, o.seed);
  set(c.train.epochs, o.epochs);
  set(c.train.batch_size, o.batch_size);
  set(c.train.lr0, o.lr0);
  set(c.train.q, o.q);
  set(c.train.lambda1, o.lambda1);
  set(c.train.lambda2, o.lambda2);
  set(c.train.temperature, o.temperature);
  if (o.init) c.train.init = laic::parse_center_init(*o.init);
  if (o.consistency_on) c.train.consistency_on = laic::parse_consistency_on(*o.consistency_on);
  if (o.small_classes) c.small_classes = true;
  if (o.no_relax) c.relax_tau = false;
  if (o.no_sup) c.train.enable_sup = false;
  if (o.no_con) c.train.enable_con = false;
  if (o.no_ent) c.train.enable_ent = false;
  // The environment wins over both the file and the flags.
  laic::apply_env_overrides(c);
  c.validate();
  return c;
}

struct SynthArgs {
  laic::SyntheticSpec spec;
  std::string dir;
  bool small_classes = true;
};

int cmd_synth(const SynthArgs& a) {
  const laic::SyntheticData data = laic::make_synthetic(a.spec);
  const fs::path dir = a.dir;
  laic::write_synthetic(data, dir);
  laic::PipelineConfig c;
  c.images = dir / "images.emb";
  c.nouns = dir / "nouns.emb";
  if (!data.views.strong.empty()) c.strong = dir / "strong.emb";
  if (!data.views.weak.empty()) c.weak = dir / "weak.emb";
  c.labels = dir / "labels.lab";
  c.out = dir / "run";
  c.k = a.spec.k;
  c.small_classes = a.small_classes;
  c.seed = a.spec.seed;
  std::ofstream(dir / "config.json") << c.to_json().dump(2) << '\n';
  std::cout << "wrote " << dir.string() << " (config.json ready for `laic run -c`)\n";
  return 0;
}

void print_report(const json& r) {
  std::cout << std::fixed << std::setprecision(4);
  if (r.contains("metrics")) {
    std::cout << "checkpoint      ACC     NMI     ARI\n";
    for (const char* name : {"kmeans_x", "no_train", "final"}) {
      const json& m = r["metrics"][name];
      std::cout << std::left << std::setw(12) << name << std::right << std::setw(8) << m["acc"].get<double>()
                << std::setw(8) << m["nmi"].get<double>() << std::setw(8) << m["ari"].get<double>() << '\n';
    }
    const json& g = r["filter_gain"];
    std::cout << "pseudo-label ACC " << g["acc_before"].get<double>() << " -> " << g["acc_after"].get<double>()
              << " on " << g["fraction_selected"].get<double>() << " of samples\n";
  }
  const json& res = r["resolved"];
  std::cout << "candidates " << res["candidates"] << ", k_tilde " << res["k_tilde"] << ", k_hat " << res["k_hat"]
            << ", tau " << res["tau_effective"].get<double>() << (res["tau_relaxed"].get<bool>() ? " (relaxed)" : "")
            << '\n';
  std::cout << "center  nearest noun                      cosine\n";
  for (const json& row : r["nearest_nouns"])
    std::cout << std::setw(6) << row["center"].get<int>() << "  " << std::left << std::setw(32)
              << row["noun"].get<std::string>() << std::right << std::setw(8) << row["cosine"].get<double>() << '\n';
}

struct DiagnoseArgs {
  std::string images, nouns, out_json, out_csv;
  int sample = 2000;
  int bins = 40;
  std::uint64_t seed = 0;
};

// Cosine-similarity statistics inside and across the two modalities, on a
// seeded row sample of each side.
int cmd_diagnose(const DiagnoseArgs& a) {
  const laic::Matrix x = laic::l2_normalize_rows(laic::read_embedding(a.images)).to_f64();
  const laic::Matrix w = laic::l2_normalize_rows(laic::read_vocab(a.nouns).embeddings()).to_f64();
  if (x.cols() != w.cols()) throw laic::Error(laic::ErrorKind::DimMismatch, "image dim vs noun dim");
  std::mt19937_64 rng(a.seed);
  auto sample = [&](const laic::Matrix& m) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(a.sample)));
    std::sort(idx.begin(), idx.end());
    laic::Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
  };
  const laic::Matrix xs = sample(x), ws = sample(w);

  struct Stats {
    std::vector<std::int64_t> hist;
    double sum = 0, sumsq = 0;
    std::int64_t n = 0;
  };
  auto collect = [&](const laic::Matrix& a_, const laic::Matrix& b_, bool same) {
    Stats s;
    s.hist.assign(static_cast<std::size_t>(a.bins), 0);
    const laic::Matrix sim = a_ * b_.transpose();
    for (Eigen::Index i = 0; i < sim.rows(); ++i)
      for (Eigen::Index j = same ? i + 1 : 0; j < sim.cols(); ++j) {
        const double v = std::clamp(sim(i, j), -1.0, 1.0);
        auto bin = static_cast<int>((v + 1.0) / 2.0 * a.bins);
        ++s.hist[static_cast<std::size_t>(std::min(bin, a.bins - 1))];
        s.sum += v;
        s.sumsq += v * v;
        ++s.n;
      }
    return s;
  };
  const Stats ii = collect(xs, xs, true), nn = collect(ws, ws, true), in = collect(xs, ws, false);
  auto summary = [](const Stats& s) {
    const double mean = s.n ? s.sum / static_cast<double>(s.n) : 0.0;
    const double var = s.n ? s.sumsq / static_cast<double>(s.n) - mean * mean : 0.0;
    return json{{"pairs", s.n}, {"mean", mean}, {"std", std::sqrt(std::max(var, 0.0))}};
  };
  const json j{{"image_image", summary(ii)},
               {"noun_noun", summary(nn)},
               {"image_noun", summary(in)},
               {"images_sampled", xs.rows()},
               {"nouns_sampled", ws.rows()}};
  if (a.out_json.empty()) std::cout << j.dump(2) << '\n';
  else std::ofstream(a.out_json) << j.dump(2) << '\n';
  if (!a.out_csv.empty()) {
    std::ofstream csv(a.out_csv);
    csv << "bin_lo,bin_hi,image_image,noun_noun,image_noun\n";
    for (int b = 0; b < a.bins; ++b) {
      const auto u = static_cast<std::size_t>(b);
      csv << -1.0 + 2.0 * b / a.bins << ',' << -1.0 + 2.0 * (b + 1) / a.bins << ',' << ii.hist[u] << ','
          << nn.hist[u] << ',' << in.hist[u] << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-assisted image clustering on precomputed embeddings"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a planted-cluster benchmark and a matching config");
  synth_cmd->add_option("dir", synth.dir, "output directory")->required();
  synth_cmd->add_option("-k,--k", synth.spec.k);
  synth_cmd->add_option("--n-per", synth.spec.n_per);
  synth_cmd->add_option("-d,--dim", synth.spec.d);
  synth_cmd->add_option("--nouns-per-class", synth.spec.nouns_per_class);
  synth_cmd->add_option("--distractors", synth.spec.distractors);
  synth_cmd->add_option("--noise", synth.spec.noise);
  synth_cmd->add_option("--noun-noise", synth.spec.noun_noise);
  synth_cmd->add_option("--strong-views", synth.spec.strong_views);
  synth_cmd->add_option("--weak-views", synth.spec.weak_views);
  synth_cmd->add_option("--seed", synth.spec.seed);

  Overrides overrides;
  std::string chosen_stage;
  for (const auto& name : laic::stage_names()) {
    auto* cmd = app.add_subcommand(name, "run only the " + name + " stage from existing checkpoints");
    add_config_options(cmd, overrides);
    cmd->callback([&chosen_stage, name] { chosen_stage = name; });
  }
  auto* run_cmd = app.add_subcommand("run", "run every stage");
  add_config_options(run_cmd, overrides);

  std::string report_dir;
  bool report_json = false;
  auto* report_cmd = app.add_subcommand("report", "summarize <out>/eval/report.json");
  report_cmd->add_option("out", report_dir, "pipeline output directory")->required();
  report_cmd->add_flag("--json", report_json, "print the raw JSON");

  DiagnoseArgs diag;
  auto* diag_cmd = app.add_subcommand("diagnose", "cosine-similarity statistics of images and nouns");
  diag_cmd->add_option("--images", diag.images)->required();
  diag_cmd->add_option("--nouns", diag.nouns)->required();
  diag_cmd->add_option("--json", diag.out_json, "write statistics here instead of stdout");
  diag_cmd->add_option("--csv", diag.out_csv, "histogram CSV");
  diag_cmd->add_option("--sample", diag.sample, "rows sampled per side")->check(CLI::PositiveNumber);
  diag_cmd->add_option("--bins", diag.bins)->check(CLI::PositiveNumber);
  diag_cmd->add_option("--seed", diag.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*diag_cmd) return cmd_diagnose(diag);
    if (*report_cmd) {
      std::ifstream is(fs::path(report_dir) / "eval" / "report.json");
      if (!is) throw laic::Error(laic::ErrorKind::IoFailure, "no report under " + report_dir);
      const json r = json::parse(is);
      if (report_json) std::cout << r.dump(2) << '\n';
      else print_report(r);
      return 0;
    }
    const laic::PipelineConfig config = resolve(overrides);
    if (*run_cmd) {
      print_report(laic::run_pipeline(config));
      return 0;
    }
    laic::OutputLock lock(config.out);
    laic::run_stage(chosen_stage, config);
    return 0;
  } catch (const laic::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return laic::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
