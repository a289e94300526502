#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "analearn/datagen.hpp"
#include "analearn/denoise.hpp"
#include "analearn/eval.hpp"
#include "analearn/imgops.hpp"
#include "analearn/kktgrad.hpp"
#include "analearn/parallel.hpp"
#include "analearn/runio.hpp"
#include "analearn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace analearn;

namespace {

/// Exit codes: 0 success, 2 validation failure, 3 solver-reliability failure.
struct ReliabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  in >> j;
  return j;
}

/// Flags override config-file values: a key is taken from the file only when
/// the flag was not given on the command line.
template <typename T>
void cfg_default(const CLI::App& cmd, const std::string& flag, const json& j,
                 const char* key, T& var) {
  if (j.contains(key) && cmd.count(flag) == 0) var = j.at(key).get<T>();
}

std::uint64_t apply_seed_env(std::uint64_t seed) {
  if (const char* s = std::getenv("BAD_SEED")) {
    return std::strtoull(s, nullptr, 10);
  }
  return seed;
}

std::string recon_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "recon_%04d.f64", index);
  return buf;
}

Image read_image_raw(const fs::path& path, int side) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open image file: " + path.string());
  Image img(side);
  const std::streamsize want =
      static_cast<std::streamsize>(img.px.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(img.px.data()), want);
  if (in.gcount() != want) {
    throw std::runtime_error("truncated image file " + path.string() +
                             " at byte offset " + std::to_string(in.gcount()));
  }
  return img;
}

void write_image_raw(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size() * sizeof(double)));
}

// ----------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out;
  std::string config;
  std::uint64_t seed = 1;
  std::string split = "train";
  int count = 10;
  int side = 64;
  double sigma = 0.1;
  int n_rects = 100;
  bool pgm = false;
  bool force = false;
};

int run_gen_data(const CLI::App& cmd, GenDataArgs a) {
  if (!a.config.empty()) {
    const json j = load_config_file(a.config);
    cfg_default(cmd, "--seed", j, "seed", a.seed);
    cfg_default(cmd, "--split", j, "split", a.split);
    cfg_default(cmd, "--count", j, "count", a.count);
    cfg_default(cmd, "--side", j, "side", a.side);
    cfg_default(cmd, "--sigma", j, "sigma", a.sigma);
    cfg_default(cmd, "--rects", j, "n_rects", a.n_rects);
    cfg_default(cmd, "--pgm", j, "pgm", a.pgm);
  }
  a.seed = apply_seed_env(a.seed);
  ensure_output_dir(a.out, a.force);
  const Dataset ds = make_dataset(a.seed, a.count, a.split, a.side, a.sigma, a.n_rects);
  save_dataset(ds, a.out, a.pgm);
  const json cfg = {{"seed", a.seed},   {"split", a.split}, {"count", a.count},
                    {"side", a.side},   {"sigma", a.sigma}, {"n_rects", a.n_rects},
                    {"pgm", a.pgm}};
  write_manifest(a.out, "gen-data", cfg, {});
  std::cerr << "gen-data: wrote " << a.count << " pairs to " << a.out << "\n";
  return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::string mode = "supervised";
  double beta = -1.0;
  std::string schedule;
  double step = 2.0;
  std::uint64_t seed = 0;
  std::string init = "dct-nonconstant";
  int threads = 1;
  int iters = 200;  // unsupervised outer iterations
  double rho = 1.0;
  bool resume = false;
  bool force = false;
};

int run_train(const CLI::App& cmd, TrainArgs a) {
  if (!a.config.empty()) {
    const json j = load_config_file(a.config);
    cfg_default(cmd, "--mode", j, "mode", a.mode);
    cfg_default(cmd, "--beta", j, "beta", a.beta);
    cfg_default(cmd, "--schedule", j, "schedule", a.schedule);
    cfg_default(cmd, "--step", j, "step_size", a.step);
    cfg_default(cmd, "--seed", j, "seed", a.seed);
    cfg_default(cmd, "--init", j, "init", a.init);
    cfg_default(cmd, "--threads", j, "threads", a.threads);
    cfg_default(cmd, "--iters", j, "iters", a.iters);
    cfg_default(cmd, "--rho", j, "rho", a.rho);
  }
  a.seed = apply_seed_env(a.seed);
  const Dataset ds = load_dataset(a.data);

  if (a.mode == "unsupervised") {
    ensure_output_dir(a.out, a.force);
    std::vector<Image> clean;
    for (const auto& pr : ds.pairs) clean.push_back(pr.first);
    UnsupervisedConfig ucfg;
    ucfg.outer_iters = a.iters;
    ucfg.rho = a.rho;
    const UnsupervisedResult res = unsupervised_train(clean, ucfg);
    save_filterbank(res.bank, (fs::path(a.out) / "fb_final.json").string(),
                    "unsupervised");
    save_filterbank(res.full_bank, (fs::path(a.out) / "fb_full.json").string(),
                    "unsupervised-with-dc");
    json stats = {{"objective_init", res.objective_init},
                  {"objective_final", res.objective_final},
                  {"orth_error", res.orth_error}};
    std::ofstream(fs::path(a.out) / "stats.json") << stats.dump(2) << "\n";
    const json cfg = {{"mode", "unsupervised"}, {"iters", a.iters}, {"rho", a.rho}};
    write_manifest(a.out, "train", cfg, {a.data});
    std::cerr << "train(unsupervised): l1 objective " << res.objective_init << " -> "
              << res.objective_final << ", orth error " << res.orth_error << "\n";
    return 0;
  }
  if (a.mode != "supervised") {
    throw std::invalid_argument("train: unknown mode '" + a.mode + "'");
  }

  TrainConfig cfg;
  SgdCheckpoint cp;
  const SgdCheckpoint* resume_ptr = nullptr;
  if (a.resume) {
    std::ifstream in(fs::path(a.out) / "config.json");
    if (!in) throw std::invalid_argument("resume: no config.json in " + a.out);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = train_config_from_json(ss.str());
    if (cmd.count("--threads") > 0) cfg.threads = a.threads;
    cp = load_sgd_checkpoint(a.out);
    int total = 0;
    for (const auto& ph : cfg.schedule) total += ph.iterations;
    if (cp.completed_iters >= total) {
      std::cerr << "train: schedule already complete (" << cp.completed_iters
                << " iterations)\n";
      return 0;
    }
    resume_ptr = &cp;
  } else {
    if (a.beta <= 0.0) {
      throw std::invalid_argument("train: supervised mode requires --beta > 0");
    }
    ensure_output_dir(a.out, a.force);
    cfg.beta = a.beta;
    cfg.step_size = a.step;
    if (!a.schedule.empty()) cfg.schedule = parse_schedule(a.schedule);
    cfg.seed = a.seed;
    cfg.init = a.init;
    cfg.threads = a.threads;
  }

  std::ofstream diag(fs::path(a.out) / "diagnostics.jsonl",
                     a.resume ? std::ios::app : std::ios::out);
  StepObserver observer = [&diag](int iter, const std::vector<int>& batch,
                                  const std::vector<GradResult>& results) {
    for (std::size_t i = 0; i < results.size(); ++i) {
      diag << "{\"iter\":" << iter + 1 << ",\"pair\":" << batch[i] << ","
           << to_json_line(results[i].diag).substr(1) << "\n";
    }
  };

  const TrainRun run = sgd_train(ds, cfg, resume_ptr, observer);
  save_train_run(a.out, cfg, run);
  write_manifest(a.out, "train", json::parse(train_config_to_json(cfg)), {a.data});
  std::cerr << "train(supervised): " << run.loss_log.size() << " iterations, final fb in "
            << a.out << "/fb_final.json\n";
  if (run.unreliable) {
    throw ReliabilityError("train: run marked unreliable (" +
                           std::to_string(run.flagged_steps) + " flagged steps)");
  }
  return 0;
}

// ------------------------------------------------------------------ denoise

struct DenoiseArgs {
  std::string data;
  std::string op;
  std::string out;
  std::string config;
  double beta = -1.0;
  int index = -1;  // all
  int threads = 1;
  bool pgm = false;
  bool force = false;
  int admm_outer = 400;
  int admm_inner = 40;
  double split_tol = 1e-8;
};

int run_denoise(const CLI::App& cmd, DenoiseArgs a) {
  if (!a.config.empty()) {
    const json j = load_config_file(a.config);
    cfg_default(cmd, "--op", j, "op", a.op);
    cfg_default(cmd, "--beta", j, "beta", a.beta);
    cfg_default(cmd, "--index", j, "index", a.index);
    cfg_default(cmd, "--threads", j, "threads", a.threads);
    cfg_default(cmd, "--admm-outer", j, "admm_outer", a.admm_outer);
    cfg_default(cmd, "--admm-inner", j, "admm_inner", a.admm_inner);
    cfg_default(cmd, "--split-tol", j, "split_tol", a.split_tol);
  }
  if (a.beta < 0.0) throw std::invalid_argument("denoise: --beta required");
  const Dataset ds = load_dataset(a.data);
  const FilterBank fb = filterbank_for_kind(a.op);
  require(ds.meta.side >= fb.filter_size, "denoise: dataset images smaller than filters");
  ensure_output_dir(a.out, a.force);

  std::vector<int> indices;
  if (a.index >= 0) {
    require(a.index < ds.meta.count, "denoise: --index out of range");
    indices.push_back(a.index);
  } else {
    for (int t = 0; t < ds.meta.count; ++t) indices.push_back(t);
  }

  DenoiseConfig dcfg;
  dcfg.beta = a.beta;
  dcfg.outer_iters = a.admm_outer;
  dcfg.inner_cg_iters = a.admm_inner;
  dcfg.split_tol = a.split_tol;
  dcfg.track_cost = false;

  std::vector<Image> recons(indices.size());
  parallel_for(static_cast<int>(indices.size()), a.threads, [&](int i) {
    recons[i] = admm_denoise(fb, ds.pairs[indices[i]].second, dcfg).x;
  });
  for (std::size_t i = 0; i < indices.size(); ++i) {
    write_image_raw(fs::path(a.out) / recon_filename(indices[i]), recons[i]);
    if (a.pgm) {
      write_pgm((fs::path(a.out) / (recon_filename(indices[i]) + ".pgm")).string(),
                recons[i], kRenderImageLo, kRenderImageHi);
    }
  }
  const json cfg = {{"op", a.op},
                    {"beta", a.beta},
                    {"index", a.index},
                    {"admm_outer", a.admm_outer},
                    {"admm_inner", a.admm_inner},
                    {"split_tol", a.split_tol}};
  write_manifest(a.out, "denoise", cfg, {a.data});
  std::cerr << "denoise: wrote " << indices.size() << " reconstructions to " << a.out
            << "\n";
  return 0;
}

// -------------------------------------------------------------------- sweep

struct SweepArgs {
  std::string data;
  std::string op;
  std::string out;
  std::string config;
  std::string betas;  // explicit comma list, overrides the log grid
  double beta_min = 1e-3;
  double beta_max = 1.0;
  int beta_count = 15;
  int threads = 1;
  bool force = false;
  double split_tol = 1e-6;
};

int run_sweep(const CLI::App& cmd, SweepArgs a) {
  if (!a.config.empty()) {
    const json j = load_config_file(a.config);
    cfg_default(cmd, "--op", j, "op", a.op);
    cfg_default(cmd, "--betas", j, "betas", a.betas);
    cfg_default(cmd, "--beta-min", j, "beta_min", a.beta_min);
    cfg_default(cmd, "--beta-max", j, "beta_max", a.beta_max);
    cfg_default(cmd, "--beta-count", j, "beta_count", a.beta_count);
    cfg_default(cmd, "--threads", j, "threads", a.threads);
    cfg_default(cmd, "--split-tol", j, "split_tol", a.split_tol);
  }
  const Dataset ds = load_dataset(a.data);
  const FilterBank fb = filterbank_for_kind(a.op);
  ensure_output_dir(a.out, a.force);

  std::vector<double> grid;
  if (!a.betas.empty()) {
    std::stringstream ss(a.betas);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
  } else {
    require(a.beta_count >= 1 && a.beta_min > 0 && a.beta_max >= a.beta_min,
            "sweep: invalid beta grid");
    for (int i = 0; i < a.beta_count; ++i) {
      const double t = a.beta_count == 1 ? 0.0
                                         : static_cast<double>(i) / (a.beta_count - 1);
      grid.push_back(a.beta_min * std::pow(a.beta_max / a.beta_min, t));
    }
  }

  DenoiseConfig base;
  base.split_tol = a.split_tol;
  base.track_cost = false;
  const SweepResult res = beta_sweep(fb, ds, grid, base, a.threads);

  std::ofstream(fs::path(a.out) / "sweep.csv") << sweep_to_csv(res);
  double best_snr = 0.0;
  for (const auto& e : res.table) {
    if (e.beta == res.best_beta) best_snr = e.snr_db;
  }
  json best = {{"best_beta", res.best_beta}, {"best_snr_db", best_snr}};
  std::ofstream(fs::path(a.out) / "best.json") << best.dump(2) << "\n";
  const json cfg = {{"op", a.op}, {"grid", grid}, {"split_tol", a.split_tol}};
  write_manifest(a.out, "sweep", cfg, {a.data});
  std::cout << "best_beta " << res.best_beta << " snr_db " << best_snr << "\n";
  return 0;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::vector<std::string> recons;  // label=dir
  std::string out;
  bool force = false;
};

int run_eval(const CLI::App&, EvalArgs a) {
  const Dataset ds = load_dataset(a.data);
  ensure_output_dir(a.out, a.force);

  std::vector<Image> truths, noisy;
  for (const auto& pr : ds.pairs) {
    truths.push_back(pr.first);
    noisy.push_back(pr.second);
  }

  std::vector<MetricReport> reports;
  reports.push_back(make_report("input", noisy, truths));
  for (const auto& spec : a.recons) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("eval: --recon expects label=dir, got '" + spec + "'");
    }
    const std::string label = spec.substr(0, eq);
    const std::string dir = spec.substr(eq + 1);
    std::vector<Image> recon_imgs;
    for (int t = 0; t < ds.meta.count; ++t) {
      recon_imgs.push_back(read_image_raw(fs::path(dir) / recon_filename(t), ds.meta.side));
    }
    reports.push_back(make_report(label, recon_imgs, truths));
  }

  std::ofstream csv(fs::path(a.out) / "report.csv");
  csv << report_csv_header() << "\n";
  for (const auto& r : reports) csv << report_to_csv_row(r) << "\n";
  json all = json::array();
  for (const auto& r : reports) all.push_back(json::parse(report_to_json(r)));
  std::ofstream(fs::path(a.out) / "report.json") << all.dump(2) << "\n";

  std::vector<std::string> inputs = {a.data};
  for (const auto& spec : a.recons) inputs.push_back(spec.substr(spec.find('=') + 1));
  write_manifest(a.out, "eval", {{"recons", a.recons}}, inputs);

  for (const auto& r : reports) {
    std::cout << r.method << " ";
    if (r.snr_total.infinite) {
      std::cout << "inf";
    } else {
      std::cout << r.snr_total.db;
    }
    std::cout << " dB\n";
  }
  return 0;
}

// ------------------------------------------------------------------- render

struct RenderArgs {
  std::string op;
  std::string data;
  std::string recon;
  std::string out;
  int index = 0;
  bool force = false;
};

int run_render(const CLI::App&, RenderArgs a) {
  const FilterBank fb = filterbank_for_kind(a.op);
  ensure_output_dir(a.out, a.force);
  render_filter_tiles(fb, a.out, "filter");

  std::vector<std::string> inputs;
  if (!a.data.empty()) {
    const Dataset ds = load_dataset(a.data);
    require(a.index >= 0 && a.index < ds.meta.count, "render: --index out of range");
    const Image& clean = ds.pairs[a.index].first;
    write_pgm((fs::path(a.out) / "clean.pgm").string(), clean, kRenderImageLo,
              kRenderImageHi);
    write_pgm((fs::path(a.out) / "noisy.pgm").string(), ds.pairs[a.index].second,
              kRenderImageLo, kRenderImageHi);
    write_pgm((fs::path(a.out) / "response.pgm").string(), response_map(fb, clean),
              kRenderResponseLo, kRenderResponseHi);
    inputs.push_back(a.data);
    if (!a.recon.empty()) {
      const Image recon =
          read_image_raw(fs::path(a.recon) / recon_filename(a.index), ds.meta.side);
      write_pgm((fs::path(a.out) / "recon.pgm").string(), recon, kRenderImageLo,
                kRenderImageHi);
      write_pgm((fs::path(a.out) / "error.pgm").string(), error_map(recon, clean),
                kRenderErrorLo, kRenderErrorHi);
      inputs.push_back(a.recon);
    }
  }
  write_manifest(a.out, "render", {{"op", a.op}, {"index", a.index}}, inputs);
  std::cerr << "render: wrote artifacts to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised learning of convolutional sparsifying analysis operators "
               "for image denoising"};
  app.set_version_flag("--version", std::string("analearn ") + kToolVersion);
  app.require_subcommand(1);

  GenDataArgs ga;
  auto* gen = app.add_subcommand("gen-data", "Generate a dead-leaves dataset");
  gen->add_option("--out", ga.out, "output dataset directory")->required();
  gen->add_option("--seed", ga.seed, "RNG seed");
  gen->add_option("--split", ga.split, "train|test label")
      ->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--count", ga.count, "number of image pairs");
  gen->add_option("--side", ga.side, "image side length");
  gen->add_option("--sigma", ga.sigma, "noise standard deviation");
  gen->add_option("--rects", ga.n_rects, "rectangles per image");
  gen->add_flag("--pgm", ga.pgm, "also write PGM previews");
  gen->add_flag("--force", ga.force, "allow writing into a nonempty directory");
  gen->add_option("--config", ga.config, "JSON config file (flags override)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train an analysis operator");
  tr->add_option("--data", ta.data, "training dataset directory")->required();
  tr->add_option("--out", ta.out, "run output directory")->required();
  tr->add_option("--mode", ta.mode, "supervised|unsupervised")
      ->check(CLI::IsMember({"supervised", "unsupervised"}));
  tr->add_option("--beta", ta.beta, "regularization strength (supervised)");
  tr->add_option("--schedule", ta.schedule, "e.g. 1x5000,5x2500,10x2500");
  tr->add_option("--step", ta.step, "SGD step size");
  tr->add_option("--seed", ta.seed, "shuffling seed");
  tr->add_option("--init", ta.init, "dct-nonconstant|dct|tv|<fb file>");
  tr->add_option("--threads", ta.threads, "worker threads for batch gradients");
  tr->add_option("--iters", ta.iters, "unsupervised outer iterations");
  tr->add_option("--rho", ta.rho, "unsupervised ADMM penalty");
  tr->add_flag("--resume", ta.resume, "continue a saved run in --out");
  tr->add_flag("--force", ta.force, "allow writing into a nonempty directory");
  tr->add_option("--config", ta.config, "JSON config file (flags override)");

  DenoiseArgs da;
  auto* dn = app.add_subcommand("denoise", "Denoise a dataset with an operator");
  dn->add_option("--data", da.data, "dataset directory")->required();
  dn->add_option("--op", da.op, "tv|dct|<fb file>")->required();
  dn->add_option("--out", da.out, "output directory")->required();
  dn->add_option("--beta", da.beta, "regularization strength");
  dn->add_option("--index", da.index, "single pair index (default: all)");
  dn->add_option("--threads", da.threads, "worker threads");
  dn->add_flag("--pgm", da.pgm, "also write PGM previews");
  dn->add_flag("--force", da.force, "allow writing into a nonempty directory");
  dn->add_option("--admm-outer", da.admm_outer, "ADMM outer iterations");
  dn->add_option("--admm-inner", da.admm_inner, "x-update CG iteration cap");
  dn->add_option("--split-tol", da.split_tol, "ADMM stopping tolerance");
  dn->add_option("--config", da.config, "JSON config file (flags override)");

  SweepArgs sa;
  auto* sw = app.add_subcommand("sweep", "Sweep beta and report the SNR-optimal value");
  sw->add_option("--data", sa.data, "dataset directory")->required();
  sw->add_option("--op", sa.op, "tv|dct|<fb file>")->required();
  sw->add_option("--out", sa.out, "output directory")->required();
  sw->add_option("--betas", sa.betas, "explicit comma-separated beta list");
  sw->add_option("--beta-min", sa.beta_min, "log grid lower end");
  sw->add_option("--beta-max", sa.beta_max, "log grid upper end");
  sw->add_option("--beta-count", sa.beta_count, "log grid size");
  sw->add_option("--threads", sa.threads, "worker threads");
  sw->add_flag("--force", sa.force, "allow writing into a nonempty directory");
  sw->add_option("--split-tol", sa.split_tol, "ADMM stopping tolerance");
  sw->add_option("--config", sa.config, "JSON config file (flags override)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score reconstructions against ground truth");
  ev->add_option("--data", ea.data, "dataset directory")->required();
  ev->add_option("--recon", ea.recons, "label=dir of reconstructions (repeatable)");
  ev->add_option("--out", ea.out, "output directory")->required();
  ev->add_flag("--force", ea.force, "allow writing into a nonempty directory");

  RenderArgs ra;
  auto* rn = app.add_subcommand("render", "Render filter tiles, response and error maps");
  rn->add_option("--op", ra.op, "tv|dct|<fb file>")->required();
  rn->add_option("--data", ra.data, "dataset directory (for response map)");
  rn->add_option("--recon", ra.recon, "reconstruction directory (for error map)");
  rn->add_option("--index", ra.index, "image index");
  rn->add_option("--out", ra.out, "output directory")->required();
  rn->add_flag("--force", ra.force, "allow writing into a nonempty directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_gen_data(*gen, ga);
    if (tr->parsed()) return run_train(*tr, ta);
    if (dn->parsed()) return run_denoise(*dn, da);
    if (sw->parsed()) return run_sweep(*sw, sa);
    if (ev->parsed()) return run_eval(*ev, ea);
    if (rn->parsed()) return run_render(*rn, ra);
  } catch (const ReliabilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
