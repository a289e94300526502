#include "analearn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "analearn/imgops.hpp"
#include "analearn/parallel.hpp"
#include "analearn/vecmath.hpp"

namespace fs = std::filesystem;

namespace analearn {

std::vector<BatchPhase> parse_schedule(const std::string& text) {
  std::vector<BatchPhase> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) {
      throw std::invalid_argument("schedule: expected BATCHxITERS, got '" + item + "'");
    }
    BatchPhase ph;
    ph.batch_size = std::stoi(item.substr(0, x));
    ph.iterations = std::stoi(item.substr(x + 1));
    if (ph.batch_size < 1 || ph.iterations < 0) {
      throw std::invalid_argument("schedule: invalid phase '" + item + "'");
    }
    out.push_back(ph);
  }
  if (out.empty()) throw std::invalid_argument("schedule: empty");
  return out;
}

std::string schedule_to_string(const std::vector<BatchPhase>& schedule) {
  std::string out;
  for (const auto& ph : schedule) {
    if (!out.empty()) out += ",";
    out += std::to_string(ph.batch_size) + "x" + std::to_string(ph.iterations);
  }
  return out;
}

EpochSampler::EpochSampler(int count, std::uint64_t seed)
    : rng_(seed), perm_(count) {
  for (int i = 0; i < count; ++i) perm_[i] = i;
  reshuffle();
}

void EpochSampler::reshuffle() {
  for (int i = static_cast<int>(perm_.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng_.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm_[i], perm_[j]);
  }
  pos_ = 0;
}

std::vector<int> EpochSampler::next_batch(int batch_size) {
  require(batch_size >= 1 && batch_size <= static_cast<int>(perm_.size()),
          "EpochSampler: batch size exceeds dataset size");
  if (pos_ + batch_size > static_cast<int>(perm_.size())) reshuffle();
  std::vector<int> batch(perm_.begin() + pos_, perm_.begin() + pos_ + batch_size);
  pos_ += batch_size;
  return batch;
}

void EpochSampler::restore(std::uint64_t rng_state, std::vector<int> perm, int pos) {
  rng_.set_state(rng_state);
  perm_ = std::move(perm);
  pos_ = pos;
}

FilterBank initial_filterbank(const std::string& init) {
  if (init == "dct-nonconstant") return make_dct_filterbank(false);
  if (init == "dct") return make_dct_filterbank(true);
  if (init == "tv") return make_tv_filterbank();
  return load_filterbank(init);
}

TrainRun sgd_train(const Dataset& ds, const TrainConfig& cfg,
                   const SgdCheckpoint* resume, StepObserver observer) {
  require(!ds.pairs.empty(), "sgd_train: empty dataset");
  require(cfg.beta > 0.0, "sgd_train: beta must be > 0");
  require(cfg.step_size >= 0.0, "sgd_train: step size must be >= 0");
  require(!cfg.schedule.empty(), "sgd_train: empty schedule");

  const int pair_count = static_cast<int>(ds.pairs.size());
  const double pixels = static_cast<double>(ds.pairs[0].first.size());

  TrainRun run;
  EpochSampler sampler(pair_count, cfg.seed);
  int start_iter = 0;
  if (resume != nullptr) {
    run.final_fb = resume->fb;
    run.warm_cache = resume->warm;
    run.warm_cache.resize(pair_count);
    sampler.restore(resume->sampler_state, resume->sampler_perm, resume->sampler_pos);
    start_iter = resume->completed_iters;
  } else {
    run.final_fb = initial_filterbank(cfg.init);
    run.warm_cache.resize(pair_count);
  }
  FilterBank& fb = run.final_fb;

  int total_iters = 0;
  for (const auto& ph : cfg.schedule) total_iters += ph.iterations;

  int iter = 0;
  for (const auto& phase : cfg.schedule) {
    for (int k = 0; k < phase.iterations; ++k, ++iter) {
      if (iter < start_iter) continue;  // resumed past this step; sampler state
                                        // was restored, no replay needed
      const std::vector<int> batch = sampler.next_batch(phase.batch_size);
      std::vector<GradResult> results(batch.size());
      parallel_for(static_cast<int>(batch.size()), cfg.threads, [&](int bi) {
        const int t = batch[bi];
        results[bi] = loss_and_gradient(fb, ds.pairs[t].first, ds.pairs[t].second,
                                        cfg.beta, cfg.solver, &run.warm_cache[t]);
      });

      double loss_sum = 0.0, admm_sum = 0.0;
      bool flagged = false;
      FilterBank grad_sum(fb.num_filters, fb.filter_size);
      for (const auto& r : results) {
        loss_sum += r.loss;
        admm_sum += r.diag.admm_iters;
        flagged = flagged || r.diag.rank_flag || r.diag.accuracy_flag;
        axpy(1.0, r.grad.coeffs, grad_sum.coeffs);
      }
      const double scale_step =
          cfg.step_size / (pixels * static_cast<double>(batch.size()));
      axpy(-scale_step, grad_sum.coeffs, fb.coeffs);

      run.loss_log.push_back(loss_sum / static_cast<double>(batch.size()));
      run.admm_iters_log.push_back(admm_sum / static_cast<double>(batch.size()));
      if (flagged) ++run.flagged_steps;
      if (observer) observer(iter, batch, results);
      if (cfg.snapshot_every > 0 && (iter + 1) % cfg.snapshot_every == 0) {
        run.snapshots.emplace_back(iter + 1, fb);
      }
    }
  }

  const int steps_run = static_cast<int>(run.loss_log.size());
  run.unreliable =
      steps_run > 0 &&
      run.flagged_steps > cfg.max_flagged_fraction * static_cast<double>(steps_run);

  run.checkpoint.completed_iters = total_iters;
  run.checkpoint.fb = fb;
  run.checkpoint.warm = run.warm_cache;
  run.checkpoint.sampler_state = sampler.rng_state();
  run.checkpoint.sampler_perm = sampler.permutation();
  run.checkpoint.sampler_pos = sampler.position();
  return run;
}

UnsupervisedResult unsupervised_train(const std::vector<Image>& clean,
                                      const UnsupervisedConfig& cfg) {
  require(!clean.empty(), "unsupervised_train: empty image list");
  require(cfg.rho > 0.0, "unsupervised_train: rho must be > 0");
  const int f = 3, p = 9;
  const int n = clean[0].side;
  require(n >= f, "unsupervised_train: images smaller than filters");
  const int m = n - f + 1;
  const long rows = static_cast<long>(clean.size()) * m * m;

  // Stacked patch matrix: row (t,i,j) holds the 3x3 patch at (i,j) of image t
  // flattened row-major, so P * theta_c reproduces channel c of W x_t.
  Eigen::MatrixXd patches(rows, p);
  long r = 0;
  for (const auto& img : clean) {
    require(img.side == n, "unsupervised_train: mixed image sizes");
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j, ++r) {
        for (int a = 0; a < f; ++a)
          for (int b = 0; b < f; ++b) patches(r, a * f + b) = img(i + a, j + b);
      }
    }
  }

  const FilterBank dct = make_dct_filterbank(true);
  Eigen::MatrixXd filters(p, p);  // rows are filters
  for (int c = 0; c < p; ++c)
    for (int q = 0; q < p; ++q) filters(c, q) = dct.coeffs[c * p + q];

  const auto objective = [&](const Eigen::MatrixXd& flt) {
    return (patches * flt.transpose()).array().abs().sum();
  };

  const Eigen::MatrixXd gram = patches.transpose() * patches;
  const Eigen::LDLT<Eigen::MatrixXd> gram_ldlt(gram);
  if (gram_ldlt.info() != Eigen::Success) {
    throw std::runtime_error("unsupervised_train: degenerate patch Gram matrix");
  }

  UnsupervisedResult result;
  result.objective_init = objective(filters);
  Eigen::MatrixXd best = filters;
  double best_obj = result.objective_init;

  const double thresh = 1.0 / cfg.rho;
  Eigen::MatrixXd responses = patches * filters.transpose();
  Eigen::MatrixXd splits(rows, p), duals = Eigen::MatrixXd::Zero(rows, p);

  for (int it = 0; it < cfg.outer_iters; ++it) {
    // split update: elementwise soft threshold at 1/rho
    splits = responses + duals;
    splits = (splits.array().sign() * (splits.array().abs() - thresh).max(0.0)).matrix();

    // filter update: least squares, then the orthogonal Procrustes projection
    const Eigen::MatrixXd target = splits - duals;
    const Eigen::MatrixXd ls = gram_ldlt.solve(patches.transpose() * target);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ls.transpose(),
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-12 * sv(0)) {
      throw std::runtime_error("unsupervised_train: degenerate filter update (SVD)");
    }
    filters = svd.matrixU() * svd.matrixV().transpose();

    responses = patches * filters.transpose();
    duals += responses - splits;

    const double obj = responses.array().abs().sum();
    if (obj < best_obj) {
      best_obj = obj;
      best = filters;
    }
  }

  result.objective_final = best_obj;
  result.orth_error = (best * best.transpose() - Eigen::MatrixXd::Identity(p, p))
                          .array().abs().maxCoeff();

  result.full_bank = FilterBank(p, f);
  for (int c = 0; c < p; ++c)
    for (int q = 0; q < p; ++q) result.full_bank.coeffs[c * p + q] = best(c, q);

  // drop the first (constant) filter
  result.bank = FilterBank(p - 1, f);
  for (int c = 1; c < p; ++c)
    for (int q = 0; q < p; ++q) result.bank.coeffs[(c - 1) * p + q] = best(c, q);
  return result;
}

std::vector<double> default_beta_grid() {
  std::vector<double> grid(15);
  for (int i = 0; i < 15; ++i) grid[i] = std::pow(10.0, -3.0 + 3.0 * i / 14.0);
  return grid;
}

SweepResult beta_sweep(const FilterBank& fb, const Dataset& ds,
                       const std::vector<double>& grid, const DenoiseConfig& base,
                       int threads) {
  require(!grid.empty(), "beta_sweep: empty grid");
  for (double b : grid) require(b > 0.0, "beta_sweep: betas must be positive");
  std::vector<double> betas = grid;
  std::sort(betas.begin(), betas.end());

  const int pair_count = static_cast<int>(ds.pairs.size());
  const int beta_count = static_cast<int>(betas.size());
  std::vector<double> sq_err(static_cast<std::size_t>(pair_count) * beta_count, 0.0);

  parallel_for(pair_count, threads, [&](int t) {
    const Image& clean = ds.pairs[t].first;
    const Image& noisy = ds.pairs[t].second;
    AdmmState warm;
    bool have_warm = false;
    for (int bi = 0; bi < beta_count; ++bi) {
      DenoiseConfig cfg = base;
      cfg.beta = betas[bi];
      cfg.track_cost = false;
      cfg.warm = have_warm ? &warm : nullptr;
      AdmmState st = admm_denoise(fb, noisy, cfg);
      double err = 0.0;
      for (std::size_t i = 0; i < clean.size(); ++i) {
        const double d = st.x.px[i] - clean.px[i];
        err += d * d;
      }
      sq_err[static_cast<std::size_t>(t) * beta_count + bi] = err;
      warm = std::move(st);
      have_warm = true;
    }
  });

  double signal = 0.0;
  for (const auto& pr : ds.pairs)
    for (double v : pr.first.px) signal += v * v;

  SweepResult out;
  out.table.resize(beta_count);
  int best = 0;
  for (int bi = 0; bi < beta_count; ++bi) {
    double err = 0.0;
    for (int t = 0; t < pair_count; ++t)
      err += sq_err[static_cast<std::size_t>(t) * beta_count + bi];
    out.table[bi].beta = betas[bi];
    out.table[bi].snr_db = 10.0 * std::log10(signal) - 10.0 * std::log10(err);
    if (out.table[bi].snr_db > out.table[best].snr_db) best = bi;
  }
  out.best_beta = out.table[best].beta;
  return out;
}

std::string sweep_to_csv(const SweepResult& s) {
  std::ostringstream os;
  os.precision(17);
  os << "beta,snr_db\n";
  for (const auto& e : s.table) os << e.beta << "," << e.snr_db << "\n";
  return os.str();
}

// --- persistence ---

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["beta"] = cfg.beta;
  j["step_size"] = cfg.step_size;
  j["schedule"] = schedule_to_string(cfg.schedule);
  j["seed"] = cfg.seed;
  j["init"] = cfg.init;
  j["threads"] = cfg.threads;
  j["snapshot_every"] = cfg.snapshot_every;
  j["max_flagged_fraction"] = cfg.max_flagged_fraction;
  j["admm"] = {{"rho", cfg.solver.admm.rho},
               {"outer_iters", cfg.solver.admm.outer_iters},
               {"inner_cg_iters", cfg.solver.admm.inner_cg_iters},
               {"cg_tol", cfg.solver.admm.cg_tol},
               {"split_tol", cfg.solver.admm.split_tol}};
  j["kkt"] = {{"tol", cfg.solver.kkt_tol},
              {"max_iters", cfg.solver.kkt_max_iters},
              {"accuracy_tol", cfg.solver.accuracy_tol}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  TrainConfig cfg;
  cfg.beta = j.value("beta", cfg.beta);
  cfg.step_size = j.value("step_size", cfg.step_size);
  if (j.contains("schedule")) cfg.schedule = parse_schedule(j["schedule"].get<std::string>());
  cfg.seed = j.value("seed", cfg.seed);
  cfg.init = j.value("init", cfg.init);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.snapshot_every = j.value("snapshot_every", cfg.snapshot_every);
  cfg.max_flagged_fraction = j.value("max_flagged_fraction", cfg.max_flagged_fraction);
  if (j.contains("admm")) {
    const auto& a = j["admm"];
    cfg.solver.admm.rho = a.value("rho", cfg.solver.admm.rho);
    cfg.solver.admm.outer_iters = a.value("outer_iters", cfg.solver.admm.outer_iters);
    cfg.solver.admm.inner_cg_iters =
        a.value("inner_cg_iters", cfg.solver.admm.inner_cg_iters);
    cfg.solver.admm.cg_tol = a.value("cg_tol", cfg.solver.admm.cg_tol);
    cfg.solver.admm.split_tol = a.value("split_tol", cfg.solver.admm.split_tol);
  }
  if (j.contains("kkt")) {
    const auto& k = j["kkt"];
    cfg.solver.kkt_tol = k.value("tol", cfg.solver.kkt_tol);
    cfg.solver.kkt_max_iters = k.value("max_iters", cfg.solver.kkt_max_iters);
    cfg.solver.accuracy_tol = k.value("accuracy_tol", cfg.solver.accuracy_tol);
  }
  return cfg;
}

namespace {

std::string pair_state_filename(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_%04d.f64", t);
  return buf;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, const std::string& where) {
  const std::streamsize want = static_cast<std::streamsize>(v.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(v.data()), want);
  if (in.gcount() != want) {
    throw std::runtime_error("truncated warm state in " + where + " at byte offset " +
                             std::to_string(in.gcount()));
  }
}

}  // namespace

void save_train_run(const std::string& dir, const TrainConfig& cfg,
                    const TrainRun& run) {
  fs::create_directories(dir);
  fs::create_directories(fs::path(dir) / "snapshots");
  fs::create_directories(fs::path(dir) / "warm");

  {
    std::ofstream out(fs::path(dir) / "config.json");
    out << train_config_to_json(cfg) << "\n";
  }
  {
    const int base = run.checkpoint.completed_iters -
                     static_cast<int>(run.loss_log.size());
    const fs::path loss_path = fs::path(dir) / "loss.csv";
    const bool append = base > 0 && fs::exists(loss_path);
    std::ofstream out(loss_path, append ? std::ios::app : std::ios::out);
    out.precision(17);
    if (!append) out << "iter,loss,mean_admm_iters\n";
    for (std::size_t i = 0; i < run.loss_log.size(); ++i) {
      out << base + static_cast<int>(i) + 1 << "," << run.loss_log[i] << ","
          << run.admm_iters_log[i] << "\n";
    }
  }
  for (const auto& [it, fb] : run.snapshots) {
    char name[48];
    std::snprintf(name, sizeof(name), "fb_%06d.json", it);
    save_filterbank(fb, (fs::path(dir) / "snapshots" / name).string(), "sgd-snapshot");
  }
  save_filterbank(run.final_fb, (fs::path(dir) / "fb_final.json").string(), "sgd-final");

  // warm-start states, one raw block (x | z | u) per solved pair
  nlohmann::json wmeta;
  wmeta["count"] = run.warm_cache.size();
  std::vector<int> present;
  for (std::size_t t = 0; t < run.warm_cache.size(); ++t) {
    if (run.warm_cache[t].x.side > 0) present.push_back(static_cast<int>(t));
  }
  wmeta["present"] = present;
  if (!present.empty()) {
    const auto& s0 = run.warm_cache[present[0]];
    wmeta["side"] = s0.x.side;
    wmeta["channels"] = s0.z.channels;
    wmeta["grid_side"] = s0.z.side;
    wmeta["rho"] = s0.rho;
    for (int t : present) {
      std::ofstream out(fs::path(dir) / "warm" / pair_state_filename(t),
                        std::ios::binary);
      write_doubles(out, run.warm_cache[t].x.px);
      write_doubles(out, run.warm_cache[t].z.values);
      write_doubles(out, run.warm_cache[t].u.values);
    }
  }
  {
    std::ofstream out(fs::path(dir) / "warm" / "meta.json");
    out << wmeta.dump(2) << "\n";
  }

  nlohmann::json st;
  st["completed_iters"] = run.checkpoint.completed_iters;
  st["sampler_state"] = run.checkpoint.sampler_state;
  st["sampler_perm"] = run.checkpoint.sampler_perm;
  st["sampler_pos"] = run.checkpoint.sampler_pos;
  st["unreliable"] = run.unreliable;
  st["flagged_steps"] = run.flagged_steps;
  {
    std::ofstream out(fs::path(dir) / "train_state.json");
    out << st.dump(2) << "\n";
  }
}

SgdCheckpoint load_sgd_checkpoint(const std::string& dir) {
  SgdCheckpoint cp;
  {
    std::ifstream in(fs::path(dir) / "train_state.json");
    if (!in) throw std::runtime_error("resume: no train_state.json in " + dir);
    nlohmann::json st;
    in >> st;
    cp.completed_iters = st.at("completed_iters").get<int>();
    cp.sampler_state = st.at("sampler_state").get<std::uint64_t>();
    cp.sampler_perm = st.at("sampler_perm").get<std::vector<int>>();
    cp.sampler_pos = st.at("sampler_pos").get<int>();
  }
  cp.fb = load_filterbank((fs::path(dir) / "fb_final.json").string());

  std::ifstream min(fs::path(dir) / "warm" / "meta.json");
  if (min) {
    nlohmann::json wmeta;
    min >> wmeta;
    const int count = wmeta.value("count", 0);
    const auto present = wmeta.value("present", std::vector<int>{});
    if (count > 0 && !present.empty() && wmeta.contains("side")) {
      const int side = wmeta["side"].get<int>();
      const int channels = wmeta["channels"].get<int>();
      const int grid_side = wmeta["grid_side"].get<int>();
      const double rho = wmeta["rho"].get<double>();
      cp.warm.resize(count);
      for (int t : present) {
        const auto path = fs::path(dir) / "warm" / pair_state_filename(t);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("resume: cannot open " + path.string());
        AdmmState& s = cp.warm[t];
        s.x = Image(side);
        s.z = CoeffStack(channels, grid_side);
        s.u = CoeffStack(channels, grid_side);
        s.rho = rho;
        read_doubles(in, s.x.px, path.string());
        read_doubles(in, s.z.values, path.string());
        read_doubles(in, s.u.values, path.string());
      }
    }
  }
  return cp;
}

}  // namespace analearn
