#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "analearn/datagen.hpp"
#include "analearn/kktgrad.hpp"

namespace analearn {

struct BatchPhase {
  int batch_size = 1;
  int iterations = 0;
};

/// Parses "1x5000,5x2500,10x2500".
std::vector<BatchPhase> parse_schedule(const std::string& text);
std::string schedule_to_string(const std::vector<BatchPhase>& schedule);

struct TrainConfig {
  double beta = 0.1;
  double step_size = 2.0;
  std::vector<BatchPhase> schedule = {{1, 5000}, {5, 2500}, {10, 2500}};
  std::uint64_t seed = 0;
  KktGradConfig solver;
  std::string init = "dct-nonconstant";  // or a filter bank file path
  int threads = 1;
  int snapshot_every = 100;
  double max_flagged_fraction = 0.1;  // above this the run is marked unreliable
};

/// Without-replacement batch sampler: shuffles a fresh permutation of the
/// pair indices each epoch (Fisher-Yates over SplitMix64) and hands out
/// consecutive slices. State is exposed for exact checkpoint/resume.
class EpochSampler {
 public:
  EpochSampler(int count, std::uint64_t seed);
  std::vector<int> next_batch(int batch_size);

  std::uint64_t rng_state() const { return rng_.state(); }
  const std::vector<int>& permutation() const { return perm_; }
  int position() const { return pos_; }
  void restore(std::uint64_t rng_state, std::vector<int> perm, int pos);

 private:
  void reshuffle();
  SplitMix64 rng_;
  std::vector<int> perm_;
  int pos_ = 0;
};

struct SgdCheckpoint {
  int completed_iters = 0;
  FilterBank fb;
  std::vector<AdmmState> warm;  // empty means cold start
  std::uint64_t sampler_state = 0;
  std::vector<int> sampler_perm;
  int sampler_pos = 0;
};

struct TrainRun {
  FilterBank final_fb;
  std::vector<std::pair<int, FilterBank>> snapshots;  // (iteration, theta)
  std::vector<double> loss_log;        // batch-mean 1/2||x*-x_t||^2 per iteration
  std::vector<double> admm_iters_log;  // batch-mean ADMM outer iterations
  std::vector<AdmmState> warm_cache;   // per training pair
  int flagged_steps = 0;
  bool unreliable = false;
  SgdCheckpoint checkpoint;            // state to persist for resume
};

using StepObserver =
    std::function<void(int iter, const std::vector<int>& batch,
                       const std::vector<GradResult>& results)>;

/// SGD on Q(theta): theta <- theta - step * (sum_batch grad Q_t) / (n |batch|)
/// with n the pixel count. Warm-starts each pair's ADMM from its cached
/// state. resume, when non-null, restores filters, warm cache and sampler.
TrainRun sgd_train(const Dataset& ds, const TrainConfig& cfg,
                   const SgdCheckpoint* resume = nullptr, StepObserver observer = {});

FilterBank initial_filterbank(const std::string& init);

struct UnsupervisedConfig {
  int outer_iters = 200;
  double rho = 1.0;
};

struct UnsupervisedResult {
  FilterBank bank;       // constant filter removed (K = 8)
  FilterBank full_bank;  // all 9 orthonormal filters
  double objective_init = 0.0;   // sum_t ||W x_t||_1 at the DCT initialization
  double objective_final = 0.0;  // at the returned filters
  double orth_error = 0.0;       // ||F F^T - I||_inf for the flattened bank
};

/// Orthogonality-constrained analysis learning on clean images: ADMM with
/// splits z_t = W x_t, least-squares filter update, and an orthogonal
/// Procrustes projection (SVD, F <- U V^T) each outer iteration, initialized
/// at the full 3x3 DCT. Keeps the best-objective iterate, then drops the
/// constant filter.
UnsupervisedResult unsupervised_train(const std::vector<Image>& clean,
                                      const UnsupervisedConfig& cfg = {});

struct SweepEntry {
  double beta = 0.0;
  double snr_db = 0.0;
};

struct SweepResult {
  double best_beta = 0.0;
  std::vector<SweepEntry> table;  // ascending beta
};

/// 15 log-spaced points over [1e-3, 1].
std::vector<double> default_beta_grid();

/// Denoises every pair at each beta (per-image warm starts across the
/// ascending grid) and returns the argmax-SNR beta with the full table.
SweepResult beta_sweep(const FilterBank& fb, const Dataset& ds,
                       const std::vector<double>& grid, const DenoiseConfig& base,
                       int threads = 1);

std::string sweep_to_csv(const SweepResult& s);

// --- TrainRun persistence (config.json, loss.csv, snapshots/, warm/) ---

void save_train_run(const std::string& dir, const TrainConfig& cfg,
                    const TrainRun& run);
/// Loads the state needed to continue a saved run; throws if absent.
SgdCheckpoint load_sgd_checkpoint(const std::string& dir);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace analearn
