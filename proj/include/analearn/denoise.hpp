#pragma once

#include <limits>
#include <string>
#include <vector>

#include "analearn/image.hpp"
#include "analearn/imgops.hpp"

namespace analearn {

/// ADMM state for J(x) = 1/2 ||x - y||^2 + beta ||W x||_1 with the split
/// z = W x and scaled dual u. z holds exact zeros (soft-threshold output),
/// which downstream sign extraction relies on. Persisted for warm starts.
struct AdmmState {
  Image x;
  CoeffStack z;
  CoeffStack u;
  double rho = 1.0;
  int iters_run = 0;
  std::vector<double> cost_history;

  // diagnostics
  double split_residual = std::numeric_limits<double>::infinity();  // ||Wx - z||_inf
  double dual_residual = std::numeric_limits<double>::infinity();
  bool converged = false;       // both residuals under split_tol at exit
  bool cg_clean = true;         // false if the final x-update hit the CG cap
  int total_cg_iters = 0;
};

struct DenoiseConfig {
  double beta = 0.1;
  double rho = 1.0;
  int outer_iters = 400;
  int inner_cg_iters = 40;
  double cg_tol = 1e-10;        // relative residual for the x-update CG
  double split_tol = 1e-8;      // inf-norm stop for primal/dual residuals
  bool track_cost = true;
  const AdmmState* warm = nullptr;
};

/// Solves min_x 1/2 ||x - y||^2 + beta ||W x||_1 by ADMM. The x-update solves
/// (I + rho W^T W) x = y + rho W^T (z - u) by warm-started CG, the z-update is
/// soft thresholding at beta/rho, the u-update the standard scaled-dual step.
/// Stops early once both residual inf-norms are below split_tol. Throws on
/// NaN iterates or invalid configs.
AdmmState admm_denoise(const FilterBank& fb, const Image& y, const DenoiseConfig& cfg);

/// Closed form for the 1-pixel, 1-filter problem
/// argmin_x 1/2 (x - y)^2 + beta |w x|: for y >= 0 this is max(y - beta|w|, 0)
/// and the mirror image for y < 0. Oracle for the full solver and the
/// gradient module.
double scalar_denoise(double w, double y, double beta);

/// J(x, W, y) = 1/2 ||x - y||^2 + beta ||W x||_1.
double analysis_cost(const FilterBank& fb, const Image& x, const Image& y, double beta);

/// Convenience dispatch: kind is "tv", "dct", or a filter-bank file path.
Image denoise_with_operator(const std::string& kind, const Image& y, double beta,
                            const DenoiseConfig* base_cfg = nullptr);

FilterBank filterbank_for_kind(const std::string& kind);

}  // namespace analearn
