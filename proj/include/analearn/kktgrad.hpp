#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "analearn/denoise.hpp"
#include "analearn/image.hpp"

namespace analearn {

/// Sign pattern c = sign(W x*) over the flattened coefficient grid
/// (CoeffStack layout). The selection matrices S0 and S+- are realized as
/// gather/scatter operations keyed on this pattern, never stored.
struct SignPattern {
  int channels = 0;
  int grid_side = 0;               // CoeffStack side
  std::vector<std::int8_t> c;      // length k, values in {-1, 0, +1}
  std::vector<std::size_t> zero_idx;  // positions with c == 0, ascending

  std::size_t k() const { return c.size(); }
  std::size_t k_zero() const { return zero_idx.size(); }
  std::size_t k_nonzero() const { return c.size() - zero_idx.size(); }
  int k_neg = 0;
  int k_pos = 0;
};

/// Pattern from the exact zeros of the ADMM split variable (the normative
/// path; soft thresholding makes those zeros exact).
SignPattern extract_sign_pattern(const AdmmState& state);

/// Fallback: pattern from |W x| <= threshold.
SignPattern extract_sign_pattern_thresholded(const FilterBank& fb, const Image& x,
                                             double threshold = 1e-8);

/// Vector in the KKT unknown space: z = [x; nu], total length n + k_zero.
struct KktVector {
  Image x_part;
  std::vector<double> nu_part;
};

/// S0^T v: scatter nu-length values into the zero slots of the grid.
CoeffStack scatter_zero(const SignPattern& p, const std::vector<double>& nu);
/// S0 w: gather the zero-slot entries of a coefficient stack.
std::vector<double> gather_zero(const SignPattern& p, const CoeffStack& w);
/// S+-^T 1: the sign values c scattered onto the grid (zeros stay zero).
CoeffStack sign_coeffs(const SignPattern& p);

/// A v with A = [[I, W^T S0^T], [S0 W, 0]]; symmetric.
KktVector kkt_apply(const FilterBank& fb, const SignPattern& p, const KktVector& v);

/// b = [y - beta W^T S+-^T 1; 0].
KktVector kkt_rhs(const FilterBank& fb, const SignPattern& p, const Image& y,
                  double beta);

struct KktSolveResult {
  KktVector z;
  int iters = 0;
  double rel_residual = 0.0;  // ||A z - b|| / ||b||
  bool rank_flag = false;     // residual stagnated above tol (S0 W rank deficient
                              // or inconsistent right-hand side)
};

/// CG on the normal equations A^T A z = A^T b (A symmetric, so A(A .)),
/// tracking the true residual b - A z; two kkt_apply calls per iteration.
KktSolveResult solve_kkt_system(const FilterBank& fb, const SignPattern& p,
                                const KktVector& b, double tol = 1e-10,
                                int max_iters = 2000);

/// Theorem-1 solve: z = [x*; nu] with ||A z - b|| <= tol ||b||.
KktSolveResult solve_kkt(const FilterBank& fb, const SignPattern& p, const Image& y,
                         double beta, double tol = 1e-10, int max_iters = 2000);

struct GradDiagnostics {
  std::size_t k_zero = 0;
  int cg_iters = 0;            // both KKT solves combined
  int admm_iters = 0;
  double admm_residual = 0.0;  // split residual at ADMM exit
  double kkt_residual = 0.0;   // worst relative residual of the two solves
  bool rank_flag = false;
  bool accuracy_flag = false;  // ADMM split residual above the accuracy tolerance
};

/// One diagnostics record as a JSON line (no trailing newline).
std::string to_json_line(const GradDiagnostics& d);

struct GradResult {
  double loss = 0.0;      // 1/2 ||x* - x_t||^2
  FilterBank grad;        // d loss / d theta; zeroed when rank_flag is set
  GradDiagnostics diag;
};

struct KktGradConfig {
  DenoiseConfig admm;
  double kkt_tol = 1e-10;
  int kkt_max_iters = 2000;
  double accuracy_tol = 1e-6;  // ADMM split residual threshold for the flag
};

/// Exact gradient of the per-pair training loss: runs ADMM, extracts the
/// sign pattern, solves the KKT system for z = [x*; nu] and the adjoint
/// system for q = A^-1 P_x^T e, then assembles
///   grad = -G(S0^T q_nu, x*) - G(S0^T nu, q_x) - beta G(S+-^T 1, q_x)
/// with G = filter_gradient. warm, when non-null, supplies the ADMM start
/// and receives the final state.
GradResult loss_and_gradient(const FilterBank& fb, const Image& x_clean,
                             const Image& y_noisy, double beta,
                             const KktGradConfig& cfg, AdmmState* warm = nullptr);

}  // namespace analearn
