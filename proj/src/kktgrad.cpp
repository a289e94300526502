#include "analearn/kktgrad.hpp"

#include <cmath>
#include <sstream>

#include "analearn/imgops.hpp"
#include "analearn/vecmath.hpp"

namespace analearn {

namespace {

SignPattern pattern_from_values(const CoeffStack& w, double threshold) {
  SignPattern p;
  p.channels = w.channels;
  p.grid_side = w.side;
  p.c.resize(w.total());
  for (std::size_t i = 0; i < w.total(); ++i) {
    const double v = w.values[i];
    if (std::abs(v) <= threshold) {
      p.c[i] = 0;
      p.zero_idx.push_back(i);
    } else if (v > 0.0) {
      p.c[i] = 1;
      ++p.k_pos;
    } else {
      p.c[i] = -1;
      ++p.k_neg;
    }
  }
  return p;
}

}  // namespace

SignPattern extract_sign_pattern(const AdmmState& state) {
  return pattern_from_values(state.z, 0.0);
}

SignPattern extract_sign_pattern_thresholded(const FilterBank& fb, const Image& x,
                                             double threshold) {
  return pattern_from_values(apply_analysis(fb, x), threshold);
}

CoeffStack scatter_zero(const SignPattern& p, const std::vector<double>& nu) {
  require(nu.size() == p.k_zero(), "scatter_zero: multiplier length mismatch");
  CoeffStack out(p.channels, p.grid_side);
  for (std::size_t m = 0; m < nu.size(); ++m) out.values[p.zero_idx[m]] = nu[m];
  return out;
}

std::vector<double> gather_zero(const SignPattern& p, const CoeffStack& w) {
  require(w.total() == p.k(), "gather_zero: grid size mismatch");
  std::vector<double> out(p.k_zero());
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = w.values[p.zero_idx[m]];
  return out;
}

CoeffStack sign_coeffs(const SignPattern& p) {
  CoeffStack out(p.channels, p.grid_side);
  for (std::size_t i = 0; i < p.c.size(); ++i) out.values[i] = p.c[i];
  return out;
}

KktVector kkt_apply(const FilterBank& fb, const SignPattern& p, const KktVector& v) {
  KktVector out;
  out.x_part = v.x_part;
  if (!v.nu_part.empty()) {
    const Image adj = apply_adjoint(fb, scatter_zero(p, v.nu_part));
    axpy(1.0, adj.px, out.x_part.px);
  }
  out.nu_part = gather_zero(p, apply_analysis(fb, v.x_part));
  return out;
}

KktVector kkt_rhs(const FilterBank& fb, const SignPattern& p, const Image& y,
                  double beta) {
  KktVector b;
  b.x_part = y;
  if (beta != 0.0 && p.k_nonzero() > 0) {
    const Image adj = apply_adjoint(fb, sign_coeffs(p));
    axpy(-beta, adj.px, b.x_part.px);
  }
  b.nu_part.assign(p.k_zero(), 0.0);
  return b;
}

namespace {

double kkt_dot(const KktVector& a, const KktVector& b) {
  return dot(a.x_part.px, b.x_part.px) + dot(a.nu_part, b.nu_part);
}

double kkt_norm(const KktVector& a) { return std::sqrt(kkt_dot(a, a)); }

void kkt_axpy(double alpha, const KktVector& x, KktVector& y) {
  axpy(alpha, x.x_part.px, y.x_part.px);
  axpy(alpha, x.nu_part, y.nu_part);
}

KktVector kkt_zero_like(const KktVector& v) {
  KktVector out;
  out.x_part = Image(v.x_part.side);
  out.nu_part.assign(v.nu_part.size(), 0.0);
  return out;
}

}  // namespace

KktSolveResult solve_kkt_system(const FilterBank& fb, const SignPattern& p,
                                const KktVector& b, double tol, int max_iters) {
  KktSolveResult res;
  res.z = kkt_zero_like(b);

  const double b_norm = kkt_norm(b);
  if (b_norm == 0.0) {
    res.rel_residual = 0.0;
    return res;
  }
  const double stop = tol * b_norm;

  // CGNR with A symmetric: minimizes ||A z - b|| over the Krylov space and
  // keeps the true residual r = b - A z available for the stopping test.
  KktVector r = b;
  KktVector s = kkt_apply(fb, p, r);
  KktVector pdir = s;
  double gamma = kkt_dot(s, s);
  double r_norm = b_norm;

  // stagnation watch for the rank-deficient/inconsistent case
  double prev_window_res = r_norm;
  constexpr int kStagnationWindow = 100;

  int it = 0;
  while (it < max_iters && r_norm > stop) {
    const KktVector q = kkt_apply(fb, p, pdir);
    const double qq = kkt_dot(q, q);
    if (qq == 0.0 || !std::isfinite(qq)) break;
    const double alpha = gamma / qq;
    kkt_axpy(alpha, pdir, res.z);
    kkt_axpy(-alpha, q, r);
    r_norm = kkt_norm(r);
    ++it;
    if (r_norm <= stop) break;
    if (it % kStagnationWindow == 0) {
      if (r_norm > 0.99 * prev_window_res) break;  // no longer making progress
      prev_window_res = r_norm;
    }
    s = kkt_apply(fb, p, r);
    const double gamma_new = kkt_dot(s, s);
    const double beta_k = gamma_new / gamma;
    gamma = gamma_new;
    for (std::size_t i = 0; i < pdir.x_part.px.size(); ++i) {
      pdir.x_part.px[i] = s.x_part.px[i] + beta_k * pdir.x_part.px[i];
    }
    for (std::size_t i = 0; i < pdir.nu_part.size(); ++i) {
      pdir.nu_part[i] = s.nu_part[i] + beta_k * pdir.nu_part[i];
    }
  }
  res.iters = it;
  res.rel_residual = r_norm / b_norm;
  res.rank_flag = r_norm > stop;
  return res;
}

KktSolveResult solve_kkt(const FilterBank& fb, const SignPattern& p, const Image& y,
                         double beta, double tol, int max_iters) {
  return solve_kkt_system(fb, p, kkt_rhs(fb, p, y, beta), tol, max_iters);
}

std::string to_json_line(const GradDiagnostics& d) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"k_zero\":" << d.k_zero << ",\"cg_iters\":" << d.cg_iters
     << ",\"admm_iters\":" << d.admm_iters << ",\"admm_residual\":" << d.admm_residual
     << ",\"kkt_residual\":" << d.kkt_residual
     << ",\"rank_flag\":" << (d.rank_flag ? "true" : "false")
     << ",\"accuracy_flag\":" << (d.accuracy_flag ? "true" : "false") << "}";
  return os.str();
}

GradResult loss_and_gradient(const FilterBank& fb, const Image& x_clean,
                             const Image& y_noisy, double beta,
                             const KktGradConfig& cfg, AdmmState* warm) {
  require(beta > 0.0, "loss_and_gradient: beta must be > 0");
  require(x_clean.same_shape(y_noisy), "loss_and_gradient: pair shape mismatch");

  DenoiseConfig acfg = cfg.admm;
  acfg.beta = beta;
  acfg.warm = (warm != nullptr && warm->x.side == y_noisy.side) ? warm : nullptr;
  AdmmState state = admm_denoise(fb, y_noisy, acfg);

  const SignPattern pattern = extract_sign_pattern(state);
  const KktSolveResult sol_z =
      solve_kkt(fb, pattern, y_noisy, beta, cfg.kkt_tol, cfg.kkt_max_iters);
  const Image& x_star = sol_z.z.x_part;
  const std::vector<double>& nu = sol_z.z.nu_part;

  GradResult out;
  out.diag.k_zero = pattern.k_zero();
  out.diag.admm_iters = state.iters_run;
  out.diag.admm_residual = state.split_residual;
  out.diag.accuracy_flag = state.split_residual > cfg.accuracy_tol;

  // e = x* - x_t, loss contribution 1/2 ||e||^2
  KktVector rhs_q;
  rhs_q.x_part = x_star;
  axpy(-1.0, x_clean.px, rhs_q.x_part.px);
  rhs_q.nu_part.assign(pattern.k_zero(), 0.0);
  out.loss = 0.5 * norm2_sq(rhs_q.x_part.px);

  const KktSolveResult sol_q =
      solve_kkt_system(fb, pattern, rhs_q, cfg.kkt_tol, cfg.kkt_max_iters);
  const Image& q_x = sol_q.z.x_part;
  const std::vector<double>& q_nu = sol_q.z.nu_part;

  out.diag.cg_iters = sol_z.iters + sol_q.iters;
  out.diag.kkt_residual = std::max(sol_z.rel_residual, sol_q.rel_residual);
  out.diag.rank_flag = sol_z.rank_flag || sol_q.rank_flag;

  out.grad = FilterBank(fb.num_filters, fb.filter_size);
  if (!out.diag.rank_flag) {
    const FilterBank g_constraint_x = filter_gradient(scatter_zero(pattern, q_nu), x_star);
    const FilterBank g_constraint_nu = filter_gradient(scatter_zero(pattern, nu), q_x);
    const FilterBank g_sign = filter_gradient(sign_coeffs(pattern), q_x);
    for (int i = 0; i < out.grad.param_count(); ++i) {
      out.grad.coeffs[i] = -g_constraint_x.coeffs[i] - g_constraint_nu.coeffs[i] -
                           beta * g_sign.coeffs[i];
    }
  }

  if (warm != nullptr) *warm = std::move(state);
  return out;
}

}  // namespace analearn
