#include "analearn/denoise.hpp"

#include <cmath>
#include <filesystem>

#include "analearn/vecmath.hpp"

namespace analearn {

double scalar_denoise(double w, double y, double beta) {
  const double shift = beta * std::abs(w);
  if (y >= 0.0) return std::max(y - shift, 0.0);
  return std::min(y + shift, 0.0);
}

double analysis_cost(const FilterBank& fb, const Image& x, const Image& y, double beta) {
  double fit = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.px[i] - y.px[i];
    fit += d * d;
  }
  const CoeffStack wx = apply_analysis(fb, x);
  return 0.5 * fit + beta * norm1(wx.values);
}

namespace {

// CG on (I + rho W^T W) x = rhs, warm-started from x. Returns iterations
// used; sets *reached_tol.
int solve_x_update(const FilterBank& fb, const Image& rhs, double rho, Image& x,
                   int max_iters, double rel_tol, bool* reached_tol) {
  const auto apply_M = [&](const Image& v) {
    Image out = apply_adjoint(fb, apply_analysis(fb, v));
    scale(out.px, rho);
    axpy(1.0, v.px, out.px);
    return out;
  };

  Image r = rhs;
  {
    const Image mx = apply_M(x);
    axpy(-1.0, mx.px, r.px);
  }
  const double rhs_norm = norm2(rhs.px);
  const double stop = rel_tol * (rhs_norm > 0.0 ? rhs_norm : 1.0);
  double rr = norm2_sq(r.px);
  *reached_tol = true;
  if (std::sqrt(rr) <= stop) return 0;

  Image p = r;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Image mp = apply_M(p);
    const double pmp = dot(p.px, mp.px);
    if (pmp <= 0.0 || !std::isfinite(pmp)) break;  // M is SPD; bail on breakdown
    const double alpha = rr / pmp;
    axpy(alpha, p.px, x.px);
    axpy(-alpha, mp.px, r.px);
    const double rr_new = norm2_sq(r.px);
    if (std::sqrt(rr_new) <= stop) {
      ++it;
      rr = rr_new;
      break;
    }
    const double gamma = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < p.px.size(); ++i) p.px[i] = r.px[i] + gamma * p.px[i];
  }
  *reached_tol = std::sqrt(rr) <= stop;
  return it;
}

}  // namespace

AdmmState admm_denoise(const FilterBank& fb, const Image& y, const DenoiseConfig& cfg) {
  require(cfg.beta >= 0.0, "admm_denoise: beta must be >= 0");
  require(cfg.rho > 0.0, "admm_denoise: rho must be > 0");
  require(y.side >= fb.filter_size, "admm_denoise: image smaller than filters");

  AdmmState st;
  st.rho = cfg.rho;

  if (cfg.beta == 0.0) {
    // Unregularized problem: x = y exactly, no iteration needed.
    st.x = y;
    st.z = apply_analysis(fb, y);
    st.u = CoeffStack(st.z.channels, st.z.side);
    st.iters_run = 0;
    st.split_residual = 0.0;
    st.dual_residual = 0.0;
    st.converged = true;
    if (cfg.track_cost) st.cost_history.push_back(0.0);
    return st;
  }

  if (cfg.warm != nullptr && cfg.warm->x.side == y.side) {
    st.x = cfg.warm->x;
    st.z = cfg.warm->z;
    st.u = cfg.warm->u;
  } else {
    st.x = y;
    st.z = apply_analysis(fb, y);
    st.u = CoeffStack(st.z.channels, st.z.side);
  }

  const double thresh = cfg.beta / cfg.rho;
  Image rhs(y.side);
  CoeffStack z_prev = st.z;

  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    // x-update: (I + rho W^T W) x = y + rho W^T (z - u)
    CoeffStack zu = st.z;
    axpy(-1.0, st.u.values, zu.values);
    rhs = apply_adjoint(fb, zu);
    scale(rhs.px, cfg.rho);
    axpy(1.0, y.px, rhs.px);
    bool cg_ok = true;
    st.total_cg_iters +=
        solve_x_update(fb, rhs, cfg.rho, st.x, cfg.inner_cg_iters, cfg.cg_tol, &cg_ok);
    st.cg_clean = cg_ok;

    // z-update: soft threshold of Wx + u at beta/rho
    const CoeffStack wx = apply_analysis(fb, st.x);
    z_prev.values.swap(st.z.values);
    for (std::size_t i = 0; i < st.z.values.size(); ++i) {
      st.z.values[i] = soft_threshold(wx.values[i] + st.u.values[i], thresh);
    }

    // scaled dual update and residuals
    double prim = 0.0;
    for (std::size_t i = 0; i < st.u.values.size(); ++i) {
      const double r = wx.values[i] - st.z.values[i];
      st.u.values[i] += r;
      prim = std::max(prim, std::abs(r));
    }
    CoeffStack dz = st.z;
    axpy(-1.0, z_prev.values, dz.values);
    Image dual = apply_adjoint(fb, dz);
    st.split_residual = prim;
    st.dual_residual = cfg.rho * norm_inf(dual.px);
    st.iters_run = outer + 1;

    if (!all_finite(st.x.px) || !all_finite(st.z.values)) {
      throw std::runtime_error("admm_denoise: NaN encountered in iterates");
    }
    if (cfg.track_cost) {
      st.cost_history.push_back(analysis_cost(fb, st.x, y, cfg.beta));
    }
    if (st.split_residual <= cfg.split_tol && st.dual_residual <= cfg.split_tol) {
      st.converged = true;
      break;
    }
  }
  if (!st.converged) {
    st.converged =
        st.split_residual <= cfg.split_tol && st.dual_residual <= cfg.split_tol;
  }
  return st;
}

FilterBank filterbank_for_kind(const std::string& kind) {
  if (kind == "tv") return make_tv_filterbank();
  if (kind == "dct") return make_dct_filterbank(false);
  if (std::filesystem::exists(kind)) return load_filterbank(kind);
  throw std::invalid_argument("unknown operator kind: " + kind +
                              " (expected tv, dct, or a filter bank file)");
}

Image denoise_with_operator(const std::string& kind, const Image& y, double beta,
                            const DenoiseConfig* base_cfg) {
  const FilterBank fb = filterbank_for_kind(kind);
  DenoiseConfig cfg = base_cfg != nullptr ? *base_cfg : DenoiseConfig{};
  cfg.beta = beta;
  return admm_denoise(fb, y, cfg).x;
}

}  // namespace analearn
