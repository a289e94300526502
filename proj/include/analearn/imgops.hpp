#pragma once

#include <string>

#include "analearn/image.hpp"

namespace analearn {

/// Applies the convolutional analysis operator W to an image: channel c is
/// the valid 2-D correlation of img with filter c. Output grid side is
/// N - f + 1. Linear in both the filters and the image.
CoeffStack apply_analysis(const FilterBank& fb, const Image& img);

/// Exact adjoint of apply_analysis:
/// <apply_analysis(fb, x), z> == <x, apply_adjoint(fb, z)> for all x, z.
Image apply_adjoint(const FilterBank& fb, const CoeffStack& coeffs);

/// Vector-Jacobian product in filter space: returns G with
/// <G, dtheta> == u^T (dW_theta) v for any perturbation dtheta. Channel c of
/// G is the valid correlation of v with channel c of u restricted to the
/// f x f lag window, f = v.side - u.side + 1.
FilterBank filter_gradient(const CoeffStack& u, const Image& v);

/// Anisotropic TV bank: horizontal and vertical first differences on a
/// common 2x2 support.
FilterBank make_tv_filterbank();

/// 2-D DCT-II basis functions on 3x3 blocks, orthonormal as 9-vectors.
/// The constant (DC) filter comes first and is omitted when include_dc is
/// false, giving the 8-filter bank used by the DCT sparsity baseline.
FilterBank make_dct_filterbank(bool include_dc);

/// Filter bank file format: a JSON header {k, f, layout, provenance} with the
/// coefficients either inline ("coeffs" array, written when K*f*f <= 1024) or
/// in a little-endian float64 sidecar ("coeff_file"). Readers accept both.
void save_filterbank(const FilterBank& fb, const std::string& path,
                     const std::string& provenance = "");
FilterBank load_filterbank(const std::string& path);

}  // namespace analearn
