#include "analearn/imgops.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace analearn {

CoeffStack apply_analysis(const FilterBank& fb, const Image& img) {
  const int f = fb.filter_size;
  const int n = img.side;
  require(fb.num_filters >= 1 && f >= 1, "apply_analysis: empty filter bank");
  require(n >= f, "apply_analysis: image side smaller than filter size");
  const int m = n - f + 1;
  CoeffStack out(fb.num_filters, m);
  for (int c = 0; c < fb.num_filters; ++c) {
    const double* filt = &fb.coeffs[static_cast<std::size_t>(c) * f * f];
    for (int i = 0; i < m; ++i) {
      double* row_out = &out.values[(static_cast<std::size_t>(c) * m + i) * m];
      for (int a = 0; a < f; ++a) {
        const double* row_in = &img.px[static_cast<std::size_t>(i + a) * n];
        for (int b = 0; b < f; ++b) {
          const double w = filt[a * f + b];
          if (w == 0.0) continue;
          const double* src = row_in + b;
          for (int j = 0; j < m; ++j) row_out[j] += w * src[j];
        }
      }
    }
  }
  return out;
}

Image apply_adjoint(const FilterBank& fb, const CoeffStack& coeffs) {
  const int f = fb.filter_size;
  const int m = coeffs.side;
  require(coeffs.channels == fb.num_filters,
          "apply_adjoint: channel count does not match filter bank");
  const int n = m + f - 1;
  Image out(n);
  for (int c = 0; c < fb.num_filters; ++c) {
    const double* filt = &fb.coeffs[static_cast<std::size_t>(c) * f * f];
    for (int i = 0; i < m; ++i) {
      const double* row_in = &coeffs.values[(static_cast<std::size_t>(c) * m + i) * m];
      for (int a = 0; a < f; ++a) {
        double* row_out = &out.px[static_cast<std::size_t>(i + a) * n];
        for (int b = 0; b < f; ++b) {
          const double w = filt[a * f + b];
          if (w == 0.0) continue;
          double* dst = row_out + b;
          for (int j = 0; j < m; ++j) dst[j] += w * row_in[j];
        }
      }
    }
  }
  return out;
}

FilterBank filter_gradient(const CoeffStack& u, const Image& v) {
  const int m = u.side;
  const int f = v.side - m + 1;
  require(f >= 1, "filter_gradient: coefficient grid larger than image");
  FilterBank grad(u.channels, f);
  const int n = v.side;
  for (int c = 0; c < u.channels; ++c) {
    for (int a = 0; a < f; ++a) {
      for (int b = 0; b < f; ++b) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) {
          const double* urow = &u.values[(static_cast<std::size_t>(c) * m + i) * m];
          const double* vrow = &v.px[static_cast<std::size_t>(i + a) * n + b];
          for (int j = 0; j < m; ++j) s += urow[j] * vrow[j];
        }
        grad.at(c, a, b) = s;
      }
    }
  }
  return grad;
}

FilterBank make_tv_filterbank() {
  FilterBank fb(2, 2);
  // horizontal first difference
  fb.at(0, 0, 0) = 1.0;
  fb.at(0, 0, 1) = -1.0;
  // vertical first difference
  fb.at(1, 0, 0) = 1.0;
  fb.at(1, 1, 0) = -1.0;
  return fb;
}

FilterBank make_dct_filterbank(bool include_dc) {
  // 1-D DCT-II rows, orthonormal on 3 points.
  double d[3][3];
  for (int k = 0; k < 3; ++k) {
    const double alpha = (k == 0) ? std::sqrt(1.0 / 3.0) : std::sqrt(2.0 / 3.0);
    for (int x = 0; x < 3; ++x) {
      d[k][x] = alpha * std::cos(M_PI * (2 * x + 1) * k / 6.0);
    }
  }
  const int total = include_dc ? 9 : 8;
  FilterBank fb(total, 3);
  int c = 0;
  for (int ki = 0; ki < 3; ++ki) {
    for (int kj = 0; kj < 3; ++kj) {
      if (!include_dc && ki == 0 && kj == 0) continue;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) fb.at(c, a, b) = d[ki][a] * d[kj][b];
      ++c;
    }
  }
  return fb;
}

namespace {

constexpr int kInlineCoeffLimit = 1024;

void write_f64_le(std::ofstream& out, const std::vector<double>& v) {
  static_assert(sizeof(double) == 8);
  // Little-endian hosts write directly; this project targets x86-64/aarch64.
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_filterbank(const FilterBank& fb, const std::string& path,
                     const std::string& provenance) {
  nlohmann::json j;
  j["k"] = fb.num_filters;
  j["f"] = fb.filter_size;
  j["layout"] = "channel_major_row_major";
  if (!provenance.empty()) j["provenance"] = provenance;
  if (fb.param_count() <= kInlineCoeffLimit) {
    j["coeffs"] = fb.coeffs;
  } else {
    const std::string sidecar = path + ".bin";
    std::ofstream bin(sidecar, std::ios::binary);
    if (!bin) throw std::runtime_error("save_filterbank: cannot open " + sidecar);
    write_f64_le(bin, fb.coeffs);
    j["coeff_file"] = std::filesystem::path(sidecar).filename().string();
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_filterbank: cannot open " + path);
  out << j.dump(2) << "\n";
}

FilterBank load_filterbank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_filterbank: cannot open " + path);
  nlohmann::json j;
  in >> j;
  FilterBank fb(j.at("k").get<int>(), j.at("f").get<int>());
  require(fb.num_filters >= 1 && fb.filter_size >= 1,
          "load_filterbank: invalid dimensions in " + path);
  const std::size_t expect = static_cast<std::size_t>(fb.param_count());
  if (j.contains("coeffs")) {
    fb.coeffs = j.at("coeffs").get<std::vector<double>>();
    if (fb.coeffs.size() != expect) {
      throw std::runtime_error("load_filterbank: coefficient count mismatch in " + path);
    }
  } else {
    const std::string sidecar =
        (std::filesystem::path(path).parent_path() /
         j.at("coeff_file").get<std::string>()).string();
    std::ifstream bin(sidecar, std::ios::binary);
    if (!bin) throw std::runtime_error("load_filterbank: cannot open " + sidecar);
    fb.coeffs.resize(expect);
    bin.read(reinterpret_cast<char*>(fb.coeffs.data()),
             static_cast<std::streamsize>(expect * sizeof(double)));
    if (static_cast<std::size_t>(bin.gcount()) != expect * sizeof(double)) {
      throw std::runtime_error("load_filterbank: truncated coefficient block in " +
                               sidecar + " at byte offset " + std::to_string(bin.gcount()));
    }
  }
  for (double v : fb.coeffs) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("load_filterbank: non-finite coefficient in " + path);
    }
  }
  return fb;
}

}  // namespace analearn
