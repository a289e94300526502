#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace analearn {

/// Square grayscale image, row-major storage. Intensities are nominally in
/// [0,1] for clean data but unconstrained for solver intermediates.
struct Image {
  int side = 0;
  std::vector<double> px;  // side*side, row-major

  Image() = default;
  explicit Image(int side_, double fill = 0.0)
      : side(side_), px(static_cast<std::size_t>(side_) * side_, fill) {}

  double& operator()(int i, int j) { return px[static_cast<std::size_t>(i) * side + j]; }
  double operator()(int i, int j) const { return px[static_cast<std::size_t>(i) * side + j]; }

  std::size_t size() const { return px.size(); }
  bool same_shape(const Image& o) const { return side == o.side; }
};

/// Bank of K small square filters (the learnable parameters theta).
/// Storage is channel-major, row-major within a filter, so a flat dot
/// product against another bank of the same shape is <theta, delta>.
struct FilterBank {
  int num_filters = 0;  // K
  int filter_size = 0;  // f
  std::vector<double> coeffs;  // K*f*f

  FilterBank() = default;
  FilterBank(int k, int f, double fill = 0.0)
      : num_filters(k), filter_size(f),
        coeffs(static_cast<std::size_t>(k) * f * f, fill) {}

  double& at(int c, int a, int b) {
    return coeffs[(static_cast<std::size_t>(c) * filter_size + a) * filter_size + b];
  }
  double at(int c, int a, int b) const {
    return coeffs[(static_cast<std::size_t>(c) * filter_size + a) * filter_size + b];
  }

  int param_count() const { return num_filters * filter_size * filter_size; }
  bool same_shape(const FilterBank& o) const {
    return num_filters == o.num_filters && filter_size == o.filter_size;
  }
};

/// Analysis coefficients: K channels on the valid-convolution grid,
/// side = N - f + 1. Layout matches FilterBank (channel-major, row-major).
struct CoeffStack {
  int channels = 0;  // K
  int side = 0;      // N - f + 1
  std::vector<double> values;  // channels*side*side

  CoeffStack() = default;
  CoeffStack(int k, int m, double fill = 0.0)
      : channels(k), side(m), values(static_cast<std::size_t>(k) * m * m, fill) {}

  double& at(int c, int i, int j) {
    return values[(static_cast<std::size_t>(c) * side + i) * side + j];
  }
  double at(int c, int i, int j) const {
    return values[(static_cast<std::size_t>(c) * side + i) * side + j];
  }

  std::size_t total() const { return values.size(); }
  bool same_shape(const CoeffStack& o) const {
    return channels == o.channels && side == o.side;
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace analearn
