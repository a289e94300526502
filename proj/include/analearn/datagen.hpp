#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "analearn/image.hpp"
#include "analearn/rng.hpp"

namespace analearn {

struct DeadLeavesRect {
  int row = 0, col = 0;      // top-left corner
  int height = 0, width = 0; // extent before border clipping
  double intensity = 0.0;
};

/// Draws n_rects rectangles: corner uniform over the canvas, height and
/// width independent uniform integers in [4, 32], intensity uniform [0,1].
/// Call order per rectangle is row, col, height, width, intensity.
std::vector<DeadLeavesRect> sample_dead_leaves_rects(SplitMix64& rng, int n_rects,
                                                     int side);

/// Paints rectangles in order onto a mid-gray (0.5) canvas; later rectangles
/// occlude earlier ones. Extents are clipped at the image border.
Image render_dead_leaves(int side, const std::vector<DeadLeavesRect>& rects);

Image dead_leaves(std::uint64_t seed, int n_rects = 100, int side = 64);

/// img + IID N(0, sigma^2) noise, no clipping.
Image add_noise(const Image& img, double sigma, std::uint64_t seed);

struct DatasetMeta {
  int side = 64;
  int count = 10;        // T
  double sigma = 0.1;
  int n_rects = 100;
  std::uint64_t seed = 0;
  std::string split = "train";
};

struct Dataset {
  DatasetMeta meta;
  std::vector<std::pair<Image, Image>> pairs;  // (clean, noisy)
};

/// Pair i derives its own RNG streams from (seed, i), so a pair can be
/// regenerated in isolation and generation order does not matter.
std::pair<Image, Image> make_pair(const DatasetMeta& meta, int index);

Dataset make_dataset(std::uint64_t seed, int count = 10,
                     const std::string& split = "train", int side = 64,
                     double sigma = 0.1, int n_rects = 100);

/// Directory layout: meta.json plus one raw little-endian float64 file per
/// image (clean_####.f64 / noisy_####.f64, row-major), optional PGM previews.
void save_dataset(const Dataset& ds, const std::string& dir, bool pgm_previews = false);
Dataset load_dataset(const std::string& dir);

}  // namespace analearn
