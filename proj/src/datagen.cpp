#include "analearn/datagen.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "analearn/eval.hpp"

namespace fs = std::filesystem;

namespace analearn {

namespace {
constexpr std::uint64_t kSaltClean = 1;
constexpr std::uint64_t kSaltNoise = 2;
constexpr int kRectMin = 4;
constexpr int kRectMax = 32;
}  // namespace

std::vector<DeadLeavesRect> sample_dead_leaves_rects(SplitMix64& rng, int n_rects,
                                                     int side) {
  require(n_rects >= 1, "dead_leaves: n_rects must be >= 1");
  require(side >= 8, "dead_leaves: image side must be >= 8");
  std::vector<DeadLeavesRect> rects(n_rects);
  for (auto& r : rects) {
    r.row = static_cast<int>(rng.next_below(side));
    r.col = static_cast<int>(rng.next_below(side));
    r.height = kRectMin + static_cast<int>(rng.next_below(kRectMax - kRectMin + 1));
    r.width = kRectMin + static_cast<int>(rng.next_below(kRectMax - kRectMin + 1));
    r.intensity = rng.next_double();
  }
  return rects;
}

Image render_dead_leaves(int side, const std::vector<DeadLeavesRect>& rects) {
  Image img(side, 0.5);
  for (const auto& r : rects) {
    const int i1 = std::min(side, r.row + r.height);
    const int j1 = std::min(side, r.col + r.width);
    for (int i = r.row; i < i1; ++i) {
      for (int j = r.col; j < j1; ++j) img(i, j) = r.intensity;
    }
  }
  return img;
}

Image dead_leaves(std::uint64_t seed, int n_rects, int side) {
  SplitMix64 rng(seed);
  return render_dead_leaves(side, sample_dead_leaves_rects(rng, n_rects, side));
}

Image add_noise(const Image& img, double sigma, std::uint64_t seed) {
  require(sigma >= 0.0, "add_noise: sigma must be >= 0");
  Image out = img;
  if (sigma == 0.0) return out;
  SplitMix64 rng(seed);
  for (double& v : out.px) v += sigma * rng.next_gaussian();
  return out;
}

std::pair<Image, Image> make_pair(const DatasetMeta& meta, int index) {
  const Image clean = dead_leaves(
      SplitMix64::derive_stream(meta.seed, static_cast<std::uint64_t>(index), kSaltClean),
      meta.n_rects, meta.side);
  const Image noisy = add_noise(
      clean, meta.sigma,
      SplitMix64::derive_stream(meta.seed, static_cast<std::uint64_t>(index), kSaltNoise));
  return {clean, noisy};
}

Dataset make_dataset(std::uint64_t seed, int count, const std::string& split,
                     int side, double sigma, int n_rects) {
  require(count >= 1, "make_dataset: count must be >= 1");
  Dataset ds;
  ds.meta = DatasetMeta{side, count, sigma, n_rects, seed, split};
  ds.pairs.reserve(count);
  for (int t = 0; t < count; ++t) ds.pairs.push_back(make_pair(ds.meta, t));
  return ds;
}

namespace {

std::string image_filename(const char* kind, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.f64", kind, index);
  return buf;
}

void write_image_f64(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

Image read_image_f64(const fs::path& path, int side) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
  Image img(side);
  const std::streamsize want =
      static_cast<std::streamsize>(img.px.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(img.px.data()), want);
  if (in.gcount() != want) {
    throw std::runtime_error("load_dataset: truncated file " + path.string() +
                             ": expected " + std::to_string(want) + " bytes, got " +
                             std::to_string(in.gcount()) + " (failed at byte offset " +
                             std::to_string(in.gcount()) + ")");
  }
  return img;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir, bool pgm_previews) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["side"] = ds.meta.side;
  j["count"] = ds.meta.count;
  j["sigma"] = ds.meta.sigma;
  j["n_rects"] = ds.meta.n_rects;
  j["seed"] = ds.meta.seed;
  j["split"] = ds.meta.split;
  j["format"] = "f64le_rowmajor";
  std::ofstream meta(fs::path(dir) / "meta.json");
  if (!meta) throw std::runtime_error("save_dataset: cannot open meta.json in " + dir);
  meta << j.dump(2) << "\n";
  for (int t = 0; t < static_cast<int>(ds.pairs.size()); ++t) {
    write_image_f64(fs::path(dir) / image_filename("clean", t), ds.pairs[t].first);
    write_image_f64(fs::path(dir) / image_filename("noisy", t), ds.pairs[t].second);
    if (pgm_previews) {
      write_pgm((fs::path(dir) / (image_filename("clean", t) + ".pgm")).string(),
                ds.pairs[t].first, 0.0, 1.0);
      write_pgm((fs::path(dir) / (image_filename("noisy", t) + ".pgm")).string(),
                ds.pairs[t].second, 0.0, 1.0);
    }
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream meta(fs::path(dir) / "meta.json");
  if (!meta) throw std::runtime_error("load_dataset: cannot open meta.json in " + dir);
  nlohmann::json j;
  meta >> j;
  Dataset ds;
  ds.meta.side = j.at("side").get<int>();
  ds.meta.count = j.at("count").get<int>();
  ds.meta.sigma = j.at("sigma").get<double>();
  ds.meta.n_rects = j.at("n_rects").get<int>();
  ds.meta.seed = j.at("seed").get<std::uint64_t>();
  ds.meta.split = j.at("split").get<std::string>();
  ds.pairs.reserve(ds.meta.count);
  for (int t = 0; t < ds.meta.count; ++t) {
    Image clean = read_image_f64(fs::path(dir) / image_filename("clean", t), ds.meta.side);
    Image noisy = read_image_f64(fs::path(dir) / image_filename("noisy", t), ds.meta.side);
    ds.pairs.emplace_back(std::move(clean), std::move(noisy));
  }
  return ds;
}

}  // namespace analearn
