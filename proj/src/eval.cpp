#include "analearn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "analearn/imgops.hpp"

namespace analearn {

SnrValue snr(const std::vector<Image>& recons, const std::vector<Image>& truths) {
  require(!recons.empty() && recons.size() == truths.size(),
          "snr: need equal-length, nonempty image lists");
  double signal = 0.0, err = 0.0;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    require(recons[t].same_shape(truths[t]), "snr: shape mismatch");
    for (std::size_t i = 0; i < truths[t].size(); ++i) {
      const double x = truths[t].px[i];
      const double d = recons[t].px[i] - x;
      signal += x * x;
      err += d * d;
    }
  }
  if (err == 0.0) return SnrValue{0.0, true};
  return SnrValue{10.0 * std::log10(signal) - 10.0 * std::log10(err), false};
}

double psnr_offset(const std::vector<Image>& truths) {
  require(!truths.empty(), "psnr_offset: empty image list");
  double count = 0.0, signal = 0.0;
  for (const auto& img : truths) {
    count += static_cast<double>(img.size());
    for (double x : img.px) signal += x * x;
  }
  return 10.0 * std::log10(count) - 10.0 * std::log10(signal);
}

Image error_map(const Image& recon, const Image& truth) {
  require(recon.same_shape(truth), "error_map: shape mismatch");
  Image out(recon.side);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.px[i] = std::abs(recon.px[i] - truth.px[i]);
  }
  return out;
}

Image response_map(const FilterBank& fb, const Image& img) {
  const CoeffStack coeffs = apply_analysis(fb, img);
  Image out(coeffs.side);
  for (int c = 0; c < coeffs.channels; ++c) {
    for (int i = 0; i < coeffs.side; ++i) {
      for (int j = 0; j < coeffs.side; ++j) out(i, j) += std::abs(coeffs.at(c, i, j));
    }
  }
  return out;
}

MetricReport make_report(const std::string& method, const std::vector<Image>& recons,
                         const std::vector<Image>& truths, double seconds) {
  MetricReport r;
  r.method = method;
  r.snr_total = snr(recons, truths);
  r.per_image_snr.reserve(recons.size());
  for (std::size_t t = 0; t < recons.size(); ++t) {
    r.per_image_snr.push_back(snr(recons[t], truths[t]));
  }
  r.psnr_offset_db = psnr_offset(truths);
  r.seconds = seconds;
  return r;
}

namespace {
nlohmann::json snr_json(const SnrValue& v) {
  nlohmann::json j;
  j["infinite"] = v.infinite;
  if (!v.infinite) j["db"] = v.db;
  return j;
}
}  // namespace

std::string report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["snr"] = snr_json(r.snr_total);
  j["psnr_offset_db"] = r.psnr_offset_db;
  j["seconds"] = r.seconds;
  auto arr = nlohmann::json::array();
  for (const auto& v : r.per_image_snr) arr.push_back(snr_json(v));
  j["per_image_snr"] = arr;
  return j.dump(2);
}

std::string report_csv_header() { return "method,snr_db,psnr_db,seconds"; }

std::string report_to_csv_row(const MetricReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.method << ",";
  if (r.snr_total.infinite) {
    os << "inf,inf,";
  } else {
    os << r.snr_total.db << "," << r.snr_total.db + r.psnr_offset_db << ",";
  }
  os << r.seconds;
  return os.str();
}

void write_pgm(const std::string& path, const Image& img, double lo, double hi) {
  require(hi > lo, "write_pgm: empty value range");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << img.side << " " << img.side << "\n255\n";
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp((img.px[i] - lo) / (hi - lo), 0.0, 1.0);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void render_filter_tiles(const FilterBank& fb, const std::string& dir,
                         const std::string& prefix, int upscale) {
  std::filesystem::create_directories(dir);
  for (int c = 0; c < fb.num_filters; ++c) {
    Image tile(fb.filter_size * upscale);
    for (int i = 0; i < tile.side; ++i) {
      for (int j = 0; j < tile.side; ++j) {
        tile(i, j) = fb.at(c, i / upscale, j / upscale);
      }
    }
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%02d.pgm", prefix.c_str(), c);
    write_pgm((std::filesystem::path(dir) / name).string(), tile, kRenderFilterLo,
              kRenderFilterHi);
  }
}

}  // namespace analearn
