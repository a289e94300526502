#pragma once

#include <string>
#include <vector>

#include "analearn/image.hpp"

namespace analearn {

/// SNR in dB with the exact-reconstruction case carried as a flag instead of
/// an infinite float.
struct SnrValue {
  double db = 0.0;
  bool infinite = false;
};

/// Aggregate SNR over the whole set (not averaged per image):
/// 10 log10(sum x^2) - 10 log10(sum (xhat - x)^2), sums over images and pixels.
SnrValue snr(const std::vector<Image>& recons, const std::vector<Image>& truths);

inline SnrValue snr(const Image& recon, const Image& truth) {
  return snr(std::vector<Image>{recon}, std::vector<Image>{truth});
}

/// Offset that converts aggregate SNR to PSNR with peak 1.0:
/// 10 log10(sum 1) - 10 log10(sum x^2).
double psnr_offset(const std::vector<Image>& truths);

/// |recon - truth| per pixel.
Image error_map(const Image& recon, const Image& truth);

/// Summed absolute filter responses on the valid-convolution grid.
Image response_map(const FilterBank& fb, const Image& img);

struct MetricReport {
  std::string method;
  SnrValue snr_total;
  std::vector<SnrValue> per_image_snr;
  double psnr_offset_db = 0.0;
  double seconds = 0.0;
};

MetricReport make_report(const std::string& method, const std::vector<Image>& recons,
                         const std::vector<Image>& truths, double seconds = 0.0);

std::string report_to_json(const MetricReport& r);
/// CSV row: method,snr_db,psnr_db,seconds ("inf" for the infinite flag).
std::string report_csv_header();
std::string report_to_csv_row(const MetricReport& r);

/// 8-bit binary PGM with values clamped to [lo, hi] then mapped to 0..255.
void write_pgm(const std::string& path, const Image& img, double lo, double hi);

/// Rendering ranges used for all emitted artifacts.
constexpr double kRenderImageLo = 0.0, kRenderImageHi = 1.0;
constexpr double kRenderErrorLo = 0.0, kRenderErrorHi = 0.2;
constexpr double kRenderResponseLo = 0.0, kRenderResponseHi = 2.0;
constexpr double kRenderFilterLo = -0.7, kRenderFilterHi = 0.7;

/// Writes one upscaled PGM tile per filter (prefix_00.pgm, ...) with the
/// fixed [-0.7, 0.7] scale.
void render_filter_tiles(const FilterBank& fb, const std::string& dir,
                         const std::string& prefix, int upscale = 32);

}  // namespace analearn
