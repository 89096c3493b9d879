#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cloneforge {

/// Interleaved 8-bit RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3
};

/// Binary PPM (P6, maxval 255). Throws std::runtime_error on malformed input.
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes);
RgbImage read_ppm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Minimal truecolour PNG writer (zlib-compressed, no filtering).
std::vector<std::uint8_t> encode_png(const RgbImage& image);

/// Bilinear resize of a planar C x H x W float image with pixel centres at
/// (i + 0.5) / n; sample positions are clamped to the source edge.
std::vector<float> resize_bilinear(const std::vector<float>& planar, int channels, int in_h,
                                   int in_w, int out_h, int out_w);

/// Planar [0,1] float image to interleaved 8-bit RGB, nearest-neighbour
/// upscaled by an integer factor.
RgbImage planar_to_rgb(const float* planar, int height, int width, int upscale = 1);

}  // namespace cloneforge
