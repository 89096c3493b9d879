#include "cloneforge/image_codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace cloneforge {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
    tok.push_back(static_cast<char>(bytes[pos++]));
  }
  if (tok.empty()) throw std::runtime_error("truncated PPM header");
  return tok;
}

int parse_positive(const std::string& tok, const char* what) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(c); })) {
    throw std::runtime_error(std::string("bad PPM ") + what + " '" + tok + "'");
  }
  const long v = std::stol(tok);
  if (v <= 0 || v > 1 << 16) throw std::runtime_error(std::string("PPM ") + what + " out of range");
  return static_cast<int>(v);
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw std::runtime_error("not a binary PPM (P6)");
  RgbImage img;
  img.width = parse_positive(next_token(bytes, pos), "width");
  img.height = parse_positive(next_token(bytes, pos), "height");
  const int maxval = parse_positive(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw std::runtime_error("unsupported PPM maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw std::runtime_error("truncated PPM header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(img.width) * img.height * 3;
  if (bytes.size() - pos < need) {
    throw std::runtime_error("PPM pixel data truncated: need " + std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - pos));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit, truecolour, deflate, no filter, no interlace
  put_chunk(out, "IHDR", ihdr);

  const std::size_t row = static_cast<std::size_t>(image.width) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((row + 1) * image.height);
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), image.pixels.begin() + static_cast<std::ptrdiff_t>(y * row),
               image.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * row));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("png: deflate failed");
  }
  packed.resize(packed_size);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

std::vector<float> resize_bilinear(const std::vector<float>& planar, int channels, int in_h, int in_w,
                                   int out_h, int out_w) {
  if (in_h < 1 || in_w < 1 || out_h < 1 || out_w < 1) throw std::invalid_argument("resize: empty image");
  if (planar.size() != static_cast<std::size_t>(channels) * in_h * in_w) {
    throw std::invalid_argument("resize: buffer size does not match dimensions");
  }
  std::vector<float> out(static_cast<std::size_t>(channels) * out_h * out_w);
  auto source = [](int i, int in, int outn) {
    const double s = (i + 0.5) * static_cast<double>(in) / outn - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (int oy = 0; oy < out_h; ++oy) {
    const double sy = source(oy, in_h, out_h);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = source(ox, in_w, out_w);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double fx = sx - x0;
      for (int c = 0; c < channels; ++c) {
        const float* p = planar.data() + static_cast<std::size_t>(c) * in_h * in_w;
        const double top = (1 - fx) * p[y0 * in_w + x0] + fx * p[y0 * in_w + x1];
        const double bottom = (1 - fx) * p[y1 * in_w + x0] + fx * p[y1 * in_w + x1];
        out[(static_cast<std::size_t>(c) * out_h + oy) * out_w + ox] =
            static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

RgbImage planar_to_rgb(const float* planar, int height, int width, int upscale) {
  if (upscale < 1) throw std::invalid_argument("planar_to_rgb: upscale must be >= 1");
  RgbImage img;
  img.width = width * upscale;
  img.height = height * upscale;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::size_t src = static_cast<std::size_t>(y / upscale) * width + x / upscale;
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(planar[c * plane + src]), 0.0, 1.0);
        img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

}  // namespace cloneforge
