#include <stdexcept>
#include <zlib.h>

#include "doctest.h"

#include "cloneforge/image_codec.hpp"
#include "test_support.hpp"

using namespace cloneforge;

namespace {

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
         b[at + 3];
}

RgbImage gradient_image(int w, int h) {
  RgbImage img{w, h, {}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.pixels.insert(img.pixels.end(), {std::uint8_t(x * 7), std::uint8_t(y * 5), 200});
  return img;
}

}  // namespace

TEST_SUITE("image_codec") {
  TEST_CASE("PPM round trip") {
    const RgbImage img = gradient_image(7, 5);
    const auto bytes = encode_ppm(img);
    const std::string header(bytes.begin(), bytes.begin() + 11);
    CHECK(header == "P6\n7 5\n255\n");
    const RgbImage back = decode_ppm(bytes);
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.pixels == img.pixels);
  }

  TEST_CASE("PPM header comments and whitespace") {
    std::string text = "P6 # comment\n2\t1\n# another\n255\n";
    text += std::string("\x01\x02\x03\x04\x05\x06", 6);
    const RgbImage img = decode_ppm(std::vector<std::uint8_t>(text.begin(), text.end()));
    CHECK(img.width == 2);
    CHECK(img.pixels[5] == 6);
  }

  TEST_CASE("malformed PPM is rejected") {
    auto bytes_of = [](const std::string& s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
    CHECK_THROWS(decode_ppm(bytes_of("P3\n1 1\n255\n1 2 3")));
    CHECK_THROWS(decode_ppm(bytes_of("P6\n2 2\n255\nabc")));
    CHECK_THROWS(decode_ppm(bytes_of("P6\n2 2\n65535\n")));
    CHECK_THROWS(decode_ppm(bytes_of("P6\n-1 2\n255\n")));
    CHECK_THROWS(decode_ppm(bytes_of("")));
  }

  TEST_CASE("PNG structure and payload decode with zlib") {
    const RgbImage img = gradient_image(6, 4);
    const auto png = encode_png(img);
    const std::vector<std::uint8_t> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    CHECK(std::equal(sig.begin(), sig.end(), png.begin()));
    CHECK(std::string(png.begin() + 12, png.begin() + 16) == "IHDR");
    CHECK(be32(png, 16) == 6);
    CHECK(be32(png, 20) == 4);
    // IHDR chunk CRC
    CHECK(be32(png, 29) == crc32(0, png.data() + 12, 17));

    const std::size_t idat = 33;
    CHECK(std::string(png.begin() + idat + 4, png.begin() + idat + 8) == "IDAT");
    const std::uint32_t len = be32(png, idat);
    std::vector<std::uint8_t> raw(4 * (6 * 3 + 1));
    uLongf raw_len = raw.size();
    REQUIRE(uncompress(raw.data(), &raw_len, png.data() + idat + 8, len) == Z_OK);
    REQUIRE(raw_len == raw.size());
    for (int y = 0; y < 4; ++y) {
      CHECK(raw[y * 19] == 0);
      CHECK(std::equal(raw.begin() + y * 19 + 1, raw.begin() + (y + 1) * 19, img.pixels.begin() + y * 18));
    }
    CHECK(std::string(png.end() - 8, png.end() - 4) == "IEND");
  }

  TEST_CASE("bilinear resize keeps constants and uses half-pixel centres") {
    std::vector<float> constant(3 * 40 * 100, 0.37f);
    for (float v : resize_bilinear(constant, 3, 40, 100, 32, 32)) CHECK(v == doctest::Approx(0.37f));
    // 1x2 -> 1x4: centres map to -0.25, 0.25, 0.75, 1.25 (clamped)
    const auto up = resize_bilinear({0.f, 1.f}, 1, 1, 2, 1, 4);
    CHECK(up[0] == doctest::Approx(0.0));
    CHECK(up[1] == doctest::Approx(0.25));
    CHECK(up[2] == doctest::Approx(0.75));
    CHECK(up[3] == doctest::Approx(1.0));
    // 2x downscale averages pixel pairs
    const auto down = resize_bilinear({0.f, 1.f, 0.2f, 0.4f}, 1, 1, 4, 1, 2);
    CHECK(down[0] == doctest::Approx(0.5));
    CHECK(down[1] == doctest::Approx(0.3));
    CHECK_THROWS(resize_bilinear({1.f}, 1, 1, 2, 1, 1));
  }

  TEST_CASE("planar to RGB with nearest-neighbour upscale") {
    const std::vector<float> planar{0.f, 1.f, 0.5f, 0.f, 1.f, 0.f};  // 3 channels, 1 x 2
    const RgbImage img = planar_to_rgb(planar.data(), 1, 2, 2);
    CHECK(img.width == 4);
    CHECK(img.height == 2);
    const std::vector<std::uint8_t> left{0, 128, 255}, right{255, 0, 0};
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 4; ++x) {
        const auto* px = &img.pixels[(y * 4 + x) * 3];
        const auto& want = x < 2 ? left : right;
        CHECK(std::equal(want.begin(), want.end(), px));
      }
  }
}
