#include "cloneforge/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "cloneforge/corpus.hpp"
#include "cloneforge/rng.hpp"

namespace cloneforge {

namespace {

constexpr int kSide = 32;
using Rgb = std::array<double, 3>;

Rgb random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

struct Canvas {
  std::array<Rgb, kSide * kSide> px{};
  Rgb& at(int y, int x) { return px[static_cast<std::size_t>(y * kSide + x)]; }
};

void paint_gradient(Canvas& c, Rng& rng) {
  const Rgb a = random_color(rng), b = random_color(rng);
  const double angle = rng.uniform(0, 2 * std::numbers::pi);
  const double dx = std::cos(angle), dy = std::sin(angle);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double t = 0.5 + ((x - 15.5) * dx + (y - 15.5) * dy) / 45.0;
      c.at(y, x) = mix(a, b, std::clamp(t, 0.0, 1.0));
    }
}

void paint_ellipse(Canvas& c, Rng& rng, const Rgb& color) {
  const double cx = rng.uniform(4, 28), cy = rng.uniform(4, 28);
  const double rx = rng.uniform(3, 12), ry = rng.uniform(3, 12);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double d = std::pow((x - cx) / rx, 2) + std::pow((y - cy) / ry, 2);
      if (d <= 1.0) c.at(y, x) = mix(c.at(y, x), color, 0.85);
    }
}

void paint_rect(Canvas& c, Rng& rng, const Rgb& color) {
  const int x0 = static_cast<int>(rng.below(24)), y0 = static_cast<int>(rng.below(24));
  const int w = 4 + static_cast<int>(rng.below(14)), h = 4 + static_cast<int>(rng.below(14));
  for (int y = y0; y < std::min(kSide, y0 + h); ++y)
    for (int x = x0; x < std::min(kSide, x0 + w); ++x) c.at(y, x) = color;
}

void paint_stripes(Canvas& c, Rng& rng, const Rgb& color) {
  const double angle = rng.uniform(0, std::numbers::pi);
  const double period = rng.uniform(3, 9);
  const double phase = rng.uniform(0, period);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double u = x * std::cos(angle) + y * std::sin(angle) + phase;
      if (std::fmod(u, period) < period / 2) c.at(y, x) = mix(c.at(y, x), color, 0.7);
    }
}

void paint_checker(Canvas& c, Rng& rng, const Rgb& color) {
  const int cell = 2 + static_cast<int>(rng.below(6));
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x)
      if (((x / cell) + (y / cell)) % 2 == 0) c.at(y, x) = mix(c.at(y, x), color, 0.6);
}

void paint_rings(Canvas& c, Rng& rng, const Rgb& color) {
  const double cx = rng.uniform(6, 26), cy = rng.uniform(6, 26), period = rng.uniform(3, 7);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double r = std::hypot(x - cx, y - cy);
      const double t = 0.5 + 0.5 * std::cos(2 * std::numbers::pi * r / period);
      c.at(y, x) = mix(c.at(y, x), color, 0.6 * t);
    }
}

void paint_triangle(Canvas& c, Rng& rng, const Rgb& color) {
  std::array<double, 6> v{};
  for (double& p : v) p = rng.uniform(0, 32);
  auto edge = [](double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  };
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double e0 = edge(v[0], v[1], v[2], v[3], x, y);
      const double e1 = edge(v[2], v[3], v[4], v[5], x, y);
      const double e2 = edge(v[4], v[5], v[0], v[1], x, y);
      if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) c.at(y, x) = color;
    }
}

void paint_noise(Canvas& c, Rng& rng, double amplitude) {
  for (auto& p : c.px)
    for (double& ch : p) ch += amplitude * (rng.uniform() - 0.5);
}

// Smooth value noise on a coarse grid, upsampled bilinearly.
void paint_clouds(Canvas& c, Rng& rng, const Rgb& color) {
  const int grid = 3 + static_cast<int>(rng.below(4));
  std::vector<double> g(static_cast<std::size_t>((grid + 1) * (grid + 1)));
  for (double& v : g) v = rng.uniform();
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      const double gx = x * grid / 32.0, gy = y * grid / 32.0;
      const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
      const double fx = gx - x0, fy = gy - y0;
      auto at = [&](int yy, int xx) { return g[static_cast<std::size_t>(yy * (grid + 1) + xx)]; };
      const double t = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      c.at(y, x) = mix(c.at(y, x), color, t);
    }
}

}  // namespace

std::vector<std::uint8_t> synthetic_cifar_records(std::size_t count, std::uint64_t seed) {
  std::vector<std::uint8_t> out;
  out.reserve(count * kCifarRecordSize);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, "synthetic-image", i);
    const int family = static_cast<int>(rng.below(10));
    Canvas c;
    paint_gradient(c, rng);
    const Rgb accent = random_color(rng);
    const int shapes = 1 + static_cast<int>(rng.below(3));
    for (int s = 0; s < shapes; ++s) {
      const Rgb color = s == 0 ? accent : random_color(rng);
      switch (family) {
        case 0: paint_ellipse(c, rng, color); break;
        case 1: paint_rect(c, rng, color); break;
        case 2: paint_stripes(c, rng, color); break;
        case 3: paint_checker(c, rng, color); break;
        case 4: paint_rings(c, rng, color); break;
        case 5: paint_triangle(c, rng, color); break;
        case 6: paint_clouds(c, rng, color); break;
        case 7: paint_ellipse(c, rng, color); paint_rect(c, rng, random_color(rng)); break;
        case 8: paint_stripes(c, rng, color); paint_ellipse(c, rng, random_color(rng)); break;
        default: paint_clouds(c, rng, color); paint_triangle(c, rng, random_color(rng)); break;
      }
    }
    paint_noise(c, rng, rng.uniform(0.02, 0.12));

    out.push_back(static_cast<std::uint8_t>(family));
    for (int ch = 0; ch < 3; ++ch)
      for (const auto& p : c.px)
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p[ch], 0.0, 1.0) * 255.0)));
  }
  return out;
}

void write_synthetic_cifar(const std::filesystem::path& path, std::size_t count, std::uint64_t seed) {
  const auto bytes = synthetic_cifar_records(count, seed);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::filesystem::path> find_cifar_batches(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with(".bin") &&
        (name.starts_with("data_batch_") || name == "test_batch.bin")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cloneforge
