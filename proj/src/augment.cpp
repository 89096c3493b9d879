#include "cloneforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cloneforge {

void AugmentConfig::validate() const {
  if (!(rot_deg >= 0 && translate_frac >= 0 && shear_deg >= 0)) {
    throw std::invalid_argument("augment: negative geometric range");
  }
  if (!(scale_min > 0 && scale_max >= scale_min)) throw std::invalid_argument("augment: bad scale range");
  if (!(brightness >= 0 && brightness < 1 && contrast >= 0 && contrast < 1 && saturation >= 0 &&
        saturation < 1)) {
    throw std::invalid_argument("augment: jitter strengths must lie in [0, 1)");
  }
  if (blur_kernel < 1 || blur_kernel % 2 == 0) throw std::invalid_argument("augment: blur kernel must be odd");
  if (!(blur_sigma_min > 0 && blur_sigma_max >= blur_sigma_min)) {
    throw std::invalid_argument("augment: bad blur sigma range");
  }
}

namespace {

struct ImageDims {
  std::int64_t c, h, w;
};

ImageDims image_dims(const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw std::invalid_argument("augment: expected 3 x H x W image, got " + shape_to_string(img.shape));
  }
  return {img.dim(0), img.dim(1), img.dim(2)};
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

Tensor apply_affine(const Tensor& img, const AffineParams& p) {
  const auto [channels, h, w] = image_dims(img);
  const double rad = p.angle_deg * std::numbers::pi / 180.0;
  const double shear = std::tan(p.shear_deg * std::numbers::pi / 180.0);
  const double cs = std::cos(rad), sn = std::sin(rad);
  // Forward linear part: rotation * x-shear * scale.
  const double a = p.scale * cs;
  const double b = p.scale * (cs * shear - sn);
  const double c = p.scale * sn;
  const double d = p.scale * (sn * shear + cs);
  const double det = a * d - b * c;
  if (det == 0.0) throw std::invalid_argument("augment: singular affine transform");
  const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;
  const double cx = static_cast<double>(w - 1) * 0.5;
  const double cy = static_cast<double>(h - 1) * 0.5;

  Tensor out(img.shape);
  const std::int64_t plane = h * w;
  for (std::int64_t oy = 0; oy < h; ++oy) {
    for (std::int64_t ox = 0; ox < w; ++ox) {
      const double rx = static_cast<double>(ox) - cx - p.tx;
      const double ry = static_cast<double>(oy) - cy - p.ty;
      const double sx = ia * rx + ib * ry + cx;
      const double sy = ic * rx + id * ry + cy;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const auto x0 = static_cast<std::int64_t>(fx0), y0 = static_cast<std::int64_t>(fy0);
      const double fx = sx - fx0, fy = sy - fy0;
      const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy, w11 = fx * fy;
      for (std::int64_t ch = 0; ch < channels; ++ch) {
        const float* src = img.data.data() + ch * plane;
        auto at = [&](std::int64_t y, std::int64_t x) -> double {
          return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : src[y * w + x];
        };
        double v = w00 * at(y0, x0);
        if (w01 != 0.0) v += w01 * at(y0, x0 + 1);
        if (w10 != 0.0) v += w10 * at(y0 + 1, x0);
        if (w11 != 0.0) v += w11 * at(y0 + 1, x0 + 1);
        out.data[ch * plane + oy * w + ox] = clamp01(v);
      }
    }
  }
  return out;
}

Tensor apply_color_jitter(const Tensor& img, const JitterParams& p) {
  const auto [channels, h, w] = image_dims(img);
  (void)channels;
  const std::int64_t plane = h * w;
  Tensor out = img;
  float* r = out.data.data();
  float* g = r + plane;
  float* b = g + plane;

  if (p.brightness != 1.0) {
    for (float& v : out.data) v = clamp01(p.brightness * v);
  }
  if (p.contrast != 1.0) {
    double gray_sum = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) gray_sum += kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
    const double gray_mean = gray_sum / static_cast<double>(plane);
    for (float& v : out.data) v = clamp01(p.contrast * v + (1.0 - p.contrast) * gray_mean);
  }
  if (p.saturation != 1.0) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const double gray = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
      r[i] = clamp01(p.saturation * r[i] + (1.0 - p.saturation) * gray);
      g[i] = clamp01(p.saturation * g[i] + (1.0 - p.saturation) * gray);
      b[i] = clamp01(p.saturation * b[i] + (1.0 - p.saturation) * gray);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel_1d(double sigma, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("blur: kernel size must be odd");
  if (!(sigma > 0)) throw std::invalid_argument("blur: sigma must be positive");
  const int half = kernel_size / 2;
  std::vector<double> k(static_cast<std::size_t>(kernel_size));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + half)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace {

std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

Tensor apply_gaussian_blur(const Tensor& img, double sigma, int kernel_size) {
  const auto [channels, h, w] = image_dims(img);
  const std::vector<double> k = gaussian_kernel_1d(sigma, kernel_size);
  const int half = kernel_size / 2;
  const std::int64_t plane = h * w;
  std::vector<double> tmp(static_cast<std::size_t>(plane));
  Tensor out(img.shape);
  for (std::int64_t ch = 0; ch < channels; ++ch) {
    const float* src = img.data.data() + ch * plane;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -half; t <= half; ++t) acc += k[t + half] * src[y * w + reflect(x + t, w)];
        tmp[y * w + x] = acc;
      }
    }
    float* dst = out.data.data() + ch * plane;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -half; t <= half; ++t) acc += k[t + half] * tmp[reflect(y + t, h) * w + x];
        dst[y * w + x] = clamp01(acc);
      }
    }
  }
  return out;
}

AffineParams sample_affine(Rng& rng, const AugmentConfig& config, std::int64_t width,
                           std::int64_t height) {
  AffineParams p;
  p.angle_deg = rng.uniform(-config.rot_deg, config.rot_deg);
  const double max_dx = config.translate_frac * static_cast<double>(width);
  const double max_dy = config.translate_frac * static_cast<double>(height);
  p.tx = rng.uniform(-max_dx, max_dx);
  p.ty = rng.uniform(-max_dy, max_dy);
  p.scale = rng.uniform(config.scale_min, config.scale_max);
  p.shear_deg = rng.uniform(-config.shear_deg, config.shear_deg);
  return p;
}

JitterParams sample_jitter(Rng& rng, const AugmentConfig& config) {
  JitterParams p;
  p.brightness = rng.uniform(1.0 - config.brightness, 1.0 + config.brightness);
  p.contrast = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast);
  p.saturation = rng.uniform(1.0 - config.saturation, 1.0 + config.saturation);
  return p;
}

double sample_blur_sigma(Rng& rng, const AugmentConfig& config) {
  return rng.uniform(config.blur_sigma_min, config.blur_sigma_max);
}

Tensor random_affine(const Tensor& img, Rng& rng, const AugmentConfig& config) {
  const auto dims = image_dims(img);
  return apply_affine(img, sample_affine(rng, config, dims.w, dims.h));
}

Tensor color_jitter(const Tensor& img, Rng& rng, const AugmentConfig& config) {
  return apply_color_jitter(img, sample_jitter(rng, config));
}

Tensor gaussian_blur(const Tensor& img, Rng& rng, const AugmentConfig& config) {
  return apply_gaussian_blur(img, sample_blur_sigma(rng, config), config.blur_kernel);
}

Tensor make_clones(const Tensor& anchor, std::int64_t count, const AugmentConfig& config) {
  if (count < 1) throw std::invalid_argument("make_clones: count must be at least 1");
  config.validate();
  const auto dims = image_dims(anchor);
  const std::int64_t size = anchor.numel();
  Tensor clones({count, dims.c, dims.h, dims.w});
  for (std::int64_t i = 0; i < count; ++i) {
    Rng rng = Rng::derive(config.seed, "clone", static_cast<std::uint64_t>(i));
    Tensor view = random_affine(anchor, rng, config);
    view = color_jitter(view, rng, config);
    view = gaussian_blur(view, rng, config);
    std::copy(view.data.begin(), view.data.end(), clones.data.begin() + i * size);
  }
  return clones;
}

}  // namespace cloneforge
