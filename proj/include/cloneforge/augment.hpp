#pragma once

#include <cstdint>

#include "cloneforge/rng.hpp"
#include "cloneforge/tensor_nn.hpp"

namespace cloneforge {

/// Ranges of the clone-generation transforms. Angles are in degrees,
/// translation is a fraction of the image side.
struct AugmentConfig {
  double rot_deg = 20.0;
  double translate_frac = 0.10;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double shear_deg = 10.0;
  double brightness = 0.3;
  double contrast = 0.3;
  double saturation = 0.2;
  int blur_kernel = 3;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AffineParams {
  double angle_deg = 0.0;
  double tx = 0.0;  // pixels
  double ty = 0.0;
  double scale = 1.0;
  double shear_deg = 0.0;
};

struct JitterParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

// All image functions take and return a single C x H x W tensor with C = 3.

/// Rotation, shear and scale about the image centre followed by translation.
/// Output pixels are inverse-mapped and bilinearly sampled; outside is 0.
Tensor apply_affine(const Tensor& img, const AffineParams& params);
Tensor apply_color_jitter(const Tensor& img, const JitterParams& params);
/// Separable Gaussian blur with reflect padding.
Tensor apply_gaussian_blur(const Tensor& img, double sigma, int kernel_size = 3);
std::vector<double> gaussian_kernel_1d(double sigma, int kernel_size);

AffineParams sample_affine(Rng& rng, const AugmentConfig& config, std::int64_t width,
                           std::int64_t height);
JitterParams sample_jitter(Rng& rng, const AugmentConfig& config);
double sample_blur_sigma(Rng& rng, const AugmentConfig& config);

Tensor random_affine(const Tensor& img, Rng& rng, const AugmentConfig& config = {});
Tensor color_jitter(const Tensor& img, Rng& rng, const AugmentConfig& config = {});
Tensor gaussian_blur(const Tensor& img, Rng& rng, const AugmentConfig& config = {});

/// affine -> jitter -> blur, one independent sub-stream per clone, so the set
/// depends only on (anchor, count, config.seed).
Tensor make_clones(const Tensor& anchor, std::int64_t count, const AugmentConfig& config);

/// BT.601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

}  // namespace cloneforge
