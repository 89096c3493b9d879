#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cloneforge/tensor_nn.hpp"

namespace cloneforge {

inline constexpr std::int64_t kImageChannels = 3;
inline constexpr std::int64_t kImageSide = 32;
inline constexpr std::int64_t kImageSize = kImageChannels * kImageSide * kImageSide;  // 3072

enum class MarginMode : std::uint8_t { learned = 0, fixed = 1 };

struct EncoderConfig {
  int embed_dim = 128;
  MarginMode margin_mode = MarginMode::learned;
  float fixed_margin = 0.5f;
  std::uint64_t seed = 0;

  /// Embedding sizes the reference experiments used; anything else still works.
  bool is_reference_dim() const { return embed_dim == 64 || embed_dim == 128; }
};

/// Operating point stored next to a trained encoder.
struct OperatingPoint {
  float mu = 0.0f;
  float m = 0.0f;
  float tau = 0.0f;
};

/// Three stride-2 5x5 convolutions (32, 64, 128 channels) with ReLU, global
/// average pooling and a linear projection to `embed_dim`, plus the raw
/// margin parameter whose softplus is the decision margin.
class CloneEncoder {
 public:
  static constexpr std::array<std::int64_t, 3> kChannels{32, 64, 128};
  static constexpr std::int64_t kKernel = 5;

  /// Layer inputs kept by a forward pass so backward can run.
  struct Activations {
    Tensor input;
    Tensor conv1, relu1, conv2, relu2, conv3, relu3;
    Tensor pooled;     // N x 128 (flattened)
    Tensor embedding;  // N x d
  };

  explicit CloneEncoder(const EncoderConfig& config);

  const EncoderConfig& config() const { return config_; }
  int embed_dim() const { return config_.embed_dim; }

  Tensor forward(const Tensor& batch) const;
  Tensor forward(const Tensor& batch, Activations& trace) const;
  /// Backpropagates d(loss)/d(embedding) into every parameter gradient.
  void backward(const Activations& trace, const Tensor& grad_embedding);

  Tensor latent_norms(const Tensor& batch) const;

  float margin() const;
  /// Adds d(loss)/d(m) to the raw margin gradient; a no-op in fixed mode.
  void accumulate_margin_grad(float dloss_dm);

  /// Parameters the optimizer updates. The raw margin is left out in fixed mode.
  std::vector<Param*> trainable_parameters();
  /// Every parameter tensor in persistence order (raw margin last).
  std::vector<Param*> all_parameters();
  std::vector<const Param*> all_parameters() const;
  std::int64_t trainable_scalar_count() const;
  void zero_grad();

  Param conv1_weight, conv1_bias;
  Param conv2_weight, conv2_bias;
  Param conv3_weight, conv3_bias;
  Param fc_weight, fc_bias;
  Param raw_margin;

 private:
  EncoderConfig config_;
};

/// Writes the "CFE1" little-endian model file. With an operating point the
/// trailing (mu, m, tau) block is appended.
void save_encoder(const std::filesystem::path& path, const CloneEncoder& encoder,
                  const std::optional<OperatingPoint>& op = std::nullopt);

struct LoadedEncoder {
  CloneEncoder encoder;
  std::optional<OperatingPoint> operating_point;
};

LoadedEncoder load_encoder(const std::filesystem::path& path);

}  // namespace cloneforge
