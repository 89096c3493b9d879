#include "cloneforge/encoder.hpp"

#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "cloneforge/rng.hpp"

namespace cloneforge {

namespace {

constexpr char kModelMagic[4] = {'C', 'F', 'E', '1'};
constexpr std::uint32_t kModelVersion = 1;

Param uniform_param(Shape shape, std::int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
  return Param(std::move(t));
}

Param zero_param(Shape shape) { return Param(Tensor(std::move(shape))); }

}  // namespace

CloneEncoder::CloneEncoder(const EncoderConfig& config) : config_(config) {
  if (config.embed_dim <= 0) {
    throw std::invalid_argument("encoder: embed_dim must be positive, got " +
                                std::to_string(config.embed_dim));
  }
  if (config.margin_mode == MarginMode::fixed && !(config.fixed_margin > 0.0f)) {
    throw std::invalid_argument("encoder: fixed margin must be positive");
  }
  Rng rng = Rng::derive(config.seed, "encoder-init");
  const auto k2 = kKernel * kKernel;
  conv1_weight = uniform_param({kChannels[0], kImageChannels, kKernel, kKernel}, kImageChannels * k2, rng);
  conv1_bias = zero_param({kChannels[0]});
  conv2_weight = uniform_param({kChannels[1], kChannels[0], kKernel, kKernel}, kChannels[0] * k2, rng);
  conv2_bias = zero_param({kChannels[1]});
  conv3_weight = uniform_param({kChannels[2], kChannels[1], kKernel, kKernel}, kChannels[1] * k2, rng);
  conv3_bias = zero_param({kChannels[2]});
  fc_weight = uniform_param({config.embed_dim, kChannels[2]}, kChannels[2], rng);
  fc_bias = zero_param({config.embed_dim});
  raw_margin = zero_param({});
}

Tensor CloneEncoder::forward(const Tensor& batch) const {
  Activations trace;
  return forward(batch, trace);
}

Tensor CloneEncoder::forward(const Tensor& batch, Activations& trace) const {
  if (batch.rank() != 4 || batch.dim(1) != kImageChannels || batch.dim(2) != kImageSide ||
      batch.dim(3) != kImageSide) {
    throw std::invalid_argument("encoder: expected N x 3 x 32 x 32 batch, got " +
                                shape_to_string(batch.shape));
  }
  trace.input = batch;
  trace.conv1 = conv2d_forward(batch, conv1_weight, conv1_bias);
  trace.relu1 = relu_forward(trace.conv1);
  trace.conv2 = conv2d_forward(trace.relu1, conv2_weight, conv2_bias);
  trace.relu2 = relu_forward(trace.conv2);
  trace.conv3 = conv2d_forward(trace.relu2, conv3_weight, conv3_bias);
  trace.relu3 = relu_forward(trace.conv3);
  trace.pooled = adaptive_avg_pool_1x1_forward(trace.relu3);
  trace.pooled.shape = {batch.dim(0), kChannels[2]};
  trace.embedding = linear_forward(trace.pooled, fc_weight, fc_bias);
  return trace.embedding;
}

void CloneEncoder::backward(const Activations& trace, const Tensor& grad_embedding) {
  Tensor g = linear_backward(trace.pooled, grad_embedding, fc_weight, fc_bias);
  g = adaptive_avg_pool_1x1_backward(trace.relu3.shape, g);
  g = relu_backward(trace.conv3, g);
  g = conv2d_backward(trace.relu2, g, conv3_weight, conv3_bias);
  g = relu_backward(trace.conv2, g);
  g = conv2d_backward(trace.relu1, g, conv2_weight, conv2_bias);
  g = relu_backward(trace.conv1, g);
  // The input gradient of the first layer is not needed.
  conv2d_backward(trace.input, g, conv1_weight, conv1_bias);
}

Tensor CloneEncoder::latent_norms(const Tensor& batch) const {
  return l2_norm_rows_forward(forward(batch));
}

float CloneEncoder::margin() const {
  if (config_.margin_mode == MarginMode::fixed) return config_.fixed_margin;
  return softplus(raw_margin.value.data[0]);
}

void CloneEncoder::accumulate_margin_grad(float dloss_dm) {
  if (config_.margin_mode == MarginMode::fixed) return;
  raw_margin.grad.data[0] += dloss_dm * softplus_grad(raw_margin.value.data[0]);
}

std::vector<Param*> CloneEncoder::trainable_parameters() {
  std::vector<Param*> params{&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias,
                             &conv3_weight, &conv3_bias, &fc_weight,    &fc_bias};
  if (config_.margin_mode == MarginMode::learned) params.push_back(&raw_margin);
  return params;
}

std::vector<Param*> CloneEncoder::all_parameters() {
  return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &conv3_weight,
          &conv3_bias,   &fc_weight,  &fc_bias,      &raw_margin};
}

std::vector<const Param*> CloneEncoder::all_parameters() const {
  return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &conv3_weight,
          &conv3_bias,   &fc_weight,  &fc_bias,      &raw_margin};
}

std::int64_t CloneEncoder::trainable_scalar_count() const {
  std::int64_t total = 0;
  for (const Param* p : all_parameters()) total += p->value.numel();
  if (config_.margin_mode == MarginMode::fixed) total -= raw_margin.value.numel();
  return total;
}

void CloneEncoder::zero_grad() {
  for (Param* p : all_parameters()) p->zero_grad();
}

// File layout: "CFE1", version u32, d u32, margin_mode u8, then tensors as
// (rank u32, dims u32 x rank, f32 payload) in the order conv1.weight,
// conv1.bias, conv2.weight, conv2.bias, conv3.weight, conv3.bias, fc.weight,
// fc.bias, raw_margin, fixed_margin. An optional (mu, m, tau) f32 trailer
// follows.
void save_encoder(const std::filesystem::path& path, const CloneEncoder& encoder,
                  const std::optional<OperatingPoint>& op) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kModelMagic, 4);
  detail::write_u32(os, kModelVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(encoder.embed_dim()));
  detail::write_u8(os, static_cast<std::uint8_t>(encoder.config().margin_mode));
  auto write_tensor = [&os](const Tensor& t) {
    detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
    for (float v : t.data) detail::write_f32(os, v);
  };
  for (const Param* p : encoder.all_parameters()) write_tensor(p->value);
  write_tensor(Tensor({}, std::vector<float>{encoder.config().fixed_margin}));
  if (op) {
    detail::write_f32(os, op->mu);
    detail::write_f32(os, op->m);
    detail::write_f32(os, op->tau);
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

LoadedEncoder load_encoder(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open model file " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kModelMagic)) {
    throw std::runtime_error(path.string() + ": not a CFE1 model file");
  }
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != kModelVersion) {
    throw std::runtime_error(path.string() + ": unsupported model version " + std::to_string(version));
  }
  EncoderConfig config;
  config.embed_dim = static_cast<int>(detail::read_u32(is, "embed_dim"));
  const std::uint8_t mode = detail::read_u8(is, "margin_mode");
  if (mode > 1) throw std::runtime_error(path.string() + ": bad margin mode");
  config.margin_mode = static_cast<MarginMode>(mode);

  auto read_tensor = [&is, &path](const Shape& expected) {
    const std::uint32_t rank = detail::read_u32(is, "tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_u32(is, "tensor dim");
    if (shape != expected) {
      throw std::runtime_error(path.string() + ": tensor shape " + shape_to_string(shape) +
                               " where " + shape_to_string(expected) + " was expected");
    }
    Tensor t(shape);
    for (float& v : t.data) v = detail::read_f32(is, "tensor payload");
    return t;
  };

  // Shapes follow from d alone, so build a skeleton and fill it in.
  EncoderConfig skeleton_config = config;
  skeleton_config.margin_mode = MarginMode::learned;
  CloneEncoder skeleton(skeleton_config);
  std::vector<Tensor> values;
  for (const Param* p : skeleton.all_parameters()) values.push_back(read_tensor(p->value.shape));
  config.fixed_margin = read_tensor({}).data[0];

  CloneEncoder encoder(config);
  auto params = encoder.all_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = Param(std::move(values[i]));

  std::optional<OperatingPoint> op;
  if (is.peek() != std::char_traits<char>::eof()) {
    OperatingPoint p;
    p.mu = detail::read_f32(is, "mu");
    p.m = detail::read_f32(is, "m");
    p.tau = detail::read_f32(is, "tau");
    if (is.peek() != std::char_traits<char>::eof()) {
      throw std::runtime_error(path.string() + ": trailing bytes after operating point");
    }
    op = p;
  }
  return LoadedEncoder{std::move(encoder), op};
}

}  // namespace cloneforge
