#pragma once

// Dense tensors and the handful of differentiable layers the clone encoder
// needs. Each layer is a forward/backward pair of free functions; backward
// accumulates parameter gradients into Param::grad and returns the gradient
// with respect to the layer input.
//
// Everything is templated on the scalar so the gradient checks can run the
// exact same code in double precision. The library itself uses float.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <new>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cloneforge {

using Shape = std::vector<std::int64_t>;

std::string shape_to_string(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

/// Cache-line aligned storage. Eigen's vectorised reductions peel unaligned
/// leading elements, so without a fixed alignment the summation order (and
/// the last bit of a result) would depend on where the allocator put a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct BasicTensor {
  Shape shape;
  AlignedVector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(Shape s, T fill = T(0))
      : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}
  BasicTensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(values.begin(), values.end()) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_to_string(shape));
    }
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }

  std::span<T> values() { return data; }
  std::span<const T> values() const { return data; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using Tensor = BasicTensor<float>;

/// A trainable tensor together with its gradient and Adam moment buffers.
template <typename T>
struct BasicParam {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
  std::int64_t step_count = 0;

  BasicParam() = default;
  explicit BasicParam(BasicTensor<T> v)
      : value(std::move(v)), grad(value.shape), adam_m(value.shape), adam_v(value.shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

using Param = BasicParam<float>;

struct Conv2dGeometry {
  int stride = 2;
  int padding = 2;
};

inline std::int64_t conv_output_size(std::int64_t in, std::int64_t kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// conv2d: cross-correlation (no kernel flip). input N x Cin x H x W,
// weight Cout x Cin x K x K, bias Cout.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                              const BasicParam<T>& bias, Conv2dGeometry geom = {});
template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output,
                               BasicParam<T>& weight, BasicParam<T>& bias, Conv2dGeometry geom = {});

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);
/// Gradient passes where input > 0; the subgradient at 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

// N x C x H x W -> N x C x 1 x 1
template <typename T>
BasicTensor<T> adaptive_avg_pool_1x1_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> adaptive_avg_pool_1x1_backward(const Shape& input_shape,
                                              const BasicTensor<T>& grad_output);

// input N x F (any trailing dims are flattened), weight d x F, bias d -> N x d
template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                              const BasicParam<T>& bias);
template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output,
                               BasicParam<T>& weight, BasicParam<T>& bias);

/// log(1 + e^x), computed without overflow.
template <typename T>
T softplus(T x) {
  if (x > T(30)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// d softplus / dx
template <typename T>
T softplus_grad(T x) {
  return sigmoid(x);
}

// N x d -> N
template <typename T>
BasicTensor<T> l2_norm_rows_forward(const BasicTensor<T>& input);
/// Row gradient is z/|z|; an all-zero row gets a zero gradient.
template <typename T>
BasicTensor<T> l2_norm_rows_backward(const BasicTensor<T>& input, const BasicTensor<T>& norms,
                                     const BasicTensor<T>& grad_norms);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2-coupled: added to the gradient before the moments
};

/// One bias-corrected Adam update over `params`; gradients are zeroed afterwards.
template <typename T>
void adam_step(std::span<BasicParam<T>* const> params, const AdamOptions& options = {});

}  // namespace cloneforge
