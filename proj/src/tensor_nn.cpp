#include "cloneforge/tensor_nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <sstream>

namespace cloneforge {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvDims {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo;
  std::int64_t patch() const { return cin * kh * kw; }
  std::int64_t positions() const { return ho * wo; }
};

template <typename T>
ConvDims check_conv(const BasicTensor<T>& input, const BasicParam<T>& weight,
                    const BasicParam<T>& bias, Conv2dGeometry geom) {
  if (input.rank() != 4) {
    throw std::invalid_argument("conv2d: expected N x C x H x W input, got " +
                                shape_to_string(input.shape));
  }
  if (weight.value.rank() != 4) {
    throw std::invalid_argument("conv2d: expected Cout x Cin x K x K weight, got " +
                                shape_to_string(weight.value.shape));
  }
  ConvDims d{};
  d.n = input.dim(0);
  d.cin = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.cout = weight.value.dim(0);
  d.kh = weight.value.dim(2);
  d.kw = weight.value.dim(3);
  if (weight.value.dim(1) != d.cin) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(d.cin) +
                                " channels but weight expects " +
                                std::to_string(weight.value.dim(1)));
  }
  if (bias.value.numel() != d.cout) {
    throw std::invalid_argument("conv2d: bias length does not match output channels");
  }
  if (d.h < 1 || d.w < 1) throw std::invalid_argument("conv2d: empty spatial extent");
  if (geom.stride < 1 || geom.padding < 0) throw std::invalid_argument("conv2d: bad geometry");
  d.ho = conv_output_size(d.h, d.kh, geom.stride, geom.padding);
  d.wo = conv_output_size(d.w, d.kw, geom.stride, geom.padding);
  if (d.ho < 1 || d.wo < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
  return d;
}

// Unfolds one image (Cin x H x W) into a (Cin*K*K) x (Ho*Wo) column matrix.
template <typename T>
void im2col(const T* image, const ConvDims& d, Conv2dGeometry g, T* cols) {
  const std::int64_t positions = d.positions();
  for (std::int64_t c = 0; c < d.cin; ++c) {
    const T* plane = image + c * d.h * d.w;
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      for (std::int64_t kx = 0; kx < d.kw; ++kx) {
        T* row = cols + ((c * d.kh + ky) * d.kw + kx) * positions;
        for (std::int64_t oy = 0; oy < d.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          T* out = row + oy * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(out, out + d.wo, T(0));
            continue;
          }
          const T* src = plane + iy * d.w;
          for (std::int64_t ox = 0; ox < d.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            out[ox] = (ix < 0 || ix >= d.w) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accumulate(const T* cols, const ConvDims& d, Conv2dGeometry g, T* image) {
  const std::int64_t positions = d.positions();
  for (std::int64_t c = 0; c < d.cin; ++c) {
    T* plane = image + c * d.h * d.w;
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      for (std::int64_t kx = 0; kx < d.kw; ++kx) {
        const T* row = cols + ((c * d.kh + ky) * d.kw + kx) * positions;
        for (std::int64_t oy = 0; oy < d.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= d.h) continue;
          T* dst = plane + iy * d.w;
          for (std::int64_t ox = 0; ox < d.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += row[oy * d.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                              const BasicParam<T>& bias, Conv2dGeometry geom) {
  const ConvDims d = check_conv(input, weight, bias, geom);
  BasicTensor<T> output({d.n, d.cout, d.ho, d.wo});
  std::vector<T> cols(static_cast<std::size_t>(d.patch() * d.positions()));
  ConstMatrixMap<T> w(weight.value.data.data(), d.cout, d.patch());
  ConstMatrixMap<T> colm(cols.data(), d.patch(), d.positions());
  const std::int64_t in_stride = d.cin * d.h * d.w;
  const std::int64_t out_stride = d.cout * d.positions();

  // One fixed-size GEMM per image: an image's output never depends on the
  // rest of the batch, bit for bit.
  for (std::int64_t n = 0; n < d.n; ++n) {
    im2col(input.data.data() + n * in_stride, d, geom, cols.data());
    MatrixMap<T> out(output.data.data() + n * out_stride, d.cout, d.positions());
    out.noalias() = w * colm;
    for (std::int64_t c = 0; c < d.cout; ++c) out.row(c).array() += bias.value.data[c];
  }
  return output;
}

template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output,
                               BasicParam<T>& weight, BasicParam<T>& bias, Conv2dGeometry geom) {
  const ConvDims d = check_conv(input, weight, bias, geom);
  if (grad_output.shape != Shape{d.n, d.cout, d.ho, d.wo}) {
    throw std::invalid_argument("conv2d backward: grad shape " + shape_to_string(grad_output.shape) +
                                " does not match output");
  }
  BasicTensor<T> grad_input(input.shape);
  std::vector<T> cols(static_cast<std::size_t>(d.patch() * d.positions()));
  std::vector<T> grad_cols(cols.size());
  ConstMatrixMap<T> w(weight.value.data.data(), d.cout, d.patch());
  MatrixMap<T> grad_w(weight.grad.data.data(), d.cout, d.patch());
  MatrixMap<T> colm(cols.data(), d.patch(), d.positions());
  MatrixMap<T> grad_colm(grad_cols.data(), d.patch(), d.positions());
  const std::int64_t in_stride = d.cin * d.h * d.w;
  const std::int64_t out_stride = d.cout * d.positions();

  for (std::int64_t n = 0; n < d.n; ++n) {
    im2col(input.data.data() + n * in_stride, d, geom, cols.data());
    ConstMatrixMap<T> g(grad_output.data.data() + n * out_stride, d.cout, d.positions());
    grad_w.noalias() += g * colm.transpose();
    for (std::int64_t c = 0; c < d.cout; ++c) bias.grad.data[c] += g.row(c).sum();
    grad_colm.noalias() = w.transpose() * g;
    col2im_accumulate(grad_cols.data(), d, geom, grad_input.data.data() + n * in_stride);
  }
  return grad_input;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i) out.data[i] = std::max(input.data[i], T(0));
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
  if (input.shape != grad_output.shape) throw std::invalid_argument("relu backward: shape mismatch");
  BasicTensor<T> grad(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    grad.data[i] = input.data[i] > T(0) ? grad_output.data[i] : T(0);
  return grad;
}

template <typename T>
BasicTensor<T> adaptive_avg_pool_1x1_forward(const BasicTensor<T>& input) {
  if (input.rank() != 4) throw std::invalid_argument("pool: expected N x C x H x W input");
  const std::int64_t planes = input.dim(0) * input.dim(1);
  const std::int64_t area = input.dim(2) * input.dim(3);
  if (area < 1) throw std::invalid_argument("pool: empty spatial extent");
  BasicTensor<T> out({input.dim(0), input.dim(1), 1, 1});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = input.data.data() + p * area;
    T sum = T(0);
    for (std::int64_t i = 0; i < area; ++i) sum += src[i];
    out.data[p] = sum / static_cast<T>(area);
  }
  return out;
}

template <typename T>
BasicTensor<T> adaptive_avg_pool_1x1_backward(const Shape& input_shape,
                                              const BasicTensor<T>& grad_output) {
  if (input_shape.size() != 4) throw std::invalid_argument("pool backward: expected rank-4 shape");
  const std::int64_t planes = input_shape[0] * input_shape[1];
  const std::int64_t area = input_shape[2] * input_shape[3];
  if (grad_output.numel() != planes) throw std::invalid_argument("pool backward: shape mismatch");
  BasicTensor<T> grad(input_shape);
  for (std::int64_t p = 0; p < planes; ++p) {
    const T g = grad_output.data[p] / static_cast<T>(area);
    std::fill_n(grad.data.data() + p * area, area, g);
  }
  return grad;
}

namespace {

template <typename T>
std::pair<std::int64_t, std::int64_t> linear_dims(const BasicTensor<T>& input,
                                                  const BasicParam<T>& weight,
                                                  const BasicParam<T>& bias) {
  if (input.rank() < 1 || weight.value.rank() != 2) {
    throw std::invalid_argument("linear: expected N x F input and d x F weight");
  }
  const std::int64_t n = input.dim(0);
  const std::int64_t features = n == 0 ? 0 : input.numel() / n;
  if (features != weight.value.dim(1)) {
    throw std::invalid_argument("linear: input has " + std::to_string(features) +
                                " features but weight expects " + std::to_string(weight.value.dim(1)));
  }
  if (bias.value.numel() != weight.value.dim(0)) {
    throw std::invalid_argument("linear: bias length does not match output size");
  }
  return {n, features};
}

}  // namespace

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                              const BasicParam<T>& bias) {
  const auto [n, features] = linear_dims(input, weight, bias);
  const std::int64_t out_dim = weight.value.dim(0);
  BasicTensor<T> out({n, out_dim});
  // Plain loops with a fixed summation order keep each row independent of N.
  for (std::int64_t r = 0; r < n; ++r) {
    const T* x = input.data.data() + r * features;
    for (std::int64_t j = 0; j < out_dim; ++j) {
      const T* wrow = weight.value.data.data() + j * features;
      T acc = T(0);
      for (std::int64_t k = 0; k < features; ++k) acc += x[k] * wrow[k];
      out.data[r * out_dim + j] = acc + bias.value.data[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output,
                               BasicParam<T>& weight, BasicParam<T>& bias) {
  const auto [n, features] = linear_dims(input, weight, bias);
  const std::int64_t out_dim = weight.value.dim(0);
  if (grad_output.numel() != n * out_dim) throw std::invalid_argument("linear backward: shape mismatch");
  BasicTensor<T> grad_input(input.shape);
  for (std::int64_t r = 0; r < n; ++r) {
    const T* x = input.data.data() + r * features;
    T* gx = grad_input.data.data() + r * features;
    for (std::int64_t j = 0; j < out_dim; ++j) {
      const T g = grad_output.data[r * out_dim + j];
      if (g == T(0)) continue;
      T* gw = weight.grad.data.data() + j * features;
      const T* wrow = weight.value.data.data() + j * features;
      for (std::int64_t k = 0; k < features; ++k) {
        gw[k] += g * x[k];
        gx[k] += g * wrow[k];
      }
      bias.grad.data[j] += g;
    }
  }
  return grad_input;
}

template <typename T>
BasicTensor<T> l2_norm_rows_forward(const BasicTensor<T>& input) {
  if (input.rank() != 2) throw std::invalid_argument("l2_norm_rows: expected N x d input");
  const std::int64_t n = input.dim(0), d = input.dim(1);
  BasicTensor<T> norms({n});
  for (std::int64_t r = 0; r < n; ++r) {
    const T* z = input.data.data() + r * d;
    T sq = T(0);
    for (std::int64_t k = 0; k < d; ++k) sq += z[k] * z[k];
    norms.data[r] = std::sqrt(sq);
  }
  return norms;
}

template <typename T>
BasicTensor<T> l2_norm_rows_backward(const BasicTensor<T>& input, const BasicTensor<T>& norms,
                                     const BasicTensor<T>& grad_norms) {
  if (input.rank() != 2) throw std::invalid_argument("l2_norm_rows backward: expected N x d input");
  const std::int64_t n = input.dim(0), d = input.dim(1);
  if (norms.numel() != n || grad_norms.numel() != n) {
    throw std::invalid_argument("l2_norm_rows backward: shape mismatch");
  }
  BasicTensor<T> grad(input.shape);
  for (std::int64_t r = 0; r < n; ++r) {
    const T norm = norms.data[r];
    if (norm == T(0)) continue;
    const T scale = grad_norms.data[r] / norm;
    for (std::int64_t k = 0; k < d; ++k) grad.data[r * d + k] = scale * input.data[r * d + k];
  }
  return grad;
}

template <typename T>
void adam_step(std::span<BasicParam<T>* const> params, const AdamOptions& options) {
  for (BasicParam<T>* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(options.beta1, t);
    const double bc2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      double g = p->grad.data[i];
      if (options.weight_decay > 0.0) g += options.weight_decay * p->value.data[i];
      const double m = options.beta1 * p->adam_m.data[i] + (1.0 - options.beta1) * g;
      const double v = options.beta2 * p->adam_v.data[i] + (1.0 - options.beta2) * g * g;
      p->adam_m.data[i] = static_cast<T>(m);
      p->adam_v.data[i] = static_cast<T>(v);
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p->value.data[i] =
          static_cast<T>(p->value.data[i] - options.lr * m_hat / (std::sqrt(v_hat) + options.eps));
    }
    p->zero_grad();
  }
}

#define CLONEFORGE_INSTANTIATE(T)                                                                   \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicParam<T>&,              \
                                         const BasicParam<T>&, Conv2dGeometry);                     \
  template BasicTensor<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                          BasicParam<T>&, BasicParam<T>&, Conv2dGeometry);          \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                      \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> adaptive_avg_pool_1x1_forward(const BasicTensor<T>&);                     \
  template BasicTensor<T> adaptive_avg_pool_1x1_backward(const Shape&, const BasicTensor<T>&);      \
  template BasicTensor<T> linear_forward(const BasicTensor<T>&, const BasicParam<T>&,              \
                                         const BasicParam<T>&);                                     \
  template BasicTensor<T> linear_backward(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                          BasicParam<T>&, BasicParam<T>&);                          \
  template BasicTensor<T> l2_norm_rows_forward(const BasicTensor<T>&);                              \
  template BasicTensor<T> l2_norm_rows_backward(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                                const BasicTensor<T>&);                             \
  template void adam_step(std::span<BasicParam<T>* const>, const AdamOptions&);

CLONEFORGE_INSTANTIATE(float)
CLONEFORGE_INSTANTIATE(double)

#undef CLONEFORGE_INSTANTIATE

}  // namespace cloneforge
