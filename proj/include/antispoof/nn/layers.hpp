#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "antispoof/error.hpp"
#include "antispoof/nn/gemm.hpp"
#include "antispoof/nn/tensor.hpp"

namespace antispoof::nn {

using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

namespace detail {

// Views a [C,H,W] or [N,C,H,W] shape as a batch of images.
struct ImageBatch {
  std::size_t n, c, h, w;
  bool batched;
};

inline ImageBatch image_batch(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " +
                   shape_string(s));
}

inline Shape image_shape(const ImageBatch& b, std::size_t c, std::size_t h,
                         std::size_t w) {
  if (b.batched) return {b.n, c, h, w};
  return {c, h, w};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernels, kernel_h, kernel_w;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
};

inline ConvGeometry conv_geometry(std::size_t channels, std::size_t height,
                                  std::size_t width, std::size_t kernels,
                                  std::size_t kernel_h, std::size_t kernel_w,
                                  std::size_t stride, std::size_t pad) {
  if (stride < 1) throw ShapeError("conv: stride must be >= 1");
  if (kernel_h < 1 || kernel_w < 1) throw ShapeError("conv: empty kernel");
  if (height + 2 * pad < kernel_h || width + 2 * pad < kernel_w) {
    throw ShapeError("conv: kernel larger than padded input");
  }
  return {channels, height, width, kernels, kernel_h, kernel_w, stride, pad,
          (height + 2 * pad - kernel_h) / stride + 1,
          (width + 2 * pad - kernel_w) / stride + 1};
}

namespace detail {

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                   static_cast<std::ptrdiff_t>(g.pad);
          T* out = row + oy * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.out_w, T{0});
            continue;
          }
          const T* src = plane + y * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                     static_cast<std::ptrdiff_t>(g.pad);
            out[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) ? T{0} : src[x];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const ConvGeometry& g, const T* col, T* image) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                   static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const T* in = row + oy * g.out_w;
          T* dst = plane + y * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                     static_cast<std::ptrdiff_t>(g.pad);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.width)) dst[x] += in[ox];
          }
        }
      }
    }
  }
}

template <typename T>
ConvGeometry conv_geometry_for(const ImageBatch& b, const Tensor<T>& weights,
                               std::size_t stride, std::size_t pad) {
  if (weights.rank() != 4) throw ShapeError("conv: weights must be [K,C,kh,kw]");
  if (weights.dim(1) != b.c) {
    throw ShapeError("conv: input has " + std::to_string(b.c) +
                     " channels but weights expect " + std::to_string(weights.dim(1)));
  }
  return conv_geometry(b.c, b.h, b.w, weights.dim(0), weights.dim(2),
                       weights.dim(3), stride, pad);
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias, std::size_t stride, std::size_t pad) {
  const auto b = detail::image_batch(input.shape(), "conv2d_forward");
  const auto g = detail::conv_geometry_for(b, weights, stride, pad);
  require_shape(bias, {g.kernels}, "conv2d_forward bias");

  Tensor<T> out(detail::image_shape(b, g.kernels, g.out_h, g.out_w));
  std::vector<T> col(g.patch() * g.positions());
  const std::size_t in_stride = b.c * b.h * b.w;
  const std::size_t out_stride = g.kernels * g.positions();
  for (std::size_t n = 0; n < b.n; ++n) {
    detail::im2col(g, input.data() + n * in_stride, col.data());
    T* y = out.data() + n * out_stride;
    for (std::size_t k = 0; k < g.kernels; ++k)
      std::fill(y + k * g.positions(), y + (k + 1) * g.positions(), bias[k]);
    gemm::matmul_acc(g.kernels, g.positions(), g.patch(), weights.data(),
                     col.data(), y);
  }
  return out;
}

template <typename T>
struct ConvGradients {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
ConvGradients<T> conv2d_backward(const Tensor<T>& grad_out,
                                 const Tensor<T>& cached_input,
                                 const Tensor<T>& weights, std::size_t stride,
                                 std::size_t pad, bool input_grad = true) {
  const auto b = detail::image_batch(cached_input.shape(), "conv2d_backward");
  const auto g = detail::conv_geometry_for(b, weights, stride, pad);
  require_shape(grad_out, detail::image_shape(b, g.kernels, g.out_h, g.out_w),
                "conv2d_backward grad_out");

  ConvGradients<T> grads{Tensor<T>(cached_input.shape()), Tensor<T>(weights.shape()),
                         Tensor<T>({g.kernels})};
  std::vector<T> col(g.patch() * g.positions());
  std::vector<T> dcol(input_grad ? col.size() : 0);
  std::vector<T> scratch;
  const std::size_t in_stride = b.c * b.h * b.w;
  const std::size_t out_stride = g.kernels * g.positions();
  for (std::size_t n = 0; n < b.n; ++n) {
    const T* dy = grad_out.data() + n * out_stride;
    for (std::size_t k = 0; k < g.kernels; ++k) {
      T sum{0};
      for (std::size_t p = 0; p < g.positions(); ++p) sum += dy[k * g.positions() + p];
      grads.bias[k] += sum;
    }
    detail::im2col(g, cached_input.data() + n * in_stride, col.data());
    gemm::matmul_nt_acc(g.kernels, g.patch(), g.positions(), dy, col.data(),
                        grads.weights.data(), scratch);
    if (!input_grad) continue;
    std::fill(dcol.begin(), dcol.end(), T{0});
    gemm::matmul_tn_acc(g.patch(), g.positions(), g.kernels, weights.data(), dy,
                        dcol.data(), scratch);
    detail::col2im_acc(g, dcol.data(), grads.input.data() + n * in_stride);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > T{0} ? input[i] : T{0};
  return out;
}

// Gradient flows only where the input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input) {
  require_shape(grad_out, input.shape(), "relu_backward");
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > T{0} ? grad_out[i] : T{0};
  return out;
}

// ---------------------------------------------------------------------------
// Local response normalization across channels:
//   b[c] = a[c] / (k + alpha * sum_{c' in window(c)} a[c']^2)^beta
// with the window of `size` channels centred on c and clipped to [0, C-1].

struct LrnParams {
  std::size_t size = 5;
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;

  void validate() const {
    if (size < 1 || size % 2 == 0) throw ConfigError("lrn: size must be odd and >= 1");
    if (!(k > 0)) throw ConfigError("lrn: k must be positive");
  }
};

namespace detail {

// s^(-beta), with a fast path for the common beta = 0.75.
template <typename T>
inline T pow_neg(T s, T beta) {
  if (beta == T(0.75)) return T{1} / std::sqrt(s * std::sqrt(s));
  return std::exp(-beta * std::log(s));
}

// Fills scale[c,p] = k + alpha * windowed sum of squares for one image.
template <typename T>
void lrn_scale(const LrnParams& p, std::size_t channels, std::size_t plane,
               const T* a, T* scale) {
  const std::size_t half = p.size / 2;
  const T k = static_cast<T>(p.k);
  const T alpha = static_cast<T>(p.alpha);
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t lo = c >= half ? c - half : 0;
    const std::size_t hi = std::min(channels - 1, c + half);
    T* s = scale + c * plane;
    std::fill(s, s + plane, T{0});
    for (std::size_t cc = lo; cc <= hi; ++cc) {
      const T* src = a + cc * plane;
      for (std::size_t i = 0; i < plane; ++i) s[i] += src[i] * src[i];
    }
    for (std::size_t i = 0; i < plane; ++i) s[i] = k + alpha * s[i];
  }
}

}  // namespace detail

template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& input, const LrnParams& p) {
  p.validate();
  const auto b = detail::image_batch(input.shape(), "lrn_forward");
  const std::size_t plane = b.h * b.w;
  const std::size_t stride = b.c * plane;
  const T beta = static_cast<T>(p.beta);
  Tensor<T> out(input.shape());
  std::vector<T> scale(stride);
  for (std::size_t n = 0; n < b.n; ++n) {
    const T* a = input.data() + n * stride;
    T* y = out.data() + n * stride;
    detail::lrn_scale(p, b.c, plane, a, scale.data());
    for (std::size_t i = 0; i < stride; ++i) y[i] = a[i] * detail::pow_neg(scale[i], beta);
  }
  return out;
}

template <typename T>
Tensor<T> lrn_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                       const LrnParams& p) {
  p.validate();
  require_shape(grad_out, input.shape(), "lrn_backward");
  const auto b = detail::image_batch(input.shape(), "lrn_backward");
  const std::size_t plane = b.h * b.w;
  const std::size_t stride = b.c * plane;
  const std::size_t half = p.size / 2;
  const T beta = static_cast<T>(p.beta);
  const T coeff = static_cast<T>(2.0 * p.alpha * p.beta);
  Tensor<T> grad(input.shape());
  std::vector<T> scale(stride);
  std::vector<T> weighted(stride);  // g[c] * a[c] * s[c]^(-beta-1)
  for (std::size_t n = 0; n < b.n; ++n) {
    const T* a = input.data() + n * stride;
    const T* g = grad_out.data() + n * stride;
    T* d = grad.data() + n * stride;
    detail::lrn_scale(p, b.c, plane, a, scale.data());
    for (std::size_t i = 0; i < stride; ++i) {
      const T inv = detail::pow_neg(scale[i], beta);
      d[i] = g[i] * inv;
      weighted[i] = g[i] * a[i] * inv / scale[i];
    }
    // The clipped window is symmetric, so channel j receives from every c
    // whose window contains j, i.e. every c in window(j).
    for (std::size_t j = 0; j < b.c; ++j) {
      const std::size_t lo = j >= half ? j - half : 0;
      const std::size_t hi = std::min(b.c - 1, j + half);
      for (std::size_t i = 0; i < plane; ++i) {
        T sum{0};
        for (std::size_t c = lo; c <= hi; ++c) sum += weighted[c * plane + i];
        d[j * plane + i] -= coeff * a[j * plane + i] * sum;
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Max pooling

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat index into the input per output
};

inline std::size_t pool_extent(std::size_t extent, std::size_t window,
                               std::size_t stride) {
  if (window < 1 || stride < 1) throw ShapeError("maxpool: window and stride must be >= 1");
  if (extent < window) {
    throw ShapeError("maxpool: window " + std::to_string(window) +
                     " exceeds spatial extent " + std::to_string(extent));
  }
  return (extent - window) / stride + 1;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t window,
                              std::size_t stride) {
  const auto b = detail::image_batch(input.shape(), "maxpool_forward");
  const std::size_t oh = pool_extent(b.h, window, stride);
  const std::size_t ow = pool_extent(b.w, window, stride);
  PoolResult<T> r{Tensor<T>(detail::image_shape(b, b.c, oh, ow)), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < b.n * b.c; ++plane) {
    const std::size_t base = plane * b.h * b.w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * b.w + ox * stride;
        T best_value = input[best];
        for (std::size_t wy = 0; wy < window; ++wy) {
          for (std::size_t wx = 0; wx < window; ++wx) {
            const std::size_t idx = base + (oy * stride + wy) * b.w + ox * stride + wx;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        r.output[o] = best_value;
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out,
                           const std::vector<std::size_t>& argmax,
                           const Shape& input_shape) {
  if (grad_out.size() != argmax.size())
    throw ShapeError("maxpool_backward: gradient and argmax sizes differ");
  Tensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_out[i];
  return grad;
}

// ---------------------------------------------------------------------------
// Fully connected: y = W x + b. Inputs of rank >= 2 are treated as a batch
// along the first axis and flattened per sample.

namespace detail {

inline std::pair<std::size_t, std::size_t> fc_rows(const Shape& s) {
  if (s.size() == 1) return {1, s[0]};
  if (s.empty()) throw ShapeError("fc: scalar input");
  return {s[0], shape_size(s) / s[0]};
}

}  // namespace detail

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weights,
                     const Tensor<T>& bias) {
  const auto [n, d] = detail::fc_rows(input.shape());
  if (weights.rank() != 2 || weights.dim(1) != d) {
    throw ShapeError("fc_forward: input length " + std::to_string(d) +
                     " does not match weights " + shape_string(weights.shape()));
  }
  const std::size_t m = weights.dim(0);
  require_shape(bias, {m}, "fc_forward bias");
  Tensor<T> out(input.rank() == 1 ? Shape{m} : Shape{n, m});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(bias.data(), bias.data() + m, out.data() + i * m);
  std::vector<T> scratch;
  gemm::matmul_nt_acc(n, m, d, input.data(), weights.data(), out.data(), scratch);
  return out;
}

template <typename T>
struct FcGradients {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
FcGradients<T> fc_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                           const Tensor<T>& weights) {
  const auto [n, d] = detail::fc_rows(cached_input.shape());
  const std::size_t m = weights.dim(0);
  if (grad_out.size() != n * m) throw ShapeError("fc_backward: grad_out size mismatch");
  FcGradients<T> g{Tensor<T>(cached_input.shape()), Tensor<T>(weights.shape()),
                   Tensor<T>({m})};
  std::vector<T> scratch;
  gemm::matmul_tn_acc(m, d, n, grad_out.data(), cached_input.data(),
                      g.weights.data(), scratch);
  gemm::matmul_acc(n, d, m, grad_out.data(), weights.data(), g.input.data());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) g.bias[j] += grad_out[i * m + j];
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout: training masks hold 0 or 1/(1-rate), evaluation masks
// are all ones.

template <typename T>
Tensor<T> dropout_mask(const Shape& shape, double drop_rate, Rng& rng, Mode mode) {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0))
    throw ConfigError("dropout: drop_rate must lie in [0, 1)");
  Tensor<T> mask(shape, T{1});
  if (mode == Mode::Eval || drop_rate == 0.0) return mask;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - drop_rate));
  std::bernoulli_distribution keep(1.0 - drop_rate);
  for (auto& v : mask.values()) v = keep(rng) ? keep_scale : T{0};
  return mask;
}

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(b, a.shape(), "multiply");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

// ---------------------------------------------------------------------------
// Softmax and mean cross-entropy over rows of [N,K] logits.

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const auto [n, k] = detail::fc_rows(logits.shape());
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    T* dst = out.data() + i * k;
    const T peak = *std::max_element(row, row + k);
    T total{0};
    for (std::size_t j = 0; j < k; ++j) total += dst[j] = std::exp(row[j] - peak);
    for (std::size_t j = 0; j < k; ++j) dst[j] /= total;
  }
  return out;
}

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad_logits;
};

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                    const std::vector<std::size_t>& labels) {
  const auto [n, k] = detail::fc_rows(logits.shape());
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy: label count mismatch");
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) throw ShapeError("softmax_cross_entropy: label out of range");
    const T* row = logits.data() + i * k;
    const double peak = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(double(row[j]) - peak);
    const double log_total = std::log(total);
    r.loss -= double(row[labels[i]]) - peak - log_total;
    for (std::size_t j = 0; j < k; ++j) {
      const double prob = std::exp(double(row[j]) - peak - log_total);
      r.grad_logits[i * k + j] =
          static_cast<T>((prob - (j == labels[i] ? 1.0 : 0.0)) / double(n));
    }
  }
  r.loss /= double(n);
  return r;
}

}  // namespace antispoof::nn
