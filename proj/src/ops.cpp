#include "fcnt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "fcnt/error.hpp"

namespace fcnt {

namespace {

// Output columns processed per im2col block.
constexpr std::size_t kChunk = 128;

struct ConvGeometry {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, out_h, out_w;
  std::size_t kh, kw, stride, pad;
  std::size_t k_size() const { return in_c * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

// Fills col[k * count + j] (k-major) for output positions p0..p0+count.
void im2col_kmajor(const double* in, const ConvGeometry& g, std::size_t p0, std::size_t count,
                   std::vector<std::ptrdiff_t>& iy0, std::vector<std::ptrdiff_t>& ix0, double* col) {
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t p = p0 + j;
    iy0[j] = static_cast<std::ptrdiff_t>((p / g.out_w) * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
    ix0[j] = static_cast<std::ptrdiff_t>((p % g.out_w) * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
  }
  const auto H = static_cast<std::ptrdiff_t>(g.in_h);
  const auto W = static_cast<std::ptrdiff_t>(g.in_w);
  std::size_t k = 0;
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    const double* plane = in + ci * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++k) {
        double* row = col + k * count;
        for (std::size_t j = 0; j < count; ++j) {
          const std::ptrdiff_t y = iy0[j] + static_cast<std::ptrdiff_t>(ky);
          const std::ptrdiff_t x = ix0[j] + static_cast<std::ptrdiff_t>(kx);
          row[j] = (y >= 0 && y < H && x >= 0 && x < W) ? plane[y * W + x] : 0.0;
        }
      }
    }
  }
}

// Same as im2col_kmajor but position-major: col[j * K + k].
void im2col_pmajor(const double* in, const ConvGeometry& g, std::size_t p0, std::size_t count, double* col) {
  const std::size_t K = g.k_size();
  const auto H = static_cast<std::ptrdiff_t>(g.in_h);
  const auto W = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t p = p0 + j;
    const auto iy0 = static_cast<std::ptrdiff_t>((p / g.out_w) * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
    const auto ix0 = static_cast<std::ptrdiff_t>((p % g.out_w) * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
    double* row = col + j * K;
    std::size_t k = 0;
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
      const double* plane = in + ci * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t y = iy0 + static_cast<std::ptrdiff_t>(ky);
        for (std::size_t kx = 0; kx < g.kw; ++kx, ++k) {
          const std::ptrdiff_t x = ix0 + static_cast<std::ptrdiff_t>(kx);
          row[k] = (y >= 0 && y < H && x >= 0 && x < W) ? plane[y * W + x] : 0.0;
        }
      }
    }
  }
}

// Adds col[j * K + k] back onto the input positions it was gathered from.
void col2im_pmajor(const double* col, const ConvGeometry& g, std::size_t p0, std::size_t count, double* in) {
  const std::size_t K = g.k_size();
  const auto H = static_cast<std::ptrdiff_t>(g.in_h);
  const auto W = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t p = p0 + j;
    const auto iy0 = static_cast<std::ptrdiff_t>((p / g.out_w) * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
    const auto ix0 = static_cast<std::ptrdiff_t>((p % g.out_w) * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
    const double* row = col + j * K;
    std::size_t k = 0;
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
      double* plane = in + ci * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t y = iy0 + static_cast<std::ptrdiff_t>(ky);
        for (std::size_t kx = 0; kx < g.kw; ++kx, ++k) {
          const std::ptrdiff_t x = ix0 + static_cast<std::ptrdiff_t>(kx);
          if (y >= 0 && y < H && x >= 0 && x < W) plane[y * W + x] += row[k];
        }
      }
    }
  }
}

// out[n][co][p] = bias[co] + sum_k weights[co][k] * col[k][p], with k
// ascending over (ci, ky, kx). The accumulation order is part of the
// contract: it matches a direct nested loop exactly.
void conv_forward_into(const Tensor& input, const double* weights, const double* bias, const ConvGeometry& g,
                       Tensor& out) {
  const std::size_t K = g.k_size();
  const std::size_t P = g.positions();
  std::vector<double> col(K * kChunk);
  std::vector<std::ptrdiff_t> iy0(kChunk), ix0(kChunk);
  for (std::size_t n = 0; n < input.shape().n; ++n) {
    const double* in = input.plane(n, 0);
    for (std::size_t p0 = 0; p0 < P; p0 += kChunk) {
      const std::size_t count = std::min(kChunk, P - p0);
      im2col_kmajor(in, g, p0, count, iy0, ix0, col.data());
      std::size_t co = 0;
      for (; co + 4 <= g.out_c; co += 4) {
        double* o0 = out.plane(n, co) + p0;
        double* o1 = out.plane(n, co + 1) + p0;
        double* o2 = out.plane(n, co + 2) + p0;
        double* o3 = out.plane(n, co + 3) + p0;
        const double b0 = bias ? bias[co] : 0.0;
        const double b1 = bias ? bias[co + 1] : 0.0;
        const double b2 = bias ? bias[co + 2] : 0.0;
        const double b3 = bias ? bias[co + 3] : 0.0;
        for (std::size_t j = 0; j < count; ++j) {
          o0[j] = b0;
          o1[j] = b1;
          o2[j] = b2;
          o3[j] = b3;
        }
        const double* w0 = weights + co * K;
        const double* w1 = w0 + K;
        const double* w2 = w1 + K;
        const double* w3 = w2 + K;
        for (std::size_t k = 0; k < K; ++k) {
          const double* c = col.data() + k * count;
          const double a0 = w0[k], a1 = w1[k], a2 = w2[k], a3 = w3[k];
          for (std::size_t j = 0; j < count; ++j) {
            const double v = c[j];
            o0[j] += a0 * v;
            o1[j] += a1 * v;
            o2[j] += a2 * v;
            o3[j] += a3 * v;
          }
        }
      }
      for (; co < g.out_c; ++co) {
        double* o = out.plane(n, co) + p0;
        const double b = bias ? bias[co] : 0.0;
        for (std::size_t j = 0; j < count; ++j) o[j] = b;
        const double* w = weights + co * K;
        for (std::size_t k = 0; k < K; ++k) {
          const double* c = col.data() + k * count;
          const double a = w[k];
          for (std::size_t j = 0; j < count; ++j) o[j] += a * c[j];
        }
      }
    }
  }
}

// d/dW of a convolution: grad_w[co][k] += sum_p grad_out[co][p] * col[k][p].
void conv_weight_grad_into(const Tensor& input, const Tensor& grad_out, const ConvGeometry& g, double* grad_w) {
  const std::size_t K = g.k_size();
  const std::size_t P = g.positions();
  std::vector<double> col(K * kChunk);
  for (std::size_t n = 0; n < input.shape().n; ++n) {
    const double* in = input.plane(n, 0);
    for (std::size_t p0 = 0; p0 < P; p0 += kChunk) {
      const std::size_t count = std::min(kChunk, P - p0);
      im2col_pmajor(in, g, p0, count, col.data());
      for (std::size_t co = 0; co < g.out_c; ++co) {
        const double* go = grad_out.plane(n, co) + p0;
        double* gw = grad_w + co * K;
        for (std::size_t j = 0; j < count; ++j) {
          const double gv = go[j];
          if (gv == 0.0) continue;
          const double* c = col.data() + j * K;
          for (std::size_t k = 0; k < K; ++k) gw[k] += gv * c[k];
        }
      }
    }
  }
}

// d/dx of a convolution, accumulated into `grad_in` (shape of the input).
void conv_input_grad_into(const Tensor& grad_out, const double* weights, const ConvGeometry& g, Tensor& grad_in) {
  const std::size_t K = g.k_size();
  const std::size_t P = g.positions();
  std::vector<double> col(K * kChunk);
  for (std::size_t n = 0; n < grad_out.shape().n; ++n) {
    for (std::size_t p0 = 0; p0 < P; p0 += kChunk) {
      const std::size_t count = std::min(kChunk, P - p0);
      std::fill(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(count * K), 0.0);
      for (std::size_t co = 0; co < g.out_c; ++co) {
        const double* go = grad_out.plane(n, co) + p0;
        const double* w = weights + co * K;
        for (std::size_t j = 0; j < count; ++j) {
          const double gv = go[j];
          if (gv == 0.0) continue;
          double* c = col.data() + j * K;
          for (std::size_t k = 0; k < K; ++k) c[k] += gv * w[k];
        }
      }
      col2im_pmajor(col.data(), g, p0, count, grad_in.plane(n, 0));
    }
  }
}

void bias_grad_into(const Tensor& grad_out, std::vector<double>& grad_b) {
  const Shape& s = grad_out.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* go = grad_out.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) acc += go[i];
      grad_b[c] += acc;
    }
  }
}

void check_spatial_fit(const Shape& in, const ConvParams& p) {
  if (in.h + 2 * p.padding < p.kernel_h()) {
    throw DimensionError("height", "padded input extent " + std::to_string(in.h + 2 * p.padding) +
                                       " smaller than kernel " + std::to_string(p.kernel_h()));
  }
  if (in.w + 2 * p.padding < p.kernel_w()) {
    throw DimensionError("width", "padded input extent " + std::to_string(in.w + 2 * p.padding) +
                                      " smaller than kernel " + std::to_string(p.kernel_w()));
  }
}

void require_same_shape(const Shape& got, const Shape& expected) {
  require_extent("batch", got.n, expected.n);
  require_extent("channels", got.c, expected.c);
  require_extent("height", got.h, expected.h);
  require_extent("width", got.w, expected.w);
}

}  // namespace

ConvParams ConvParams::zeros_like() const {
  ConvParams out;
  out.weights = Tensor(weights.shape());
  out.bias.assign(bias.size(), 0.0);
  out.stride = stride;
  out.padding = padding;
  return out;
}

void ConvParams::validate() const {
  const Shape& s = weights.shape();
  if (s.h < 1 || s.w < 1) throw ValidationError("kernel extents must be >= 1");
  if (s.n < 1 || s.c < 1) throw ValidationError("kernel channel counts must be >= 1");
  if (stride < 1) throw ValidationError("stride must be >= 1");
  if (!bias.empty() && bias.size() != s.n && bias.size() != s.c) {
    throw DimensionError("bias", "bias length " + std::to_string(bias.size()) + " matches no channel axis");
  }
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const ConvParams& params) {
  params.validate();
  const Shape& in = input.shape();
  const Shape& ws = params.weights.shape();
  require_extent("channels", in.c, ws.c);
  if (params.has_bias()) require_extent("bias", params.bias.size(), ws.n);
  check_spatial_fit(in, params);
  const ConvGeometry g{in.c,
                       in.h,
                       in.w,
                       ws.n,
                       conv_output_extent(in.h, ws.h, params.stride, params.padding),
                       conv_output_extent(in.w, ws.w, params.stride, params.padding),
                       ws.h,
                       ws.w,
                       params.stride,
                       params.padding};
  Tensor out({in.n, g.out_c, g.out_h, g.out_w});
  conv_forward_into(input, params.weights.data(), params.has_bias() ? params.bias.data() : nullptr, g, out);
  return out;
}

ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out) {
  params.validate();
  const Shape& in = input.shape();
  const Shape& ws = params.weights.shape();
  require_extent("channels", in.c, ws.c);
  check_spatial_fit(in, params);
  const ConvGeometry g{in.c,
                       in.h,
                       in.w,
                       ws.n,
                       conv_output_extent(in.h, ws.h, params.stride, params.padding),
                       conv_output_extent(in.w, ws.w, params.stride, params.padding),
                       ws.h,
                       ws.w,
                       params.stride,
                       params.padding};
  require_same_shape(grad_out.shape(), {in.n, g.out_c, g.out_h, g.out_w});
  ConvGradients out;
  out.grad_params = params.zeros_like();
  out.grad_input = Tensor(in);
  conv_weight_grad_into(input, grad_out, g, out.grad_params.weights.data());
  if (params.has_bias()) bias_grad_into(grad_out, out.grad_params.bias);
  conv_input_grad_into(grad_out, params.weights.data(), g, out.grad_input);
  return out;
}

namespace {

// A transposed convolution from `in` to `out` is the input-gradient of the
// ordinary convolution from `out` to `in` with the same weights.
ConvGeometry transposed_geometry(const Shape& in, const ConvParams& p) {
  const Shape& ws = p.weights.shape();
  if ((in.h - 1) * p.stride + ws.h < 2 * p.padding + 1 || (in.w - 1) * p.stride + ws.w < 2 * p.padding + 1) {
    throw DimensionError("height", "transposed convolution output would be empty");
  }
  const std::size_t out_h = (in.h - 1) * p.stride + ws.h - 2 * p.padding;
  const std::size_t out_w = (in.w - 1) * p.stride + ws.w - 2 * p.padding;
  // Geometry of the adjoint convolution: its input is our output.
  return ConvGeometry{ws.c, out_h, out_w, ws.n, in.h, in.w, ws.h, ws.w, p.stride, p.padding};
}

}  // namespace

Tensor conv_transpose2d_forward(const Tensor& input, const ConvParams& params) {
  params.validate();
  const Shape& in = input.shape();
  const Shape& ws = params.weights.shape();
  require_extent("channels", in.c, ws.n);
  if (params.has_bias()) require_extent("bias", params.bias.size(), ws.c);
  const ConvGeometry g = transposed_geometry(in, params);
  Tensor out({in.n, ws.c, g.in_h, g.in_w});
  conv_input_grad_into(input, params.weights.data(), g, out);
  if (params.has_bias()) {
    for (std::size_t n = 0; n < in.n; ++n) {
      for (std::size_t c = 0; c < ws.c; ++c) {
        double* o = out.plane(n, c);
        for (std::size_t i = 0; i < out.shape().plane(); ++i) o[i] += params.bias[c];
      }
    }
  }
  return out;
}

ConvGradients conv_transpose2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out) {
  params.validate();
  const Shape& in = input.shape();
  const Shape& ws = params.weights.shape();
  require_extent("channels", in.c, ws.n);
  const ConvGeometry g = transposed_geometry(in, params);
  require_same_shape(grad_out.shape(), {in.n, ws.c, g.in_h, g.in_w});
  ConvGradients out;
  out.grad_params = params.zeros_like();
  out.grad_input = Tensor(in);
  // grad_input is the forward convolution of grad_out.
  conv_forward_into(grad_out, params.weights.data(), nullptr, g, out.grad_input);
  // Weight gradient with the roles of input and output exchanged.
  conv_weight_grad_into(grad_out, input, g, out.grad_params.weights.data());
  if (params.has_bias()) bias_grad_into(grad_out, out.grad_params.bias);
  return out;
}

PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride) {
  if (window < 1 || stride < 1) throw ValidationError("pool window and stride must be >= 1");
  const Shape& in = input.shape();
  if (in.h == 0 || in.w == 0) throw DimensionError("height", "cannot pool an empty tensor");
  auto extent = [&](std::size_t e) { return e <= window ? std::size_t{1} : (e - window + stride - 1) / stride + 1; };
  PoolResult r;
  r.input_shape = in;
  r.output = Tensor({in.n, in.c, extent(in.h), extent(in.w)});
  r.argmax.resize(r.output.size());
  const Shape& os = r.output.shape();
  std::size_t o = 0;
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const std::size_t base = (n * in.c + c) * in.plane();
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = base;
          for (std::size_t dy = 0; dy < window; ++dy) {
            const std::size_t y = std::min(oy * stride + dy, in.h - 1);
            for (std::size_t dx = 0; dx < window; ++dx) {
              const std::size_t x = std::min(ox * stride + dx, in.w - 1);
              const std::size_t idx = base + y * in.w + x;
              if (input[idx] > best) {
                best = input[idx];
                best_idx = idx;
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = best_idx;
        }
      }
    }
  }
  return r;
}

Tensor maxpool_backward(const PoolResult& pool, const Tensor& grad_out) {
  require_same_shape(grad_out.shape(), pool.output.shape());
  Tensor grad_in(pool.input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[pool.argmax[i]] += grad_out[i];
  return grad_in;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad_out) {
  require_same_shape(grad_out.shape(), output.shape());
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(b.shape(), a.shape());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor pad_replicate(const Tensor& input, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right) {
  const Shape& in = input.shape();
  if (in.h == 0 || in.w == 0) throw DimensionError("height", "cannot pad an empty tensor");
  Tensor out({in.n, in.c, in.h + top + bottom, in.w + left + right});
  const Shape& os = out.shape();
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const double* src = input.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t y = 0; y < os.h; ++y) {
        const std::size_t sy = std::min(y < top ? 0 : y - top, in.h - 1);
        for (std::size_t x = 0; x < os.w; ++x) {
          const std::size_t sx = std::min(x < left ? 0 : x - left, in.w - 1);
          dst[y * os.w + x] = src[sy * in.w + sx];
        }
      }
    }
  }
  return out;
}

Tensor pad_replicate_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t top, std::size_t left) {
  const Shape& os = grad_out.shape();
  const Shape& in = input_shape;
  require_extent("batch", os.n, in.n);
  require_extent("channels", os.c, in.c);
  Tensor grad_in(in);
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const double* src = grad_out.plane(n, c);
      double* dst = grad_in.plane(n, c);
      for (std::size_t y = 0; y < os.h; ++y) {
        const std::size_t sy = std::min(y < top ? 0 : y - top, in.h - 1);
        for (std::size_t x = 0; x < os.w; ++x) {
          const std::size_t sx = std::min(x < left ? 0 : x - left, in.w - 1);
          dst[sy * in.w + sx] += src[y * os.w + x];
        }
      }
    }
  }
  return grad_in;
}

Tensor crop(const Tensor& input, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const Shape& in = input.shape();
  if (y0 + h > in.h) throw DimensionError("height", "crop window exceeds tensor");
  if (x0 + w > in.w) throw DimensionError("width", "crop window exceeds tensor");
  Tensor out({in.n, in.c, h, w});
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const double* src = input.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(src + (y0 + y) * in.w + x0, w, dst + y * w);
      }
    }
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;  // weight of `hi`
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  const Shape& in = input.shape();
  if (in.h == 0 || in.w == 0 || out_h == 0 || out_w == 0) throw DimensionError("height", "empty resize");
  const auto ty = bilinear_taps(in.h, out_h);
  const auto tx = bilinear_taps(in.w, out_w);
  Tensor out({in.n, in.c, out_h, out_w});
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const double* src = input.plane(n, c);
      double* dst = out.plane(n, c);
      for (std::size_t y = 0; y < out_h; ++y) {
        const Tap& a = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
          const Tap& b = tx[x];
          const double top = (1.0 - b.frac) * src[a.lo * in.w + b.lo] + b.frac * src[a.lo * in.w + b.hi];
          const double bot = (1.0 - b.frac) * src[a.hi * in.w + b.lo] + b.frac * src[a.hi * in.w + b.hi];
          dst[y * out_w + x] = (1.0 - a.frac) * top + a.frac * bot;
        }
      }
    }
  }
  return out;
}

Tensor resize_bilinear_backward(const Tensor& grad_out, const Shape& input_shape) {
  const Shape& os = grad_out.shape();
  const Shape& in = input_shape;
  require_extent("batch", os.n, in.n);
  require_extent("channels", os.c, in.c);
  const auto ty = bilinear_taps(in.h, os.h);
  const auto tx = bilinear_taps(in.w, os.w);
  Tensor grad_in(in);
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const double* src = grad_out.plane(n, c);
      double* dst = grad_in.plane(n, c);
      for (std::size_t y = 0; y < os.h; ++y) {
        const Tap& a = ty[y];
        for (std::size_t x = 0; x < os.w; ++x) {
          const Tap& b = tx[x];
          const double g = src[y * os.w + x];
          dst[a.lo * in.w + b.lo] += (1.0 - a.frac) * (1.0 - b.frac) * g;
          dst[a.lo * in.w + b.hi] += (1.0 - a.frac) * b.frac * g;
          dst[a.hi * in.w + b.lo] += a.frac * (1.0 - b.frac) * g;
          dst[a.hi * in.w + b.hi] += a.frac * b.frac * g;
        }
      }
    }
  }
  return grad_in;
}

ConvParams bilinear_upsample_kernel(std::size_t channels, std::size_t factor) {
  if (factor == 0) throw ValidationError("upsampling factor must be >= 1");
  if (factor > 1 && factor % 2 != 0) {
    throw ValidationError("learned upsampling supports factor 1 or even factors, got " + std::to_string(factor));
  }
  const std::size_t k = 2 * factor;
  const double center = static_cast<double>(factor) - 0.5;
  ConvParams p;
  p.weights = Tensor({channels, channels, k, k});
  p.stride = factor;
  p.padding = 3 * factor / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < k; ++y) {
      for (std::size_t x = 0; x < k; ++x) {
        const double wy = 1.0 - std::abs(static_cast<double>(y) - center) / static_cast<double>(factor);
        const double wx = 1.0 - std::abs(static_cast<double>(x) - center) / static_cast<double>(factor);
        p.weights.at(c, c, y, x) = wy * wx;
      }
    }
  }
  return p;
}

Tensor upsample_learned(const Tensor& input, const ConvParams& kernel, std::size_t factor) {
  if (factor == 0) throw ValidationError("upsampling factor must be >= 1");
  if (factor == 1) return input;
  if (kernel.stride != factor) throw ValidationError("kernel stride does not match upsampling factor");
  return conv_transpose2d_forward(pad_replicate(input, 1, 1, 1, 1), kernel);
}

ConvGradients upsample_learned_backward(const Tensor& input, const ConvParams& kernel, std::size_t factor,
                                        const Tensor& grad_out) {
  if (factor == 0) throw ValidationError("upsampling factor must be >= 1");
  if (factor == 1) return {grad_out, kernel.zeros_like()};
  const Tensor padded = pad_replicate(input, 1, 1, 1, 1);
  ConvGradients g = conv_transpose2d_backward(padded, kernel, grad_out);
  g.grad_input = pad_replicate_backward(g.grad_input, input.shape(), 1, 1);
  return g;
}

Tensor upsample(const Tensor& input, std::size_t factor, UpsampleMode mode) {
  if (factor == 0) throw ValidationError("upsampling factor must be >= 1");
  if (factor == 1) return input;
  const Shape& s = input.shape();
  if (mode == UpsampleMode::bilinear) return resize_bilinear(input, s.h * factor, s.w * factor);
  return upsample_learned(input, bilinear_upsample_kernel(s.c, factor), factor);
}

XentResult softmax_xent_pixelwise(const Tensor& scores, const LabelMap& target) {
  const Shape& s = scores.shape();
  require_extent("batch", s.n, 1);
  require_extent("height", target.height(), s.h);
  require_extent("width", target.width(), s.w);
  if (s.c < 1) throw DimensionError("channels", "score volume has no classes");
  XentResult r;
  r.grad = Tensor(s);
  const std::size_t P = s.plane();
  for (std::size_t p = 0; p < P; ++p) {
    const Label t = target[p];
    if (t == kIgnoreLabel) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= s.c) {
      throw ValidationError("target label " + std::to_string(t) + " outside [0, " + std::to_string(s.c) + ")");
    }
    ++r.counted_pixels;
  }
  if (r.counted_pixels == 0) {
    r.all_ignored = true;
    return r;
  }
  const double inv = 1.0 / static_cast<double>(r.counted_pixels);
  std::vector<double> prob(s.c);
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    const Label t = target[p];
    if (t == kIgnoreLabel) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.c; ++c) mx = std::max(mx, scores[c * P + p]);
    double z = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) {
      prob[c] = std::exp(scores[c * P + p] - mx);
      z += prob[c];
    }
    const auto tc = static_cast<std::size_t>(t);
    total += std::log(z) - (scores[tc * P + p] - mx);
    for (std::size_t c = 0; c < s.c; ++c) {
      r.grad[c * P + p] = (prob[c] / z - (c == tc ? 1.0 : 0.0)) * inv;
    }
  }
  r.loss = total * inv;
  return r;
}

void sgd_step(ConvParams& params, ConvParams& velocity, const ConvParams& grads, const SgdHyper& hyper) {
  require_extent("weights", grads.weights.size(), params.weights.size());
  require_extent("velocity", velocity.weights.size(), params.weights.size());
  require_extent("bias", grads.bias.size(), params.bias.size());
  require_extent("velocity bias", velocity.bias.size(), params.bias.size());
  auto update = [&](std::span<double> w, std::span<double> v, std::span<const double> g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = hyper.momentum * v[i] - hyper.lr * (g[i] + hyper.weight_decay * w[i]);
      w[i] += v[i];
    }
  };
  update(params.weights.values(), velocity.weights.values(), grads.weights.values());
  update(params.bias, velocity.bias, grads.bias);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double xavier_bound(const Shape& shape) {
  const double fan_in = static_cast<double>(shape.c * shape.h * shape.w);
  const double fan_out = static_cast<double>(shape.n * shape.h * shape.w);
  if (fan_in + fan_out <= 0.0) throw ValidationError("xavier_init needs a non-empty shape");
  return std::sqrt(6.0 / (fan_in + fan_out));
}

Tensor xavier_init(const Shape& shape, Rng& rng) {
  const double bound = xavier_bound(shape);
  Tensor t(shape);
  for (double& v : t.values()) v = bound * (2.0 * uniform01(rng) - 1.0);
  return t;
}

}  // namespace fcnt
