#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/tensor.hpp"

namespace fcnt {

/// Weights are (out, in, kh, kw) for ordinary convolutions and
/// (in, out, kh, kw) for transposed ones. An empty bias means the layer has
/// no bias term.
struct ConvParams {
  Tensor weights;
  std::vector<double> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool has_bias() const { return !bias.empty(); }
  std::size_t kernel_h() const { return weights.shape().h; }
  std::size_t kernel_w() const { return weights.shape().w; }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }

  /// Same shape and hyper-parameters, all values zero.
  ConvParams zeros_like() const;
  void validate() const;
};

struct ConvGradients {
  Tensor grad_input;
  ConvParams grad_params;
};

/// Output extent of a strided convolution: floor((in + 2p - k) / s) + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

Tensor conv2d_forward(const Tensor& input, const ConvParams& params);
ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out);

/// Transposed convolution; output extent (in - 1) * s - 2p + k.
Tensor conv_transpose2d_forward(const Tensor& input, const ConvParams& params);
ConvGradients conv_transpose2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out);

struct PoolResult {
  Tensor output;
  /// Flat index into the input tensor of the value that won each window.
  std::vector<std::size_t> argmax;
  Shape input_shape;
};

/// Max pooling. Odd extents are handled by replicating the last row/column;
/// among equal values the first one in window scan order wins.
PoolResult maxpool_forward(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);
Tensor maxpool_backward(const PoolResult& pool, const Tensor& grad_out);

Tensor relu_forward(const Tensor& input);
/// `output` is the forward result; the derivative at 0 is taken as 0.
Tensor relu_backward(const Tensor& output, const Tensor& grad_out);

Tensor add(const Tensor& a, const Tensor& b);

Tensor pad_replicate(const Tensor& input, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right);
Tensor pad_replicate_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t top, std::size_t left);
Tensor crop(const Tensor& input, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

/// Bilinear resampling with half-pixel centres (align-corners off) and
/// clamped borders.
Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor resize_bilinear_backward(const Tensor& grad_out, const Shape& input_shape);

enum class UpsampleMode { bilinear, learned };

/// Per-channel bilinear kernel of size 2f for a transposed convolution with
/// stride f, laid out diagonally (channel i feeds only channel i).
ConvParams bilinear_upsample_kernel(std::size_t channels, std::size_t factor);

/// Learned upsampling: replicate-pad by one pixel, transposed convolution
/// with kernel 2f and stride f, crop to exactly f times the input extents.
/// `kernel` must come from bilinear_upsample_kernel (or be trained from it).
/// Factor 1 is the identity and ignores the kernel.
Tensor upsample_learned(const Tensor& input, const ConvParams& kernel, std::size_t factor);
ConvGradients upsample_learned_backward(const Tensor& input, const ConvParams& kernel, std::size_t factor,
                                        const Tensor& grad_out);

/// Upsamples spatial extents by `factor`. Learned mode uses the kernel at
/// its bilinear initialization, so both modes agree.
Tensor upsample(const Tensor& input, std::size_t factor, UpsampleMode mode);

struct XentResult {
  double loss = 0.0;
  Tensor grad;
  std::size_t counted_pixels = 0;
  /// Set when every target pixel carries the ignore label.
  bool all_ignored = false;
};

/// Mean per-pixel softmax cross-entropy over non-ignored pixels of a
/// 1 x C x H x W score volume.
XentResult softmax_xent_pixelwise(const Tensor& scores, const LabelMap& target);

struct SgdHyper {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum * v - lr * (g + wd * w); w <- w + v.
void sgd_step(ConvParams& params, ConvParams& velocity, const ConvParams& grads, const SgdHyper& hyper);

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng& rng);

/// Uniform draws in +-sqrt(6 / (fan_in + fan_out)) with
/// fan_in = c * kh * kw and fan_out = n * kh * kw.
Tensor xavier_init(const Shape& shape, Rng& rng);
double xavier_bound(const Shape& shape);

}  // namespace fcnt
