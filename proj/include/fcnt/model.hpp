#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/ops.hpp"
#include "fcnt/tensor.hpp"

namespace fcnt {

/// Topology of the texture FCN: four conv blocks each followed by 2x2 max
/// pooling, two 1x1 layers standing in for fully-connected ones, a C-wide
/// score head on the deepest features and C-wide skip heads on the pooled
/// outputs of blocks 1-3. Scores are fused by summation while being
/// upsampled x2 four times back to input resolution.
struct NetworkSpec {
  std::size_t num_classes = 2;
  std::array<std::size_t, 4> block_channels{16, 32, 64, 128};
  std::array<std::size_t, 4> convs_per_block{2, 2, 2, 2};
  std::size_t head_channels = 256;
  std::size_t input_channels = 1;
  std::size_t kernel_size = 3;
  UpsampleMode upsampling = UpsampleMode::learned;

  void validate() const;
  bool operator==(const NetworkSpec&) const = default;

  /// Desk-scale reference widths (16, 32, 64, 128) / 256.
  static NetworkSpec reference(std::size_t num_classes);
  /// Narrow variant used for gradient checks and quick experiments.
  static NetworkSpec reduced(std::size_t num_classes);
};

enum class LayerKind : std::uint8_t { conv = 0, upsample = 1 };

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::conv;
  ConvParams params;
  /// Momentum buffer, same shape as `params`.
  ConvParams velocity;
};

struct NetworkState {
  NetworkSpec spec;
  std::uint64_t seed = 0;
  std::vector<Layer> layers;

  const Layer& layer(const std::string& name) const;
  Layer& layer(const std::string& name);
  std::size_t layer_index(const std::string& name) const;
  bool has_layer(const std::string& name) const;
  std::size_t parameter_count() const;
};

/// One entry per layer of the state it was computed for, in the same order.
using Gradients = std::vector<ConvParams>;

/// Inputs must be at least this large and a multiple of it after padding.
inline constexpr std::size_t kMinInputExtent = 32;
inline constexpr std::size_t kTotalStride = 16;
/// Constant subtracted from input intensities before the first convolution.
inline constexpr double kInputMean = 0.5;

/// Layer names in state order.
std::vector<std::string> layer_names(const NetworkSpec& spec);

/// Xavier-initialised convolutions with zero biases; learned upsampling
/// layers start as bilinear interpolation. Rejects fewer than two classes.
NetworkState build_fcnt(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardCache {
  NetworkSpec spec;
  Shape input_shape;
  /// Input to each trunk convolution (conv1_1 .. conv6) and its ReLU output.
  std::vector<Tensor> trunk_inputs;
  std::vector<Tensor> trunk_outputs;
  std::array<PoolResult, 4> pools;
  /// Deepest score map (1/16 resolution) and skip-head outputs on pool1..pool3.
  Tensor deep;
  std::array<Tensor, 3> heads;
  /// Inputs to the four upsampling stages, coarsest first.
  std::array<Tensor, 4> fuse_inputs;
};

struct ForwardResult {
  Tensor scores;
  ForwardCache cache;
};

/// Scores for an N x input_channels x H x W image with H, W multiples of 16
/// and at least 32.
ForwardResult forward(const NetworkState& state, const Tensor& image);
Tensor forward_scores(const NetworkState& state, const Tensor& image);

/// Upsampling and summation path alone: deep is at 1/16 resolution and
/// heads[i] is the skip score of block i+1 (1/2, 1/4, 1/8 resolution).
Tensor fuse_scores(const NetworkState& state, const Tensor& deep, const std::array<Tensor, 3>& heads);

Gradients backward(const NetworkState& state, const ForwardCache& cache, const Tensor& grad_scores);

/// Applies one momentum SGD update to every layer of `state`.
void sgd_step(NetworkState& state, const Gradients& grads, const SgdHyper& hyper);

/// Copies every layer whose name and parameter shapes match `source`.
/// Returns the number of layers copied.
std::size_t copy_matching_layers(NetworkState& target, const NetworkState& source);

/// Per-pixel argmax over the classes of a 1 x C x H x W volume; ties go to
/// the lowest class index.
LabelMap predict_labels(const Tensor& scores);

/// Class indices per pixel sorted by descending score (stable on ties).
class RankedLabels {
 public:
  RankedLabels() = default;
  RankedLabels(std::size_t classes, std::size_t height, std::size_t width);

  std::size_t classes() const { return classes_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  /// 0-based rank: rank 0 is the best class.
  Label at(std::size_t rank, std::size_t pixel) const { return ranks_[rank * height_ * width_ + pixel]; }
  Label& at(std::size_t rank, std::size_t pixel) { return ranks_[rank * height_ * width_ + pixel]; }
  LabelMap slice(std::size_t rank) const;

 private:
  std::size_t classes_ = 0, height_ = 0, width_ = 0;
  std::vector<Label> ranks_;
};

RankedLabels rank_labels(const Tensor& scores);

/// Binary checkpoint: "FCNTCKPT" magic, format version, spec, seed, named
/// layers with shapes and little-endian doubles (parameters and momentum),
/// trailing CRC-32. A human-readable `<path>.spec` sidecar echoes the network description.
void save_state(const NetworkState& state, const std::filesystem::path& path);
/// Throws ChecksumError on corrupt or truncated files and ValidationError
/// when `expected_classes` is given and differs from the stored count.
NetworkState load_state(const std::filesystem::path& path, std::optional<std::size_t> expected_classes = {});

std::string describe_spec(const NetworkSpec& spec);

}  // namespace fcnt
