#include "fcnt/model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "fcnt/error.hpp"

namespace fcnt {

namespace {

constexpr std::array<const char*, 4> kUpsampleNames{"up_deep", "up_fuse3", "up_fuse2", "up_final"};
constexpr std::array<const char*, 3> kHeadNames{"score_pool1", "score_pool2", "score_pool3"};

std::size_t trunk_length(const NetworkSpec& spec) {
  return std::accumulate(spec.convs_per_block.begin(), spec.convs_per_block.end(), std::size_t{0}) + 2;
}

ConvParams conv_layer(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  ConvParams p;
  p.weights = xavier_init({out, in, k, k}, rng);
  p.bias.assign(out, 0.0);
  p.stride = 1;
  p.padding = k / 2;
  return p;
}

Tensor upsample_stage(const NetworkState& state, std::size_t stage, const Tensor& x) {
  if (state.spec.upsampling == UpsampleMode::bilinear) {
    return resize_bilinear(x, x.shape().h * 2, x.shape().w * 2);
  }
  return upsample_learned(x, state.layer(kUpsampleNames[stage]).params, 2);
}

void accumulate(ConvParams& dst, const ConvParams& src) {
  for (std::size_t i = 0; i < dst.weights.size(); ++i) dst.weights[i] += src.weights[i];
  for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += src.bias[i];
}

Tensor fuse_impl(const NetworkState& state, const Tensor& deep, const std::array<Tensor, 3>& heads,
                 std::array<Tensor, 4>* inputs) {
  Tensor cur = deep;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    if (inputs) (*inputs)[stage] = cur;
    Tensor up = upsample_stage(state, stage, cur);
    if (stage < 3) {
      const Tensor& skip = heads[2 - stage];
      if (up.shape() != skip.shape()) {
        throw DimensionError("height", "skip head " + std::string(kHeadNames[2 - stage]) + " has shape " +
                                           skip.shape().str() + " but upsampled path has " + up.shape().str());
      }
      cur = add(up, skip);
    } else {
      cur = std::move(up);
    }
  }
  return cur;
}

void check_input(const NetworkSpec& spec, const Shape& s) {
  require_extent("channels", s.c, spec.input_channels);
  if (s.h < kMinInputExtent || s.h % kTotalStride != 0) {
    throw DimensionError("height", "input height " + std::to_string(s.h) + " must be >= " +
                                       std::to_string(kMinInputExtent) + " and a multiple of " +
                                       std::to_string(kTotalStride));
  }
  if (s.w < kMinInputExtent || s.w % kTotalStride != 0) {
    throw DimensionError("width", "input width " + std::to_string(s.w) + " must be >= " +
                                      std::to_string(kMinInputExtent) + " and a multiple of " +
                                      std::to_string(kTotalStride));
  }
}

}  // namespace

void NetworkSpec::validate() const {
  if (num_classes < 2) throw ValidationError("network needs at least 2 classes, got " + std::to_string(num_classes));
  for (std::size_t b = 0; b < 4; ++b) {
    if (block_channels[b] == 0) throw ValidationError("block " + std::to_string(b + 1) + " has zero channels");
    if (convs_per_block[b] == 0) throw ValidationError("block " + std::to_string(b + 1) + " has no convolutions");
  }
  if (head_channels == 0) throw ValidationError("head_channels must be positive");
  if (input_channels != 1 && input_channels != 3) throw ValidationError("input_channels must be 1 or 3");
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ValidationError("kernel_size must be odd");
}

NetworkSpec NetworkSpec::reference(std::size_t num_classes) {
  NetworkSpec s;
  s.num_classes = num_classes;
  return s;
}

NetworkSpec NetworkSpec::reduced(std::size_t num_classes) {
  NetworkSpec s;
  s.num_classes = num_classes;
  s.block_channels = {8, 16, 16, 32};
  s.convs_per_block = {1, 1, 1, 1};
  s.head_channels = 32;
  return s;
}

const Layer& NetworkState::layer(const std::string& name) const { return layers[layer_index(name)]; }
Layer& NetworkState::layer(const std::string& name) { return layers[layer_index(name)]; }

std::size_t NetworkState::layer_index(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  throw ValidationError("network has no layer named '" + name + "'");
}

bool NetworkState::has_layer(const std::string& name) const {
  return std::any_of(layers.begin(), layers.end(), [&](const Layer& l) { return l.name == name; });
}

std::size_t NetworkState::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.params.parameter_count();
  return n;
}

std::vector<std::string> layer_names(const NetworkSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < spec.convs_per_block[b]; ++i) {
      names.push_back("conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1));
    }
  }
  names.insert(names.end(), {"conv5", "conv6", "score_deep"});
  names.insert(names.end(), kHeadNames.begin(), kHeadNames.end());
  if (spec.upsampling == UpsampleMode::learned) names.insert(names.end(), kUpsampleNames.begin(), kUpsampleNames.end());
  return names;
}

NetworkState build_fcnt(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkState state;
  state.spec = spec;
  state.seed = seed;
  Rng rng(seed);
  const std::size_t k = spec.kernel_size;
  const std::size_t C = spec.num_classes;
  auto push = [&](std::string name, ConvParams p, LayerKind kind = LayerKind::conv) {
    Layer l;
    l.name = std::move(name);
    l.kind = kind;
    l.velocity = p.zeros_like();
    l.params = std::move(p);
    state.layers.push_back(std::move(l));
  };
  std::size_t in = spec.input_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < spec.convs_per_block[b]; ++i) {
      push("conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1), conv_layer(spec.block_channels[b], in, k, rng));
      in = spec.block_channels[b];
    }
  }
  push("conv5", conv_layer(spec.head_channels, in, 1, rng));
  push("conv6", conv_layer(spec.head_channels, spec.head_channels, 1, rng));
  push("score_deep", conv_layer(C, spec.head_channels, 1, rng));
  for (std::size_t h = 0; h < 3; ++h) push(kHeadNames[h], conv_layer(C, spec.block_channels[h], 1, rng));
  if (spec.upsampling == UpsampleMode::learned) {
    for (const char* name : kUpsampleNames) push(name, bilinear_upsample_kernel(C, 2), LayerKind::upsample);
  }
  return state;
}

ForwardResult forward(const NetworkState& state, const Tensor& image) {
  const NetworkSpec& spec = state.spec;
  check_input(spec, image.shape());
  ForwardResult r;
  ForwardCache& c = r.cache;
  c.spec = spec;
  c.input_shape = image.shape();
  Tensor cur = image;
  for (double& v : cur.values()) v -= kInputMean;

  const std::size_t T = trunk_length(spec);
  c.trunk_inputs.reserve(T);
  c.trunk_outputs.reserve(T);
  std::size_t idx = 0;
  auto run_conv = [&](const Tensor& x) {
    c.trunk_inputs.push_back(x);
    Tensor y = relu_forward(conv2d_forward(x, state.layers[idx].params));
    c.trunk_outputs.push_back(y);
    ++idx;
    return y;
  };
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < spec.convs_per_block[b]; ++i) cur = run_conv(cur);
    c.pools[b] = maxpool_forward(cur, 2, 2);
    cur = c.pools[b].output;
  }
  cur = run_conv(cur);  // conv5
  cur = run_conv(cur);  // conv6
  c.deep = conv2d_forward(cur, state.layer("score_deep").params);
  for (std::size_t h = 0; h < 3; ++h) c.heads[h] = conv2d_forward(c.pools[h].output, state.layer(kHeadNames[h]).params);
  r.scores = fuse_impl(state, c.deep, c.heads, &c.fuse_inputs);
  return r;
}

Tensor forward_scores(const NetworkState& state, const Tensor& image) { return forward(state, image).scores; }

Tensor fuse_scores(const NetworkState& state, const Tensor& deep, const std::array<Tensor, 3>& heads) {
  return fuse_impl(state, deep, heads, nullptr);
}

Gradients backward(const NetworkState& state, const ForwardCache& cache, const Tensor& grad_scores) {
  const NetworkSpec& spec = state.spec;
  if (!(cache.spec == spec)) throw DimensionError("spec", "forward cache was produced by a different network");
  const Shape expected{cache.input_shape.n, spec.num_classes, cache.input_shape.h, cache.input_shape.w};
  if (grad_scores.shape() != expected) {
    throw DimensionError("scores", "gradient shape " + grad_scores.shape().str() + " does not match forward output " +
                                       expected.str());
  }
  Gradients grads;
  grads.reserve(state.layers.size());
  for (const Layer& l : state.layers) grads.push_back(l.params.zeros_like());

  // Upsampling path, finest stage first.
  std::array<Tensor, 3> head_grads;
  Tensor g = grad_scores;
  for (std::size_t s = 4; s-- > 0;) {
    const Tensor& x = cache.fuse_inputs[s];
    if (spec.upsampling == UpsampleMode::bilinear) {
      g = resize_bilinear_backward(g, x.shape());
    } else {
      const std::size_t li = state.layer_index(kUpsampleNames[s]);
      ConvGradients ug = upsample_learned_backward(x, state.layers[li].params, 2, g);
      accumulate(grads[li], ug.grad_params);
      g = std::move(ug.grad_input);
    }
    if (s > 0) head_grads[3 - s] = g;  // summation passes the gradient to both branches
  }

  // Skip heads.
  std::array<Tensor, 3> pool_grads;
  for (std::size_t h = 0; h < 3; ++h) {
    const std::size_t li = state.layer_index(kHeadNames[h]);
    ConvGradients hg = conv2d_backward(cache.pools[h].output, state.layers[li].params, head_grads[h]);
    accumulate(grads[li], hg.grad_params);
    pool_grads[h] = std::move(hg.grad_input);
  }

  // Deep head and trunk.
  {
    const std::size_t li = state.layer_index("score_deep");
    ConvGradients dg = conv2d_backward(cache.trunk_outputs.back(), state.layers[li].params, g);
    accumulate(grads[li], dg.grad_params);
    g = std::move(dg.grad_input);
  }
  std::size_t idx = trunk_length(spec);
  auto back_conv = [&](const Tensor& grad) {
    --idx;
    Tensor gr = relu_backward(cache.trunk_outputs[idx], grad);
    ConvGradients cg = conv2d_backward(cache.trunk_inputs[idx], state.layers[idx].params, gr);
    accumulate(grads[idx], cg.grad_params);
    return std::move(cg.grad_input);
  };
  g = back_conv(g);  // conv6
  g = back_conv(g);  // conv5
  for (std::size_t b = 4; b-- > 0;) {
    if (b < 3) g = add(g, pool_grads[b]);
    g = maxpool_backward(cache.pools[b], g);
    for (std::size_t i = 0; i < spec.convs_per_block[b]; ++i) g = back_conv(g);
  }
  return grads;
}

void sgd_step(NetworkState& state, const Gradients& grads, const SgdHyper& hyper) {
  require_extent("layers", grads.size(), state.layers.size());
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    sgd_step(state.layers[i].params, state.layers[i].velocity, grads[i], hyper);
  }
}

std::size_t copy_matching_layers(NetworkState& target, const NetworkState& source) {
  std::size_t copied = 0;
  for (Layer& l : target.layers) {
    if (!source.has_layer(l.name)) continue;
    const Layer& s = source.layer(l.name);
    if (s.params.weights.shape() != l.params.weights.shape() || s.params.bias.size() != l.params.bias.size()) continue;
    l.params = s.params;
    l.velocity = l.params.zeros_like();
    ++copied;
  }
  return copied;
}

LabelMap predict_labels(const Tensor& scores) {
  const Shape& s = scores.shape();
  if (s.c < 1) throw DimensionError("channels", "score volume has no classes");
  const std::size_t P = s.plane();
  LabelMap out(s.h, s.w);
  for (std::size_t p = 0; p < P; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.c; ++c) {
      if (scores[c * P + p] > scores[best * P + p]) best = c;
    }
    out[p] = static_cast<Label>(best);
  }
  return out;
}

RankedLabels::RankedLabels(std::size_t classes, std::size_t height, std::size_t width)
    : classes_(classes), height_(height), width_(width), ranks_(classes * height * width) {}

LabelMap RankedLabels::slice(std::size_t rank) const {
  const std::size_t P = height_ * width_;
  LabelMap out(height_, width_);
  for (std::size_t p = 0; p < P; ++p) out[p] = at(rank, p);
  return out;
}

RankedLabels rank_labels(const Tensor& scores) {
  const Shape& s = scores.shape();
  const std::size_t P = s.plane();
  RankedLabels r(s.c, s.h, s.w);
  std::vector<Label> order(s.c);
  for (std::size_t p = 0; p < P; ++p) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Label a, Label b) {
      return scores[static_cast<std::size_t>(a) * P + p] > scores[static_cast<std::size_t>(b) * P + p];
    });
    for (std::size_t k = 0; k < s.c; ++k) r.at(k, p) = order[k];
  }
  return r;
}

std::string describe_spec(const NetworkSpec& spec) {
  std::ostringstream out;
  auto join = [](const std::array<std::size_t, 4>& a) {
    return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + "," + std::to_string(a[3]);
  };
  out << "num_classes=" << spec.num_classes << "\n"
      << "block_channels=" << join(spec.block_channels) << "\n"
      << "convs_per_block=" << join(spec.convs_per_block) << "\n"
      << "head_channels=" << spec.head_channels << "\n"
      << "input_channels=" << spec.input_channels << "\n"
      << "kernel_size=" << spec.kernel_size << "\n"
      << "upsampling=" << (spec.upsampling == UpsampleMode::learned ? "learned" : "bilinear") << "\n";
  return out.str();
}

}  // namespace fcnt
