// Randomised check routines shared by the unit tests and the acceptance
// binary. Each returns the worst error it saw (or a failure message) so the
// caller decides the threshold.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fcnt/metrics.hpp"
#include "fcnt/model.hpp"
#include "fcnt/ops.hpp"
#include "fcnt/refinement.hpp"
#include "support.hpp"

namespace checks {

using fcnt::ConvParams;
using fcnt::Label;
using fcnt::LabelMap;
using fcnt::Rng;
using fcnt::Shape;
using fcnt::Tensor;

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

// Relative error with a floor on the denominator so that gradients that are
// zero up to rounding are compared absolutely.
inline double grad_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// Max-norm relative difference: the largest element-wise deviation divided
// by the largest magnitude in the reference.
inline double max_rel(const Tensor& got, const Tensor& want) {
  if (got.shape() != want.shape()) return std::numeric_limits<double>::infinity();
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    diff = std::max(diff, std::abs(got[i] - want[i]));
    scale = std::max(scale, std::abs(want[i]));
  }
  if (diff == 0.0) return 0.0;
  return scale == 0.0 ? std::numeric_limits<double>::infinity() : diff / scale;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * fcnt::uniform01(rng) - 1.0;
  return v;
}

inline ConvParams random_conv(Shape wshape, std::size_t bias, std::size_t stride, std::size_t pad, Rng& rng) {
  ConvParams p;
  p.weights = oracle::random_tensor(wshape, rng);
  p.bias = random_vector(bias, rng);
  p.stride = stride;
  p.padding = pad;
  return p;
}

// Labels with a share of ignore pixels, every class index below `classes`.
inline LabelMap random_targets(std::size_t h, std::size_t w, std::size_t classes, Rng& rng) {
  LabelMap m = oracle::random_labels(h, w, classes, rng);
  for (Label& l : m.labels())
    if (rng() % 5 == 0) l = fcnt::kIgnoreLabel;
  return m;
}

// ---------------------------------------------------------------- kernels

struct OracleReport {
  double conv = 0.0, conv_transpose = 0.0, pool = 0.0, softmax = 0.0, bilinear = 0.0, upsample = 0.0;
  double worst() const { return std::max({conv, conv_transpose, pool, softmax, bilinear, upsample}); }
};

inline void merge(OracleReport& into, const OracleReport& r) {
  into.conv = std::max(into.conv, r.conv);
  into.conv_transpose = std::max(into.conv_transpose, r.conv_transpose);
  into.pool = std::max(into.pool, r.pool);
  into.softmax = std::max(into.softmax, r.softmax);
  into.bilinear = std::max(into.bilinear, r.bilinear);
  into.upsample = std::max(into.upsample, r.upsample);
}

// One randomised instance of every kernel against its nested-loop oracle.
inline OracleReport kernel_oracle_case(Rng& rng) {
  OracleReport r;
  {
    const std::size_t k = 2 * pick(rng, 0, 2) + 1;
    const Shape in{pick(rng, 1, 2), pick(rng, 1, 5), pick(rng, k, 14), pick(rng, k, 14)};
    const std::size_t out_c = pick(rng, 1, 6);
    const ConvParams q = random_conv({out_c, in.c, k, k}, rng() % 2 ? out_c : 0, pick(rng, 1, 2), pick(rng, 0, k / 2), rng);
    const Tensor x = oracle::random_tensor(in, rng);
    r.conv = max_rel(fcnt::conv2d_forward(x, q), oracle::conv2d(x, q));
  }
  {
    const std::size_t k = pick(rng, 1, 4);
    const std::size_t s = pick(rng, 1, 3);
    const Shape in{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 9), pick(rng, 1, 9)};
    const std::size_t out_c = pick(rng, 1, 4);
    ConvParams p = random_conv({in.c, out_c, k, k}, rng() % 2 ? out_c : 0, s, 0, rng);
    // Padding may not exceed what the output extent can absorb.
    const std::size_t span = std::min(in.h, in.w) * s;
    p.padding = std::min<std::size_t>(pick(rng, 0, k - 1), (span + k - s - 1) / 2);
    const Tensor x = oracle::random_tensor(in, rng);
    r.conv_transpose = max_rel(fcnt::conv_transpose2d_forward(x, p), oracle::conv_transpose2d(x, p));
  }
  {
    const Tensor x = oracle::random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 13), pick(rng, 1, 13)}, rng);
    r.pool = max_rel(fcnt::maxpool_forward(x).output, oracle::maxpool(x));
  }
  {
    const std::size_t c = pick(rng, 1, 6);
    const Tensor s = oracle::random_tensor({1, c, pick(rng, 1, 12), pick(rng, 1, 12)}, rng, -8.0, 8.0);
    const LabelMap t = random_targets(s.shape().h, s.shape().w, c, rng);
    const fcnt::XentResult got = fcnt::softmax_xent_pixelwise(s, t);
    const oracle::Xent want = oracle::softmax_xent(s, t);
    double e = max_rel(got.grad, want.grad);
    if (got.loss != want.loss) {
      e = std::max(e, std::abs(got.loss - want.loss) / std::max({std::abs(got.loss), std::abs(want.loss), 1e-6}));
    }
    r.softmax = e;
  }
  {
    const Tensor x = oracle::random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 10), pick(rng, 1, 10)}, rng);
    const std::size_t oh = pick(rng, 1, 24), ow = pick(rng, 1, 24);
    r.bilinear = max_rel(fcnt::resize_bilinear(x, oh, ow), oracle::bilinear(x, oh, ow));
  }
  {
    const std::size_t f = 2 * pick(rng, 1, 2);
    const Tensor x = oracle::random_tensor({1, pick(rng, 1, 3), pick(rng, 1, 8), pick(rng, 1, 8)}, rng);
    const ConvParams kernel = fcnt::bilinear_upsample_kernel(x.shape().c, f);
    const Tensor learned = fcnt::upsample_learned(x, kernel, f);
    const Tensor closed = oracle::bilinear(x, x.shape().h * f, x.shape().w * f);
    const Tensor scatter =
        oracle::crop_to(oracle::conv_transpose2d(fcnt::pad_replicate(x, 1, 1, 1, 1), kernel), closed.shape());
    r.upsample = std::max(max_rel(learned, closed), max_rel(learned, scatter));
  }
  return r;
}

// ---------------------------------------------------------- gradient checks

constexpr double kFdStep = 1e-5;

// Compares analytic gradients of L = sum(r * f(x)) against central
// differences over every coordinate of every listed buffer.
struct Probe {
  std::span<double> values;
  std::vector<double> analytic;
};

inline double check_probes(std::vector<Probe>& probes, const std::function<double()>& loss, double h = kFdStep) {
  double worst = 0.0;
  for (Probe& p : probes) {
    const std::vector<double> num = oracle::numeric_gradient(p.values, loss, h);
    for (std::size_t i = 0; i < num.size(); ++i) worst = std::max(worst, grad_err(p.analytic[i], num[i]));
  }
  return worst;
}

inline std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Inputs kept away from ReLU and max-pool kinks by at least `gap`.
inline Tensor spaced_tensor(const Shape& s, Rng& rng, double gap = 1e-3) {
  Tensor t(s);
  std::vector<double> used;
  for (double& v : t.values()) {
    for (;;) {
      v = 2.0 * fcnt::uniform01(rng) - 1.0;
      if (std::abs(v) < gap) continue;
      if (std::any_of(used.begin(), used.end(), [&](double u) { return std::abs(u - v) < gap; })) continue;
      break;
    }
    used.push_back(v);
  }
  return t;
}

using OpCheck = std::function<double(Rng&)>;

inline std::vector<std::pair<std::string, OpCheck>> op_gradient_checks() {
  std::vector<std::pair<std::string, OpCheck>> ops;
  ops.reserve(9);
  ops.emplace_back("conv2d", [](Rng& rng) {
    const std::size_t k = 2 * pick(rng, 0, 1) + 1;
    Tensor x = oracle::random_tensor({1, pick(rng, 1, 3), pick(rng, 3, 7), pick(rng, 3, 7)}, rng);
    const std::size_t co = pick(rng, 1, 3);
    ConvParams p = random_conv({co, x.shape().c, k, k}, co, pick(rng, 1, 2), pick(rng, 0, k / 2), rng);
    const Tensor r = oracle::random_tensor(fcnt::conv2d_forward(x, p).shape(), rng);
    const fcnt::ConvGradients g = fcnt::conv2d_backward(x, p, r);
    std::vector<Probe> probes{{x.values(), as_vector(g.grad_input)},
                              {p.weights.values(), as_vector(g.grad_params.weights)},
                              {p.bias, g.grad_params.bias}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::conv2d_forward(x, p)); });
  });
  ops.emplace_back("conv_transpose2d", [](Rng& rng) {
    const std::size_t k = pick(rng, 2, 4), s = pick(rng, 1, 2);
    Tensor x = oracle::random_tensor({1, pick(rng, 1, 3), pick(rng, 2, 5), pick(rng, 2, 5)}, rng);
    const std::size_t co = pick(rng, 1, 3);
    ConvParams p = random_conv({x.shape().c, co, k, k}, co, s, pick(rng, 0, 1), rng);
    const Tensor r = oracle::random_tensor(fcnt::conv_transpose2d_forward(x, p).shape(), rng);
    const fcnt::ConvGradients g = fcnt::conv_transpose2d_backward(x, p, r);
    std::vector<Probe> probes{{x.values(), as_vector(g.grad_input)},
                              {p.weights.values(), as_vector(g.grad_params.weights)},
                              {p.bias, g.grad_params.bias}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::conv_transpose2d_forward(x, p)); });
  });
  ops.emplace_back("maxpool", [](Rng& rng) {
    Tensor x = spaced_tensor({1, pick(rng, 1, 2), pick(rng, 1, 7), pick(rng, 1, 7)}, rng);
    const fcnt::PoolResult pool = fcnt::maxpool_forward(x);
    const Tensor r = oracle::random_tensor(pool.output.shape(), rng);
    std::vector<Probe> probes{{x.values(), as_vector(fcnt::maxpool_backward(pool, r))}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::maxpool_forward(x).output); });
  });
  ops.emplace_back("relu", [](Rng& rng) {
    Tensor x = spaced_tensor({1, pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)}, rng);
    const Tensor y = fcnt::relu_forward(x);
    const Tensor r = oracle::random_tensor(y.shape(), rng);
    std::vector<Probe> probes{{x.values(), as_vector(fcnt::relu_backward(y, r))}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::relu_forward(x)); });
  });
  ops.emplace_back("add", [](Rng& rng) {
    const Shape s{1, pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    Tensor a = oracle::random_tensor(s, rng), b = oracle::random_tensor(s, rng);
    const Tensor r = oracle::random_tensor(s, rng);
    std::vector<Probe> probes{{a.values(), as_vector(r)}, {b.values(), as_vector(r)}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::add(a, b)); });
  });
  ops.emplace_back("pad_replicate", [](Rng& rng) {
    Tensor x = oracle::random_tensor({1, pick(rng, 1, 2), pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
    const std::size_t t = pick(rng, 0, 3), b = pick(rng, 0, 3), l = pick(rng, 0, 3), rr = pick(rng, 0, 3);
    const Tensor r = oracle::random_tensor(fcnt::pad_replicate(x, t, b, l, rr).shape(), rng);
    std::vector<Probe> probes{{x.values(), as_vector(fcnt::pad_replicate_backward(r, x.shape(), t, l))}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::pad_replicate(x, t, b, l, rr)); });
  });
  ops.emplace_back("resize_bilinear", [](Rng& rng) {
    Tensor x = oracle::random_tensor({1, pick(rng, 1, 2), pick(rng, 1, 6), pick(rng, 1, 6)}, rng);
    const std::size_t oh = pick(rng, 1, 13), ow = pick(rng, 1, 13);
    const Tensor r = oracle::random_tensor({1, x.shape().c, oh, ow}, rng);
    std::vector<Probe> probes{{x.values(), as_vector(fcnt::resize_bilinear_backward(r, x.shape()))}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::resize_bilinear(x, oh, ow)); });
  });
  ops.emplace_back("upsample_learned", [](Rng& rng) {
    const std::size_t f = 2 * pick(rng, 1, 2);
    Tensor x = oracle::random_tensor({1, pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
    ConvParams kernel = fcnt::bilinear_upsample_kernel(x.shape().c, f);
    for (double& w : kernel.weights.values()) w += 0.1 * (2.0 * fcnt::uniform01(rng) - 1.0);
    const Tensor r = oracle::random_tensor(fcnt::upsample_learned(x, kernel, f).shape(), rng);
    const fcnt::ConvGradients g = fcnt::upsample_learned_backward(x, kernel, f, r);
    std::vector<Probe> probes{{x.values(), as_vector(g.grad_input)},
                              {kernel.weights.values(), as_vector(g.grad_params.weights)}};
    return check_probes(probes, [&] { return oracle::dot(r, fcnt::upsample_learned(x, kernel, f)); });
  });
  ops.emplace_back("softmax_xent", [](Rng& rng) {
    const std::size_t c = pick(rng, 2, 5);
    Tensor s = oracle::random_tensor({1, c, pick(rng, 1, 6), pick(rng, 1, 6)}, rng, -3.0, 3.0);
    LabelMap t = random_targets(s.shape().h, s.shape().w, c, rng);
    t[0] = 0;
    std::vector<Probe> probes{{s.values(), as_vector(fcnt::softmax_xent_pixelwise(s, t).grad)}};
    return check_probes(probes, [&] { return fcnt::softmax_xent_pixelwise(s, t).loss; });
  });
  return ops;
}

struct ModelCheck {
  double worst = 0.0;
  std::size_t coordinates = 0;
  std::string worst_layer;
};

// Every parameter of a reduced-width network on one 32x32 image with the
// training loss itself.
inline ModelCheck full_model_gradient_check(std::uint64_t seed, double h = kFdStep) {
  Rng rng(seed);
  fcnt::NetworkSpec spec = fcnt::NetworkSpec::reduced(2);
  fcnt::NetworkState state = fcnt::build_fcnt(spec, seed);
  // Non-zero biases and perturbed upsampling kernels exercise every term.
  for (fcnt::Layer& l : state.layers) {
    for (double& b : l.params.bias) b = 0.05 * (2.0 * fcnt::uniform01(rng) - 1.0);
    if (l.kind == fcnt::LayerKind::upsample)
      for (double& w : l.params.weights.values()) w += 0.05 * (2.0 * fcnt::uniform01(rng) - 1.0);
  }
  const Tensor image = oracle::random_tensor({1, 1, 32, 32}, rng, 0.0, 1.0);
  LabelMap target(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) target.at(y, x) = x < 16 ? 0 : 1;
  target.at(3, 3) = fcnt::kIgnoreLabel;
  const fcnt::ForwardResult f = fcnt::forward(state, image);
  const fcnt::XentResult xent = fcnt::softmax_xent_pixelwise(f.scores, target);
  const fcnt::Gradients grads = fcnt::backward(state, f.cache, xent.grad);
  auto loss = [&] { return fcnt::softmax_xent_pixelwise(fcnt::forward_scores(state, image), target).loss; };
  ModelCheck r;
  for (std::size_t li = 0; li < state.layers.size(); ++li) {
    std::vector<Probe> probes{{state.layers[li].params.weights.values(), as_vector(grads[li].weights)},
                              {state.layers[li].params.bias, grads[li].bias}};
    const double e = check_probes(probes, loss, h);
    r.coordinates += state.layers[li].params.parameter_count();
    if (e >= r.worst) {
      r.worst = e;
      r.worst_layer = state.layers[li].name;
    }
  }
  return r;
}

// ---------------------------------------------------------------- refinement

// Checks one refinement result; returns an empty string when it satisfies
// the contract.
inline std::string refine_contract(const Tensor& scores, std::size_t n, std::size_t cap = fcnt::kRefineIterationCap) {
  const fcnt::RefineResult r = fcnt::refine_detailed(scores, n, cap);
  std::ostringstream why;
  if (r.iterations > cap) why << "iterations " << r.iterations << " exceed cap; ";
  const LabelMap argmax = fcnt::predict_labels(scores);
  const oracle::Components comps = oracle::components(argmax);
  // The largest initial patch of each target class (first in raster order
  // among equals) must survive untouched.
  std::map<Label, int> best;
  for (std::size_t i = 0; i < comps.size.size(); ++i) {
    auto it = best.find(comps.label[i]);
    if (it == best.end() || comps.size[i] > comps.size[static_cast<std::size_t>(it->second)]) best[comps.label[i]] = static_cast<int>(i);
  }
  const std::set<Label> targets(r.classes.begin(), r.classes.end());
  for (std::size_t p = 0; p < argmax.size(); ++p) {
    const Label l = argmax[p];
    if (!targets.count(l) || best[l] != comps.id[p]) continue;
    if (r.labels[p] != l) {
      why << "selected pixel " << p << " relabelled; ";
      break;
    }
  }
  const std::map<Label, int> per_class = oracle::patches_per_class(r.labels);
  bool single = per_class.size() == targets.size();
  for (const auto& [label, count] : per_class) single = single && count == 1 && targets.count(label);
  if (!single && !r.forced) why << "not one patch per class and not forced; ";
  return why.str();
}

// Random score volume; smooth variants give larger patches.
inline Tensor fuzz_scores(Rng& rng) {
  const std::size_t c = pick(rng, 2, 6);
  const std::size_t h = pick(rng, 1, 24), w = pick(rng, 1, 24);
  Tensor s = oracle::random_tensor({1, c, h, w}, rng);
  if (rng() % 2) {
    const std::size_t cell = pick(rng, 2, 6);
    const Tensor coarse = oracle::random_tensor({1, c, (h + cell - 1) / cell, (w + cell - 1) / cell}, rng);
    const Tensor smooth = fcnt::resize_bilinear(coarse, h, w);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = smooth[i] + 0.2 * s[i];
  }
  return s;
}

// ---------------------------------------------------------------- metrics

// Region measures computed directly from pixel sets.
inline fcnt::RegionMeasures region_oracle(const LabelMap& pred, const LabelMap& gt, double t) {
  std::map<Label, std::set<std::size_t>> P, G;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == fcnt::kIgnoreLabel) continue;
    P[pred[i]].insert(i);
    G[gt[i]].insert(i);
  }
  auto inter = [](const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    double n = 0;
    for (std::size_t v : a) n += b.count(v);
    return n;
  };
  std::set<Label> pcs, gcs, gos, pus, pused, gused;
  for (const auto& [a, pa] : P)
    for (const auto& [b, gb] : G) {
      const double n = inter(pa, gb);
      if (n > 0 && n >= t * static_cast<double>(pa.size()) && n >= t * static_cast<double>(gb.size())) {
        pcs.insert(a);
        gcs.insert(b);
      }
    }
  for (const auto& [b, gb] : G) {
    if (gcs.count(b)) continue;
    std::vector<Label> pieces;
    for (const auto& [a, pa] : P) {
      const double n = inter(pa, gb);
      if (n > 0 && n >= (1 - t) * static_cast<double>(gb.size())) pieces.push_back(a);
    }
    if (pieces.size() >= 2) {
      gos.insert(b);
      pused.insert(pieces.begin(), pieces.end());
    }
  }
  for (const auto& [a, pa] : P) {
    if (pcs.count(a)) continue;
    std::vector<Label> pieces;
    for (const auto& [b, gb] : G) {
      const double n = inter(pa, gb);
      if (n > 0 && n >= (1 - t) * static_cast<double>(pa.size())) pieces.push_back(b);
    }
    if (pieces.size() >= 2) {
      pus.insert(a);
      gused.insert(pieces.begin(), pieces.end());
    }
  }
  fcnt::RegionMeasures m;
  if (G.empty()) return m;
  double me = 0, ne = 0;
  for (const auto& [b, gb] : G) me += !(gcs.count(b) || gos.count(b) || gused.count(b));
  for (const auto& [a, pa] : P) ne += !(pcs.count(a) || pus.count(a) || pused.count(a));
  const double g = static_cast<double>(G.size()), p = static_cast<double>(P.size());
  m.cs = 100.0 * static_cast<double>(gcs.size()) / g;
  m.os = 100.0 * static_cast<double>(gos.size()) / g;
  m.me = 100.0 * me / g;
  m.us = 100.0 * static_cast<double>(pus.size()) / p;
  m.ne = 100.0 * ne / p;
  return m;
}

}  // namespace checks
