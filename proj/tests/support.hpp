// Independent reference implementations used by the unit and acceptance
// suites. They are written as plainly as possible and share no code with
// the library kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/ops.hpp"
#include "fcnt/tensor.hpp"

namespace oracle {

using fcnt::Label;
using fcnt::LabelMap;
using fcnt::Rng;
using fcnt::Shape;
using fcnt::Tensor;

inline Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (double& v : t.values()) v = lo + (hi - lo) * fcnt::uniform01(rng);
  return t;
}

inline LabelMap random_labels(std::size_t h, std::size_t w, std::size_t classes, Rng& rng) {
  LabelMap m(h, w);
  for (Label& l : m.labels()) l = static_cast<Label>(rng() % classes);
  return m;
}

// Blocky random labels: a coarse random grid upsampled, giving patches of
// varied size instead of salt-and-pepper noise.
inline LabelMap blocky_labels(std::size_t h, std::size_t w, std::size_t classes, std::size_t cell, Rng& rng) {
  const std::size_t gh = (h + cell - 1) / cell, gw = (w + cell - 1) / cell;
  const LabelMap g = random_labels(gh, gw, classes, rng);
  LabelMap m(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) m.at(y, x) = g.at(y / cell, x / cell);
  return m;
}

// Direct six-fold loop; per output the bias (or 0) comes first and products
// are added in (ci, ky, kx) order.
inline Tensor conv2d(const Tensor& in, const fcnt::ConvParams& p) {
  const Shape& s = in.shape();
  const Shape& ws = p.weights.shape();
  const long pad = static_cast<long>(p.padding);
  const std::size_t oh = (s.h + 2 * p.padding - ws.h) / p.stride + 1;
  const std::size_t ow = (s.w + 2 * p.padding - ws.w) / p.stride + 1;
  Tensor out({s.n, ws.n, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = p.has_bias() ? p.bias[co] : 0.0;
          for (std::size_t ci = 0; ci < ws.c; ++ci)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                const long y = static_cast<long>(oy * p.stride + ky) - pad;
                const long x = static_cast<long>(ox * p.stride + kx) - pad;
                if (y < 0 || x < 0 || y >= static_cast<long>(s.h) || x >= static_cast<long>(s.w)) continue;
                acc += p.weights.at(co, ci, ky, kx) * in.at(n, ci, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
              }
          out.at(n, co, oy, ox) = acc;
        }
  return out;
}

// Scatter form: every input value is spread over its kernel footprint.
inline Tensor conv_transpose2d(const Tensor& in, const fcnt::ConvParams& p) {
  const Shape& s = in.shape();
  const Shape& ws = p.weights.shape();  // (in, out, kh, kw)
  const long pad = static_cast<long>(p.padding);
  const std::size_t oh = (s.h - 1) * p.stride + ws.h - 2 * p.padding;
  const std::size_t ow = (s.w - 1) * p.stride + ws.w - 2 * p.padding;
  Tensor out({s.n, ws.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t co = 0; co < ws.c; ++co)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) out.at(n, co, y, x) = p.has_bias() ? p.bias[co] : 0.0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t ci = 0; ci < ws.n; ++ci)
      for (std::size_t iy = 0; iy < s.h; ++iy)
        for (std::size_t ix = 0; ix < s.w; ++ix)
          for (std::size_t co = 0; co < ws.c; ++co)
            for (std::size_t ky = 0; ky < ws.h; ++ky)
              for (std::size_t kx = 0; kx < ws.w; ++kx) {
                const long y = static_cast<long>(iy * p.stride + ky) - pad;
                const long x = static_cast<long>(ix * p.stride + kx) - pad;
                if (y < 0 || x < 0 || y >= static_cast<long>(oh) || x >= static_cast<long>(ow)) continue;
                out.at(n, co, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) +=
                    p.weights.at(ci, co, ky, kx) * in.at(n, ci, iy, ix);
              }
  return out;
}

// 2x2 / stride 2 window scan; odd extents read the last row/column twice.
inline Tensor maxpool(const Tensor& in) {
  const Shape& s = in.shape();
  const std::size_t oh = (s.h + 1) / 2, ow = (s.w + 1) / 2;
  Tensor out({s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t yy = std::min(2 * y + dy, s.h - 1), xx = std::min(2 * x + dx, s.w - 1);
              best = std::max(best, in.at(n, c, yy, xx));
            }
          out.at(n, c, y, x) = best;
        }
  return out;
}

// Closed-form bilinear weights with half-pixel centres and clamped borders.
inline Tensor bilinear(const Tensor& in, std::size_t oh, std::size_t ow) {
  const Shape& s = in.shape();
  Tensor out({s.n, s.c, oh, ow});
  auto coord = [](std::size_t o, std::size_t n_in, std::size_t n_out) {
    double src = (static_cast<double>(o) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
    return std::clamp(src, 0.0, static_cast<double>(n_in - 1));
  };
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double sy = coord(y, s.h, oh), sx = coord(x, s.w, ow);
          const std::size_t y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
          const std::size_t y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
          const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
          out.at(n, c, y, x) = (1 - fy) * ((1 - fx) * in.at(n, c, y0, x0) + fx * in.at(n, c, y0, x1)) +
                               fy * ((1 - fx) * in.at(n, c, y1, x0) + fx * in.at(n, c, y1, x1));
        }
  return out;
}

// Top-left window of `t` with the extents of `s`.
inline Tensor crop_to(const Tensor& t, const Shape& s) {
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) out.at(n, c, y, x) = t.at(n, c, y, x);
  return out;
}

struct Xent {
  double loss = 0.0;
  Tensor grad;
};

// Per-pixel log-sum-exp written out directly.
inline Xent softmax_xent(const Tensor& scores, const LabelMap& target) {
  const Shape& s = scores.shape();
  Xent r;
  r.grad = Tensor(s);
  std::size_t count = 0;
  for (std::size_t i = 0; i < target.size(); ++i) count += target[i] != fcnt::kIgnoreLabel;
  if (count == 0) return r;
  for (std::size_t y = 0; y < s.h; ++y)
    for (std::size_t x = 0; x < s.w; ++x) {
      const Label t = target.at(y, x);
      if (t == fcnt::kIgnoreLabel) continue;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) m = std::max(m, scores.at(0, c, y, x));
      double z = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) z += std::exp(scores.at(0, c, y, x) - m);
      r.loss += (m + std::log(z) - scores.at(0, static_cast<std::size_t>(t), y, x)) / static_cast<double>(count);
      for (std::size_t c = 0; c < s.c; ++c) {
        const double pc = std::exp(scores.at(0, c, y, x) - m) / z;
        r.grad.at(0, c, y, x) = (pc - (static_cast<Label>(c) == t ? 1.0 : 0.0)) / static_cast<double>(count);
      }
    }
  return r;
}

inline double rel_err(double a, double b) {
  const double d = std::abs(a - b);
  const double m = std::max(std::abs(a), std::abs(b));
  return m < 1e-9 ? d : d / m;
}

// Central differences of f at x along every coordinate of `values`.
inline std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& f, double h) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = f();
    values[i] = keep - h;
    const double down = f();
    values[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// BFS labelling: component id per pixel (or -1 for ignore) and sizes.
struct Components {
  std::vector<int> id;
  std::vector<std::size_t> size;
  std::vector<Label> label;
};

inline Components components(const LabelMap& m) {
  const std::size_t h = m.height(), w = m.width();
  Components c;
  c.id.assign(m.size(), -1);
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (c.id[s] >= 0 || m[s] == fcnt::kIgnoreLabel) continue;
    const int id = static_cast<int>(c.size.size());
    c.size.push_back(0);
    c.label.push_back(m[s]);
    std::deque<std::size_t> q{s};
    c.id[s] = id;
    while (!q.empty()) {
      const std::size_t p = q.front();
      q.pop_front();
      ++c.size.back();
      const std::size_t y = p / w, x = p % w;
      const std::size_t nb[4] = {y > 0 ? p - w : p, x > 0 ? p - 1 : p, x + 1 < w ? p + 1 : p, y + 1 < h ? p + w : p};
      for (std::size_t q2 : nb) {
        if (q2 != p && c.id[q2] < 0 && m[q2] == m[p]) {
          c.id[q2] = id;
          q.push_back(q2);
        }
      }
    }
  }
  return c;
}

// Number of 4-connected components per class.
inline std::map<Label, int> patches_per_class(const LabelMap& m) {
  const Components c = components(m);
  std::map<Label, int> out;
  for (Label l : c.label) ++out[l];
  return out;
}

// Overlap table n[pred][gt] over pixels with non-ignore ground truth.
inline std::map<std::pair<Label, Label>, double> overlap_table(const LabelMap& pred, const LabelMap& gt) {
  std::map<std::pair<Label, Label>, double> t;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] != fcnt::kIgnoreLabel) t[{pred[i], gt[i]}] += 1.0;
  return t;
}

// Best one-to-one relabelling by trying every permutation of pred classes.
inline double best_matched_correct(const LabelMap& pred, const LabelMap& gt) {
  std::set<Label> ps, gs;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] != fcnt::kIgnoreLabel) {
      ps.insert(pred[i]);
      gs.insert(gt[i]);
    }
  std::vector<Label> p(ps.begin(), ps.end()), g(gs.begin(), gs.end());
  const auto t = overlap_table(pred, gt);
  // Pad gt side with dummies so every pred class can be assigned.
  while (g.size() < p.size()) g.push_back(-1 - static_cast<Label>(g.size()));
  std::vector<std::size_t> perm(g.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  double best = 0.0;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto it = t.find({p[i], g[perm[i]]});
      if (it != t.end()) s += it->second;
    }
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Local refinement error summed by a double loop over pixel pairs.
inline void consistency(const LabelMap& a, const LabelMap& b, double& gce, double& lce) {
  std::vector<std::size_t> px;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i] != fcnt::kIgnoreLabel) px.push_back(i);
  const double n = static_cast<double>(px.size());
  double sab = 0.0, sba = 0.0, local = 0.0;
  for (std::size_t p : px) {
    double ra = 0, rb = 0, ra_not_b = 0, rb_not_a = 0;
    for (std::size_t q : px) {
      const bool in_a = a[q] == a[p], in_b = b[q] == b[p];
      ra += in_a;
      rb += in_b;
      ra_not_b += in_a && !in_b;
      rb_not_a += in_b && !in_a;
    }
    const double e1 = ra_not_b / ra, e2 = rb_not_a / rb;
    sab += e1;
    sba += e2;
    local += std::min(e1, e2);
  }
  gce = 100.0 * std::min(sab, sba) / n;
  lce = 100.0 * local / n;
}

}  // namespace oracle
