#include "fcnt/presegmentation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "fcnt/error.hpp"
#include "fcnt/image_io.hpp"
#include "fcnt/refinement.hpp"
#include "fcnt/trainer.hpp"

namespace fcnt {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Lloyd {
  const std::vector<double>& points;
  std::size_t n, dim, k;

  // Returns inertia; ties go to the lowest centroid index.
  double assign(const std::vector<double>& centroids, std::vector<std::size_t>& out, std::vector<double>& dist) const {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(&points[i * dim], &centroids[c * dim], dim);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      out[i] = best;
      dist[i] = bd;
      inertia += bd;
    }
    return inertia;
  }

  std::vector<double> seed_plus_plus(Rng& rng) const {
    std::vector<double> centroids(k * dim);
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng() % n);
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t pick = first;
      if (c > 0) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += d2[i];
        if (total > 0.0) {
          const double target = uniform01(rng) * total;
          double acc = 0.0;
          pick = n;
          for (std::size_t i = 0; i < n; ++i) {
            if (d2[i] <= 0.0) continue;
            acc += d2[i];
            pick = i;
            if (acc > target) break;
          }
        } else {
          // Every remaining point coincides with a centroid.
          std::vector<std::size_t> free;
          for (std::size_t i = 0; i < n; ++i) {
            if (!chosen[i]) free.push_back(i);
          }
          pick = free[static_cast<std::size_t>(rng() % free.size())];
        }
      }
      chosen[pick] = true;
      std::copy_n(&points[pick * dim], dim, &centroids[c * dim]);
      for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(&points[i * dim], &centroids[c * dim], dim));
    }
    return centroids;
  }

  KMeansResult run(Rng& rng, std::size_t max_iters) const {
    KMeansResult r;
    r.centroids = seed_plus_plus(rng);
    r.assignments.assign(n, 0);
    std::vector<double> dist(n);
    r.inertia = assign(r.centroids, r.assignments, dist);
    r.inertia_trace.push_back(r.inertia);
    std::vector<std::size_t> next(n);
    std::vector<std::size_t> counts(k);
    for (std::size_t it = 0; it < max_iters; ++it) {
      std::fill(r.centroids.begin(), r.centroids.end(), 0.0);
      std::fill(counts.begin(), counts.end(), 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++counts[r.assignments[i]];
        for (std::size_t j = 0; j < dim; ++j) r.centroids[r.assignments[i] * dim + j] += points[i * dim + j];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
          // Reseed an empty cluster at the point farthest from its centroid.
          const std::size_t far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
          std::copy_n(&points[far * dim], dim, &r.centroids[c * dim]);
          dist[far] = 0.0;
          continue;
        }
        for (std::size_t j = 0; j < dim; ++j) r.centroids[c * dim + j] /= static_cast<double>(counts[c]);
      }
      const double inertia = assign(r.centroids, next, dist);
      ++r.iterations;
      r.inertia_trace.push_back(inertia);
      r.inertia = inertia;
      if (next == r.assignments) break;
      r.assignments.swap(next);
    }
    return r;
  }
};

std::vector<double> score_features(const Tensor& scores, bool softmax) {
  const Shape& s = scores.shape();
  const std::size_t n = s.plane();
  std::vector<double> out(n * s.c);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < s.c; ++c) out[p * s.c + c] = scores.plane(0, c)[p];
  }
  if (softmax) {
    for (std::size_t p = 0; p < n; ++p) {
      double* v = &out[p * s.c];
      const double m = *std::max_element(v, v + s.c);
      double z = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) z += (v[c] = std::exp(v[c] - m));
      for (std::size_t c = 0; c < s.c; ++c) v[c] /= z;
    }
  }
  return out;
}

// Separable Chebyshev dilation of a binary mask.
std::vector<bool> dilate(const std::vector<bool>& mask, std::size_t h, std::size_t w, std::size_t r) {
  if (r == 0) return mask;
  std::vector<bool> rows(mask.size(), false), out(mask.size(), false);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      const std::size_t lo = x >= r ? x - r : 0, hi = std::min(w - 1, x + r);
      for (std::size_t q = lo; q <= hi; ++q) rows[y * w + q] = true;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!rows[y * w + x]) continue;
      const std::size_t lo = y >= r ? y - r : 0, hi = std::min(h - 1, y + r);
      for (std::size_t q = lo; q <= hi; ++q) out[q * w + x] = true;
    }
  }
  return out;
}

}  // namespace

void PresegConfig::validate() const {
  if (k < 2) throw ValidationError("pre-segmentation needs k >= 2, got " + std::to_string(k));
  if (downsample_factor < 1) throw ValidationError("downsample factor must be at least 1");
  if (kmeans_restarts < 1) throw ValidationError("k-means needs at least one restart");
}

KMeansResult kmeans(const std::vector<double>& points, std::size_t dim, std::size_t k, std::size_t restarts,
                    std::size_t max_iters, std::uint64_t seed) {
  if (dim == 0 || points.size() % dim != 0) throw DimensionError("dim", "point buffer is not a multiple of dim");
  const std::size_t n = points.size() / dim;
  if (k == 0) throw ValidationError("k-means needs k >= 1");
  if (n < k) {
    throw ValidationError("k-means with k=" + std::to_string(k) + " needs at least as many points, got " +
                          std::to_string(n));
  }
  Lloyd lloyd{points, n, dim, k};
  Rng master(seed);
  KMeansResult best;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    Rng rng(master());
    KMeansResult cur = lloyd.run(rng, max_iters);
    if (r == 0 || cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

LabelMap preseg_from_network(const NetworkState& state, const Tensor& image, const PresegConfig& config) {
  config.validate();
  const Shape& s = image.shape();
  const std::size_t f = config.downsample_factor;
  const std::size_t lh = std::max<std::size_t>(1, (s.h + f - 1) / f);
  const std::size_t lw = std::max<std::size_t>(1, (s.w + f - 1) / f);
  const Tensor small = f == 1 ? image : resize_bilinear(image, lh, lw);
  const Tensor scores = infer_full(state, small).scores;
  const std::vector<double> features = score_features(scores, config.softmax_features);
  const KMeansResult km =
      kmeans(features, scores.shape().c, config.k, config.kmeans_restarts, config.kmeans_max_iters, config.seed);

  LabelMap out(s.h, s.w);
  for (std::size_t y = 0; y < s.h; ++y) {
    const std::size_t sy = std::min(lh - 1, y * lh / s.h);
    for (std::size_t x = 0; x < s.w; ++x) {
      const std::size_t sx = std::min(lw - 1, x * lw / s.w);
      out.at(y, x) = static_cast<Label>(km.assignments[sy * lw + sx]);
    }
  }
  return compact_labels(out);
}

CleanResult preseg_clean(const LabelMap& labels, const PresegConfig& config) {
  const std::size_t h = labels.height(), w = labels.width(), n = labels.size();
  const std::size_t r = config.border_dilation_radius;

  LabelMap masked = labels;
  if (r > 0) {
    std::vector<bool> boundary(n, false);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Label a = labels.at(y, x);
        if (a == kIgnoreLabel) continue;
        auto differs = [&](std::size_t yy, std::size_t xx) {
          const Label b = labels.at(yy, xx);
          return b != kIgnoreLabel && b != a;
        };
        if ((y > 0 && differs(y - 1, x)) || (x > 0 && differs(y, x - 1)) || (y + 1 < h && differs(y + 1, x)) ||
            (x + 1 < w && differs(y, x + 1))) {
          boundary[y * w + x] = true;
        }
      }
    }
    const std::vector<bool> band = dilate(boundary, h, w, r - 1);
    for (std::size_t p = 0; p < n; ++p) {
      if (band[p]) masked[p] = kIgnoreLabel;
    }
  }

  // Largest component per class; patches are sorted so the first hit wins.
  const PatchDecomposition cc = connected_components(masked);
  std::vector<std::size_t> keep;
  std::vector<Label> kept_classes;
  for (std::size_t i = 0; i < cc.patches.size(); ++i) {
    const Label c = cc.patches[i].label;
    if (std::find(kept_classes.begin(), kept_classes.end(), c) == kept_classes.end()) {
      kept_classes.push_back(c);
      keep.push_back(i);
    }
  }
  std::vector<std::size_t> owner(n, PatchDecomposition::npos);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t id = cc.patch_of[p];
    if (id != PatchDecomposition::npos && std::find(keep.begin(), keep.end(), id) != keep.end()) owner[p] = id;
  }

  CleanResult out;
  out.labels = LabelMap(h, w, kIgnoreLabel);
  for (std::size_t p = 0; p < n; ++p) {
    if (owner[p] != PatchDecomposition::npos) out.labels[p] = cc.patches[owner[p]].label;
  }

  // Holes: regions of the complement of a kept component that stay off the
  // border and hold no other kept component.
  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return cc.patches[a].label < cc.patches[b].label; });
  std::vector<bool> seen(n);
  std::vector<std::size_t> region;
  std::deque<std::size_t> queue;
  for (std::size_t id : keep) {
    const Label c = cc.patches[id].label;
    std::fill(seen.begin(), seen.end(), false);
    for (std::size_t p = 0; p < n; ++p) {
      if (owner[p] == id) seen[p] = true;
    }
    for (std::size_t s = 0; s < n; ++s) {
      if (seen[s]) continue;
      region.clear();
      seen[s] = true;
      queue.push_back(s);
      bool open = false;
      while (!queue.empty()) {
        const std::size_t p = queue.front();
        queue.pop_front();
        region.push_back(p);
        const std::size_t y = p / w, x = p % w;
        if (y == 0 || x == 0 || y + 1 == h || x + 1 == w) open = true;
        if (owner[p] != PatchDecomposition::npos) open = true;
        auto visit = [&](std::size_t q) {
          if (!seen[q]) {
            seen[q] = true;
            queue.push_back(q);
          }
        };
        if (y > 0) visit(p - w);
        if (x > 0) visit(p - 1);
        if (x + 1 < w) visit(p + 1);
        if (y + 1 < h) visit(p + w);
      }
      if (open) continue;
      for (std::size_t p : region) {
        out.labels[p] = c;
        owner[p] = id;
      }
    }
  }

  for (Label c : labels.classes()) {
    if (std::find(kept_classes.begin(), kept_classes.end(), c) == kept_classes.end()) out.dropped.push_back(c);
  }
  return out;
}

LabelMap load_external_preseg(const std::filesystem::path& path, std::optional<std::size_t> height,
                              std::optional<std::size_t> width) {
  LabelMap labels = read_label_image(path);
  if (height) require_extent("height", labels.height(), *height);
  if (width) require_extent("width", labels.width(), *width);
  return labels;
}

}  // namespace fcnt
