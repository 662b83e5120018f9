#include "fcnt/refinement.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>

#include "fcnt/error.hpp"

namespace fcnt {

namespace {

constexpr std::size_t npos = PatchDecomposition::npos;

// Calls f(q) for each 4-neighbour q of pixel p.
template <typename F>
void for_neighbours(std::size_t p, std::size_t h, std::size_t w, F&& f) {
  const std::size_t y = p / w, x = p % w;
  if (y > 0) f(p - w);
  if (x > 0) f(p - 1);
  if (x + 1 < w) f(p + 1);
  if (y + 1 < h) f(p + w);
}

bool on_border(std::size_t p, std::size_t h, std::size_t w) {
  const std::size_t y = p / w, x = p % w;
  return y == 0 || x == 0 || y + 1 == h || x + 1 == w;
}

// Anchors remember one pixel of each class's selected patch so the selection
// can only grow from one fill to the next.
class PatchSelector {
 public:
  PatchSelector(std::size_t h, std::size_t w, std::vector<Label> classes)
      : h_(h), w_(w), classes_(std::move(classes)), anchor_(classes_.size(), npos) {}

  FillResult fill(LabelMap labels) {
    const PatchDecomposition cc = connected_components(labels);
    const std::size_t n = h_ * w_;
    std::vector<std::size_t> chosen(cc.patch_count(), npos);
    FillResult out;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      if (anchor_[i] == npos) {
        for (const Patch& p : cc.patches) {
          if (p.label == classes_[i]) {
            anchor_[i] = p.first;
            break;
          }
        }
      }
      if (anchor_[i] == npos) {
        out.missing.push_back(classes_[i]);
        continue;
      }
      chosen[cc.patch_of[anchor_[i]]] = i;
    }
    out.selected.assign(n, false);
    for (std::size_t p = 0; p < n; ++p) {
      if (cc.patch_of[p] != npos && chosen[cc.patch_of[p]] != npos) out.selected[p] = true;
    }

    // Enclosure filling over maximal regions of non-selected pixels.
    std::vector<bool> seen(out.selected);
    std::vector<std::size_t> region;
    std::deque<std::size_t> queue;
    for (std::size_t s = 0; s < n; ++s) {
      if (seen[s]) continue;
      region.clear();
      seen[s] = true;
      queue.push_back(s);
      bool border = false;
      std::size_t encloser = npos;
      bool single = true;
      while (!queue.empty()) {
        const std::size_t p = queue.front();
        queue.pop_front();
        region.push_back(p);
        border = border || on_border(p, h_, w_);
        for_neighbours(p, h_, w_, [&](std::size_t q) {
          if (out.selected[q]) {
            const std::size_t patch = cc.patch_of[q];
            if (encloser == npos) encloser = patch;
            else if (encloser != patch) single = false;
          } else if (!seen[q]) {
            seen[q] = true;
            queue.push_back(q);
          }
        });
      }
      if (border || !single || encloser == npos) continue;
      const Label fill_label = cc.patches[encloser].label;
      for (std::size_t p : region) {
        labels[p] = fill_label;
        out.selected[p] = true;
      }
    }
    out.labels = std::move(labels);
    return out;
  }

  const std::vector<Label>& classes() const { return classes_; }

 private:
  std::size_t h_, w_;
  std::vector<Label> classes_;
  std::vector<std::size_t> anchor_;
};

std::vector<Label> largest_classes(const PatchDecomposition& cc, std::size_t n) {
  std::vector<Label> out;
  for (const Patch& p : cc.patches) {
    if (out.size() == n) break;
    if (std::find(out.begin(), out.end(), p.label) == out.end()) out.push_back(p.label);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool one_patch_per_class(const LabelMap& labels, const std::vector<Label>& classes) {
  const PatchDecomposition cc = connected_components(labels);
  if (cc.patch_count() != classes.size()) return false;
  std::vector<Label> seen;
  for (const Patch& p : cc.patches) {
    if (!std::binary_search(classes.begin(), classes.end(), p.label)) return false;
    seen.push_back(p.label);
  }
  std::sort(seen.begin(), seen.end());
  return std::adjacent_find(seen.begin(), seen.end()) == seen.end();
}

// Per-pixel ranking restricted to the target classes, best first.
std::vector<Label> restricted_ranks(const Tensor& scores, const std::vector<Label>& classes) {
  const Shape& s = scores.shape();
  const std::size_t n = s.plane(), k = classes.size();
  std::vector<Label> ranks(k * n);
  std::vector<Label> order(k);
  for (std::size_t p = 0; p < n; ++p) {
    order = classes;
    std::stable_sort(order.begin(), order.end(), [&](Label a, Label b) {
      return scores.plane(0, static_cast<std::size_t>(a))[p] > scores.plane(0, static_cast<std::size_t>(b))[p];
    });
    for (std::size_t r = 0; r < k; ++r) ranks[r * n + p] = order[r];
  }
  return ranks;
}

// Multi-source BFS from the selected pixels; each remaining pixel takes the
// label of the BFS parent it was reached from.
LabelMap geodesic_assign(const LabelMap& labels, const std::vector<bool>& selected) {
  const std::size_t h = labels.height(), w = labels.width();
  LabelMap out = labels;
  std::vector<bool> done(selected);
  std::deque<std::size_t> queue;
  for (std::size_t p = 0; p < selected.size(); ++p) {
    if (selected[p]) queue.push_back(p);
  }
  while (!queue.empty()) {
    const std::size_t p = queue.front();
    queue.pop_front();
    for_neighbours(p, h, w, [&](std::size_t q) {
      if (done[q]) return;
      done[q] = true;
      out[q] = out[p];
      queue.push_back(q);
    });
  }
  return out;
}

}  // namespace

PatchDecomposition connected_components(const LabelMap& labels) {
  const std::size_t h = labels.height(), w = labels.width(), n = labels.size();
  PatchDecomposition d;
  d.height = h;
  d.width = w;
  d.patch_of.assign(n, npos);
  std::vector<Patch> found;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (labels[s] == kIgnoreLabel || d.patch_of[s] != npos) continue;
    const std::size_t id = found.size();
    Patch patch{labels[s], 0, s};
    d.patch_of[s] = id;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++patch.size;
      for_neighbours(p, h, w, [&](std::size_t q) {
        if (d.patch_of[q] == npos && labels[q] == patch.label) {
          d.patch_of[q] = id;
          stack.push_back(q);
        }
      });
    }
    found.push_back(patch);
  }
  // Discovery order is raster order of first pixels, so a stable sort by
  // size gives the documented ordering.
  std::vector<std::size_t> order(found.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return found[a].size > found[b].size; });
  std::vector<std::size_t> rename(found.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    rename[order[i]] = i;
    d.patches.push_back(found[order[i]]);
  }
  for (std::size_t& p : d.patch_of) {
    if (p != npos) p = rename[p];
  }
  d.class_count = labels.classes().size();
  return d;
}

FillResult largest_patches_fill(const LabelMap& labels, const std::vector<Label>& classes) {
  std::vector<Label> sorted(classes);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  PatchSelector selector(labels.height(), labels.width(), sorted);
  return selector.fill(labels);
}

FillResult largest_patches_fill(const LabelMap& labels, std::size_t n) {
  return largest_patches_fill(labels, largest_classes(connected_components(labels), n));
}

RefineResult refine_detailed(const Tensor& scores, std::size_t n, std::size_t iteration_cap) {
  const Shape& s = scores.shape();
  require_extent("batch", s.n, 1);
  require_finite(scores, "refine scores");
  if (n == 0) n = s.c;
  if (n > s.c) {
    throw ValidationError("refine asked for " + std::to_string(n) + " classes but scores have " + std::to_string(s.c));
  }
  const std::size_t pixels = s.plane();
  const LabelMap argmax = predict_labels(scores);

  RefineResult r;
  if (n == s.c) {
    for (std::size_t c = 0; c < s.c; ++c) r.classes.push_back(static_cast<Label>(c));
  } else {
    // Fewer regions than network classes: keep the classes owning the
    // largest argmax patches, then classes by pixel count.
    r.classes = largest_classes(connected_components(argmax), n);
    for (std::size_t c = 0; c < s.c && r.classes.size() < n; ++c) {
      if (std::find(r.classes.begin(), r.classes.end(), static_cast<Label>(c)) == r.classes.end()) {
        r.classes.push_back(static_cast<Label>(c));
      }
    }
    std::sort(r.classes.begin(), r.classes.end());
  }
  const std::vector<Label> ranks = restricted_ranks(scores, r.classes);

  PatchSelector selector(s.h, s.w, r.classes);
  FillResult state = selector.fill(argmax);
  auto relabel = [&](std::size_t rank) {
    LabelMap next = state.labels;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (!state.selected[p]) next[p] = ranks[(rank - 1) * pixels + p];
    }
    state = selector.fill(std::move(next));
    r.max_rank = std::max(r.max_rank, rank);
    return one_patch_per_class(state.labels, r.classes);
  };

  bool done = one_patch_per_class(state.labels, r.classes);
  std::vector<std::optional<LabelMap>> prev(n + 1);
  while (!done && r.iterations < iteration_cap) {
    ++r.iterations;
    std::vector<std::optional<LabelMap>> cur(n + 1);
    for (std::size_t x = 1; x <= n && !done; ++x) {
      if (x >= 3 && !(prev[x - 1] && *prev[x - 1] == *cur[x - 1])) break;
      done = relabel(x);
      cur[x] = state.labels;
    }
    if (done) break;
    // Every rank exhausted without change: no further progress possible.
    if (cur == prev) break;
    prev = std::move(cur);
  }
  if (!done) {
    r.forced = true;
    r.labels = geodesic_assign(state.labels, state.selected);
  } else {
    r.labels = std::move(state.labels);
  }
  return r;
}

LabelMap refine(const Tensor& scores, std::size_t n) { return refine_detailed(scores, n).labels; }

}  // namespace fcnt
