#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/model.hpp"
#include "fcnt/tensor.hpp"

namespace fcnt {

struct Patch {
  Label label = 0;
  std::size_t size = 0;
  /// Raster index of the patch's first pixel.
  std::size_t first = 0;
};

/// 4-connected single-label components. Ignore pixels get no patch.
struct PatchDecomposition {
  std::size_t height = 0, width = 0;
  /// Sorted by size (descending), then by first pixel in raster order.
  std::vector<Patch> patches;
  /// Index into `patches` for every pixel, or npos for ignore pixels.
  std::vector<std::size_t> patch_of;
  /// Number of distinct classes present.
  std::size_t class_count = 0;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t patch_count() const { return patches.size(); }
};

PatchDecomposition connected_components(const LabelMap& labels);

struct FillResult {
  LabelMap labels;
  /// Pixels of the selected patches (after enclosure filling).
  std::vector<bool> selected;
  /// Requested classes that have no pixels at all.
  std::vector<Label> missing;
};

/// Selects the largest patch of each class in `classes` and relabels every
/// non-selected region whose entire outer boundary lies on a single selected
/// patch to that patch's class. Regions touching the image border are never
/// considered enclosed.
FillResult largest_patches_fill(const LabelMap& labels, const std::vector<Label>& classes);
/// Uses the `n` classes with the largest patches.
FillResult largest_patches_fill(const LabelMap& labels, std::size_t n);

struct RefineResult {
  LabelMap labels;
  /// Loop iterations run (0 when the argmax map already has one patch per class).
  std::size_t iterations = 0;
  /// Deepest prediction rank used, 1-based.
  std::size_t max_rank = 1;
  /// Set when the relabelling loop could not reach one patch per class and
  /// the remaining pixels were assigned to the geodesically nearest selected
  /// patch.
  bool forced = false;
  std::vector<Label> classes;
};

inline constexpr std::size_t kRefineIterationCap = 100;

/// Iterative relabelling of pixels outside the largest patches to lower
/// ranked predictions until each of `n` classes forms a single patch.
/// `n` defaults to the class count of the score volume.
RefineResult refine_detailed(const Tensor& scores, std::size_t n = 0, std::size_t iteration_cap = kRefineIterationCap);
LabelMap refine(const Tensor& scores, std::size_t n = 0);

}  // namespace fcnt
