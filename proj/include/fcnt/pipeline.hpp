#pragma once

#include <optional>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/model.hpp"
#include "fcnt/presegmentation.hpp"
#include "fcnt/refinement.hpp"
#include "fcnt/trainer.hpp"

namespace fcnt {

struct SupervisedSegmentation {
  Tensor scores;
  LabelMap raw;
  /// Set when refinement was requested.
  std::optional<RefineResult> refined;

  const LabelMap& labels() const { return refined ? refined->labels : raw; }
};

/// Full-image inference plus optional refinement to `regions` classes
/// (0 means every class of the network).
SupervisedSegmentation segment_supervised(const NetworkState& state, const Tensor& image, bool refine_output,
                                          std::size_t regions = 0);

struct UnsupOptions {
  PresegConfig preseg;
  TrainConfig train;
  EarlyStopConfig early;
  bool refine = true;
  /// Start the fine-tuned network from the pre-trained trunk (every layer
  /// whose shape does not depend on the class count) instead of Xavier.
  bool transfer = true;
  /// Replaces the k-means pre-segmentation.
  std::optional<LabelMap> external_preseg;
};

struct UnsupOutcome {
  LabelMap preseg;
  LabelMap cleaned;
  std::vector<Label> dropped;
  StopReport report;
  NetworkState state;
  LabelMap raw;
  std::optional<RefineResult> refined;

  const LabelMap& labels() const { return refined ? refined->labels : raw; }
};

/// Network for fine-tuning on `classes` pre-segmentation labels.
NetworkState unsup_initial_state(const NetworkState& pretrained, std::size_t classes, std::uint64_t seed,
                                 bool transfer);

/// Pre-segmentation (k-means over `pretrained` scores or an external map),
/// cleaning, early-stopped fine-tuning on the image and optional refinement.
UnsupOutcome segment_unsupervised(const NetworkState& pretrained, const Tensor& image, const UnsupOptions& options);

}  // namespace fcnt
