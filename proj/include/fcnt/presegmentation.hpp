#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/model.hpp"
#include "fcnt/tensor.hpp"

namespace fcnt {

struct PresegConfig {
  std::size_t k = 2;
  std::size_t downsample_factor = 4;
  /// Chebyshev radius of the ignore band around inter-class boundaries; a
  /// radius r leaves a band 2r pixels wide between two regions.
  std::size_t border_dilation_radius = 3;
  std::size_t kmeans_restarts = 5;
  std::size_t kmeans_max_iters = 100;
  std::uint64_t seed = 0;
  /// Cluster softmax probabilities instead of raw scores.
  bool softmax_features = false;

  void validate() const;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  /// k centroids of `dim` values each, row-major.
  std::vector<double> centroids;
  double inertia = 0.0;
  /// Inertia after seeding and after every Lloyd iteration of the best restart.
  std::vector<double> inertia_trace;
  std::size_t iterations = 0;
};

/// Points are `dim`-wide rows of `points`. k-means++ seeding, Lloyd
/// iterations until the assignment stops changing, best of `restarts`.
KMeansResult kmeans(const std::vector<double>& points, std::size_t dim, std::size_t k, std::size_t restarts,
                    std::size_t max_iters, std::uint64_t seed);

/// Network scores of a downsampled image clustered into `config.k` labels,
/// upsampled back with nearest-neighbour lookup. Labels are compacted to
/// 0..k'-1 with k' <= k.
LabelMap preseg_from_network(const NetworkState& state, const Tensor& image, const PresegConfig& config);

struct CleanResult {
  LabelMap labels;
  /// Classes of the input left without any kept pixel.
  std::vector<Label> dropped;
};

/// Ignores a band around every inter-class boundary, keeps each class's
/// largest 4-connected component, fills holes it fully encloses and marks
/// all other pixels ignore.
CleanResult preseg_clean(const LabelMap& labels, const PresegConfig& config);

/// Reads a label image (class i as gray level i, ignore as 255). When
/// `height`/`width` are given, extents must match.
LabelMap load_external_preseg(const std::filesystem::path& path, std::optional<std::size_t> height = {},
                              std::optional<std::size_t> width = {});

}  // namespace fcnt
