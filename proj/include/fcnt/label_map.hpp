#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

namespace fcnt {

using Label = std::int32_t;

/// Reserved label excluded from loss, gradients and metrics. Also the gray
/// level used for it in label images.
inline constexpr Label kIgnoreLabel = 255;

/// H x W map of class indices.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t height, std::size_t width, Label fill = 0);
  LabelMap(std::size_t height, std::size_t width, std::vector<Label> labels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  Label& at(std::size_t y, std::size_t x) { return labels_[y * width_ + x]; }
  Label at(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }
  Label& operator[](std::size_t i) { return labels_[i]; }
  Label operator[](std::size_t i) const { return labels_[i]; }

  std::span<Label> labels() { return labels_; }
  std::span<const Label> labels() const { return labels_; }

  bool same_extents(const LabelMap& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Distinct non-ignore labels in ascending order.
  std::set<Label> classes() const;
  std::size_t count(Label label) const;

  LabelMap crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const;

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<Label> labels_;
};

/// Renumbers the non-ignore labels of `map` to 0..k-1 in ascending order of
/// their original values. `mapping`, if given, receives old -> new pairs.
LabelMap compact_labels(const LabelMap& map, std::vector<std::pair<Label, Label>>* mapping = nullptr);

}  // namespace fcnt
