#include "fcnt/label_map.hpp"

#include <algorithm>
#include <map>

#include "fcnt/error.hpp"

namespace fcnt {

LabelMap::LabelMap(std::size_t height, std::size_t width, Label fill)
    : height_(height), width_(width), labels_(height * width, fill) {}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<Label> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != height_ * width_) {
    throw DimensionError("pixels", "label buffer of " + std::to_string(labels_.size()) + " does not fit " +
                                       std::to_string(height_) + "x" + std::to_string(width_));
  }
}

std::set<Label> LabelMap::classes() const {
  std::set<Label> out;
  for (Label l : labels_) {
    if (l != kIgnoreLabel) out.insert(l);
  }
  return out;
}

std::size_t LabelMap::count(Label label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

LabelMap LabelMap::crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
  if (y0 + h > height_) throw DimensionError("height", "crop exceeds label map");
  if (x0 + w > width_) throw DimensionError("width", "crop exceeds label map");
  LabelMap out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(labels_.begin() + static_cast<std::ptrdiff_t>((y0 + y) * width_ + x0), w,
                out.labels_.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  return out;
}

LabelMap compact_labels(const LabelMap& map, std::vector<std::pair<Label, Label>>* mapping) {
  std::map<Label, Label> remap;
  for (Label l : map.classes()) remap.emplace(l, static_cast<Label>(remap.size()));
  LabelMap out = map;
  for (Label& l : out.labels()) {
    if (l != kIgnoreLabel) l = remap.at(l);
  }
  if (mapping) mapping->assign(remap.begin(), remap.end());
  return out;
}

}  // namespace fcnt
