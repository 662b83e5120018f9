#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/tensor.hpp"

namespace fcnt {

/// 8-bit interleaved raster, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary/ASCII PGM, binary PPM or PNG (detected from the content).
Image8 read_image(const std::filesystem::path& path);
/// Writes PNG for a .png extension, otherwise PGM (gray) or PPM (RGB).
void write_image(const std::filesystem::path& path, const Image8& image);

/// Gray images map to [0, 1]; RGB is averaged unless `channels` is 3.
Tensor image_to_tensor(const Image8& image, std::size_t channels = 1);
/// Channel 0 of batch 0, clamped to [0, 1] and rounded to 8 bits.
Image8 tensor_to_image(const Tensor& tensor);

/// Palette: class i <-> gray level i, ignore <-> 255.
LabelMap image_to_labels(const Image8& image);
Image8 labels_to_image(const LabelMap& labels);

LabelMap read_label_image(const std::filesystem::path& path);
void write_label_image(const std::filesystem::path& path, const LabelMap& labels);

/// RGB rendering of `image` with pixels on a 4-neighbour label boundary
/// painted red.
Image8 render_overlay(const Tensor& image, const LabelMap& labels);

/// CRC-32 of a file's bytes, as 8 lowercase hex digits.
std::string file_crc32(const std::filesystem::path& path);
std::uint32_t crc32_bytes(const void* data, std::size_t size, std::uint32_t seed = 0);

}  // namespace fcnt
