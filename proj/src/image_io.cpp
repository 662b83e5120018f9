#include "fcnt/image_io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include "fcnt/error.hpp"

namespace fcnt {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Netpbm header token, skipping whitespace and '#' comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok += static_cast<char>(bytes[pos++]);
  return tok;
}

Image8 decode_netpbm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic != "P2" && magic != "P5" && magic != "P6") throw IoError(path.string() + ": unsupported netpbm type " + magic);
  Image8 img;
  try {
    img.width = std::stoul(next_token(bytes, pos));
    img.height = std::stoul(next_token(bytes, pos));
    const unsigned long maxval = std::stoul(next_token(bytes, pos));
    if (maxval != 255) throw IoError(path.string() + ": only 8-bit netpbm (maxval 255) is supported");
  } catch (const std::invalid_argument&) {
    throw IoError(path.string() + ": malformed netpbm header");
  }
  img.channels = magic == "P6" ? 3 : 1;
  const std::size_t count = img.width * img.height * img.channels;
  img.pixels.resize(count);
  if (magic == "P2") {
    for (std::size_t i = 0; i < count; ++i) {
      const std::string tok = next_token(bytes, pos);
      if (tok.empty()) throw IoError(path.string() + ": truncated ASCII raster");
      img.pixels[i] = static_cast<std::uint8_t>(std::stoul(tok));
    }
  } else {
    ++pos;  // single whitespace after maxval
    if (pos + count > bytes.size()) throw IoError(path.string() + ": truncated raster");
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), count, img.pixels.begin());
  }
  return img;
}

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

Image8 decode_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string());
  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("libpng initialisation failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("libpng initialisation failed");
  if (setjmp(png_jmpbuf(g.png))) throw IoError(path.string() + ": corrupt PNG");
  png_init_io(g.png, fp.get());
  png_read_info(g.png, g.info);
  png_set_strip_16(g.png);
  png_set_strip_alpha(g.png);
  png_set_packing(g.png);
  png_set_palette_to_rgb(g.png);
  png_set_expand_gray_1_2_4_to_8(g.png);
  png_read_update_info(g.png, g.info);
  Image8 img;
  img.width = png_get_image_width(g.png, g.info);
  img.height = png_get_image_height(g.png, g.info);
  img.channels = png_get_channels(g.png, g.info);
  if (img.channels != 1 && img.channels != 3) throw IoError(path.string() + ": unsupported PNG channel layout");
  img.pixels.resize(img.width * img.height * img.channels);
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * img.channels;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  return img;
}

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

void encode_png(const std::filesystem::path& path, const Image8& img) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  PngWriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("libpng initialisation failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("libpng initialisation failed");
  if (setjmp(png_jmpbuf(g.png))) throw IoError(path.string() + ": PNG encoding failed");
  png_init_io(g.png, fp.get());
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * img.channels);
  }
  png_write_image(g.png, rows.data());
  png_write_end(g.png, nullptr);
}

}  // namespace

Image8 read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_netpbm(bytes, path);
  throw IoError(path.string() + ": unrecognised image format");
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("images must have 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw DimensionError("pixels", "raster size does not match extents");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (path.extension() == ".png") {
    encode_png(path, image);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Tensor image_to_tensor(const Image8& image, std::size_t channels) {
  if (channels != 1 && channels != 3) throw ValidationError("tensor images have 1 or 3 channels");
  Tensor t({1, channels, image.height, image.width});
  const std::size_t P = image.height * image.width;
  for (std::size_t p = 0; p < P; ++p) {
    if (channels == 1) {
      double acc = 0.0;
      for (std::size_t c = 0; c < image.channels; ++c) acc += image.pixels[p * image.channels + c];
      t[p] = acc / (255.0 * static_cast<double>(image.channels));
    } else {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src = image.channels == 3 ? c : 0;
        t[c * P + p] = image.pixels[p * image.channels + src] / 255.0;
      }
    }
  }
  return t;
}

Image8 tensor_to_image(const Tensor& tensor) {
  const Shape& s = tensor.shape();
  Image8 img{s.h, s.w, 1, std::vector<std::uint8_t>(s.plane())};
  const double* src = tensor.plane(0, 0);
  for (std::size_t p = 0; p < s.plane(); ++p) {
    img.pixels[p] = static_cast<std::uint8_t>(std::lround(std::clamp(src[p], 0.0, 1.0) * 255.0));
  }
  return img;
}

LabelMap image_to_labels(const Image8& image) {
  if (image.channels != 1) throw PaletteError("label images must be single-channel gray");
  LabelMap labels(image.height, image.width);
  for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = image.pixels[p];
  return labels;
}

Image8 labels_to_image(const LabelMap& labels) {
  Image8 img{labels.height(), labels.width(), 1, std::vector<std::uint8_t>(labels.size())};
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const Label l = labels[p];
    if (l < 0 || l > kIgnoreLabel) throw PaletteError("label " + std::to_string(l) + " has no gray level");
    img.pixels[p] = static_cast<std::uint8_t>(l);
  }
  return img;
}

LabelMap read_label_image(const std::filesystem::path& path) { return image_to_labels(read_image(path)); }

void write_label_image(const std::filesystem::path& path, const LabelMap& labels) {
  write_image(path, labels_to_image(labels));
}

Image8 render_overlay(const Tensor& image, const LabelMap& labels) {
  const Shape& s = image.shape();
  if (s.h != labels.height() || s.w != labels.width()) throw DimensionError("height", "overlay extents differ");
  const Image8 gray = tensor_to_image(image);
  Image8 rgb{s.h, s.w, 3, std::vector<std::uint8_t>(s.plane() * 3)};
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      const Label l = labels.at(y, x);
      const bool edge = (x + 1 < s.w && labels.at(y, x + 1) != l) || (y + 1 < s.h && labels.at(y + 1, x) != l) ||
                        (x > 0 && labels.at(y, x - 1) != l) || (y > 0 && labels.at(y - 1, x) != l);
      const std::size_t p = y * s.w + x;
      for (std::size_t c = 0; c < 3; ++c) rgb.pixels[p * 3 + c] = gray.pixels[p];
      if (edge) {
        rgb.pixels[p * 3] = 255;
        rgb.pixels[p * 3 + 1] = 0;
        rgb.pixels[p * 3 + 2] = 0;
      }
    }
  }
  return rgb;
}

std::uint32_t crc32_bytes(const void* data, std::size_t size, std::uint32_t seed) {
  return static_cast<std::uint32_t>(
      crc32_z(seed, static_cast<const Bytef*>(data), static_cast<z_size_t>(size)));
}

std::string file_crc32(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32_bytes(bytes.data(), bytes.size()));
  return buf;
}

}  // namespace fcnt
