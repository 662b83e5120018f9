#include <filesystem>
#include <fstream>

#include "checks.hpp"
#include "doctest.h"
#include "fcnt/error.hpp"
#include "fcnt/image_io.hpp"

using namespace fcnt;
namespace fs = std::filesystem;

namespace {

Image8 random_image(std::size_t h, std::size_t w, std::size_t channels, Rng& rng) {
  Image8 img{h, w, channels, std::vector<std::uint8_t>(h * w * channels)};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

bool same(const Image8& a, const Image8& b) {
  return a.height == b.height && a.width == b.width && a.channels == b.channels && a.pixels == b.pixels;
}

fs::path scratch() {
  const fs::path d = fs::temp_directory_path() / "fcnt_image_io";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("gray and colour rasters round-trip through every format") {
  Rng rng(1);
  const fs::path d = scratch();
  for (std::size_t channels : {1, 3})
    for (const char* ext : {".pgm", ".png"}) {
      const Image8 img = random_image(13, 17, channels, rng);
      const fs::path p = d / (std::string("rt") + std::to_string(channels) + ext);
      write_image(p, img);
      CHECK(same(read_image(p), img));
    }
}

TEST_CASE("ascii pgm is read") {
  const fs::path p = scratch() / "ascii.pgm";
  std::ofstream(p) << "P2\n# comment\n3 2\n255\n0 1 2\n253 254 255\n";
  const Image8 img = read_image(p);
  CHECK(img.width == 3);
  CHECK(img.height == 2);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 1, 2, 253, 254, 255});
}

TEST_CASE("malformed files raise io errors") {
  const fs::path d = scratch();
  CHECK_THROWS_AS(read_image(d / "missing.pgm"), IoError);
  std::ofstream(d / "junk.pgm") << "hello";
  CHECK_THROWS_AS(read_image(d / "junk.pgm"), IoError);
  std::ofstream(d / "deep.pgm") << "P5\n2 2\n65535\n";
  CHECK_THROWS_AS(read_image(d / "deep.pgm"), IoError);
  std::ofstream(d / "short.pgm", std::ios::binary) << "P5\n4 4\n255\nabc";
  CHECK_THROWS_AS(read_image(d / "short.pgm"), IoError);
  std::ofstream(d / "bad.png", std::ios::binary) << "\x89PNG\r\n\x1a\n garbage";
  CHECK_THROWS_AS(read_image(d / "bad.png"), IoError);
  Image8 wrong{2, 2, 1, std::vector<std::uint8_t>(3)};
  CHECK_THROWS_AS(write_image(d / "wrong.pgm", wrong), DimensionError);
  Image8 two{2, 2, 2, std::vector<std::uint8_t>(8)};
  CHECK_THROWS_AS(write_image(d / "two.pgm", two), ValidationError);
}

TEST_CASE("tensor conversion") {
  Image8 rgb{1, 2, 3, {0, 0, 0, 255, 255, 0}};
  const Tensor gray = image_to_tensor(rgb);
  CHECK(gray.shape() == Shape{1, 1, 1, 2});
  CHECK(gray[0] == 0.0);
  CHECK(gray[1] == doctest::Approx(2.0 / 3.0));
  const Tensor colour = image_to_tensor(rgb, 3);
  CHECK(colour.at(0, 2, 0, 1) == 0.0);
  CHECK(colour.at(0, 0, 0, 1) == 1.0);
  CHECK_THROWS_AS(image_to_tensor(rgb, 2), ValidationError);

  Tensor t({1, 1, 1, 4}, std::vector<double>{-0.5, 0.5, 1.0, 2.0});
  CHECK(tensor_to_image(t).pixels == std::vector<std::uint8_t>{0, 128, 255, 255});
  Rng rng(2);
  const Image8 g = random_image(5, 6, 1, rng);
  CHECK(same(tensor_to_image(image_to_tensor(g)), g));
}

TEST_CASE("label palette") {
  LabelMap m(2, 3, std::vector<Label>{0, 1, 2, 3, 4, kIgnoreLabel});
  const Image8 img = labels_to_image(m);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 1, 2, 3, 4, 255});
  CHECK(image_to_labels(img) == m);
  const fs::path p = scratch() / "labels.png";
  write_label_image(p, m);
  CHECK(read_label_image(p) == m);
  m[0] = -3;
  CHECK_THROWS_AS(labels_to_image(m), PaletteError);
  CHECK_THROWS_AS(image_to_labels(Image8{1, 1, 3, {1, 2, 3}}), PaletteError);
}

TEST_CASE("overlay marks label boundaries in red") {
  const Tensor img({1, 1, 3, 4}, 0.0);
  LabelMap m(3, 4, 0);
  for (std::size_t y = 0; y < 3; ++y) m.at(y, 3) = 1;
  const Image8 o = render_overlay(img, m);
  CHECK(o.channels == 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const std::size_t p = (y * 4 + x) * 3;
      const bool edge = x >= 2;
      CHECK(o.pixels[p] == (edge ? 255 : 0));
      CHECK(o.pixels[p + 1] == 0);
    }
  CHECK_THROWS_AS(render_overlay(img, LabelMap(3, 5, 0)), DimensionError);
}

TEST_CASE("crc32 check values") {
  const std::string s = "123456789";
  CHECK(crc32_bytes(s.data(), s.size()) == 0xcbf43926u);
  const std::uint32_t part = crc32_bytes(s.data(), 4);
  CHECK(crc32_bytes(s.data() + 4, 5, part) == 0xcbf43926u);
  const fs::path p = scratch() / "crc.txt";
  std::ofstream(p, std::ios::binary) << s;
  CHECK(file_crc32(p) == "cbf43926");
  CHECK_THROWS_AS(file_crc32(scratch() / "nope"), IoError);
}
