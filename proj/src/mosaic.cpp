#include "fcnt/mosaic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fcnt/error.hpp"
#include "fcnt/image_io.hpp"

namespace fcnt {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

using Plane = std::vector<double>;

Plane gaussian_noise(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Plane out(n);
  for (double& v : out) v = normal(rng);
  return out;
}

std::size_t wrap(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

// Separable Gaussian blur with periodic borders.
Plane blur(const Plane& in, std::size_t h, std::size_t w, double sigma) {
  if (sigma <= 0.0) return in;
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double z = 0.0;
  for (long i = -r; i <= r; ++i) z += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= z;
  Plane tmp(in.size()), out(in.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (long i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * in[y * w + wrap(static_cast<long>(x) + i, w)];
      tmp[y * w + x] = s;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (long i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp[wrap(static_cast<long>(y) + i, h) * w + x];
      out[y * w + x] = s;
    }
  }
  return out;
}

// Rescales to unit-ish amplitude: standard deviation 0.5, clipped to [-1, 1].
void normalise(Plane& p) {
  double mean = 0.0;
  for (double v : p) mean += v;
  mean /= static_cast<double>(p.size());
  double var = 0.0;
  for (double v : p) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(p.size()));
  for (double& v : p) v = sd > 0.0 ? std::clamp(0.5 * (v - mean) / sd, -1.0, 1.0) : 0.0;
}

Plane pattern(const TextureSpec& spec, std::size_t h, std::size_t w, Rng& rng) {
  const std::size_t n = h * w;
  const double f = spec.frequency;
  const double jitter = (uniform01(rng) - 0.5) * 0.16;
  const double theta = spec.orientation + jitter;
  const double c = std::cos(theta), s = std::sin(theta);
  const double phase = uniform01(rng) * 2.0 * kPi;
  const double phase2 = uniform01(rng) * 2.0 * kPi;
  Plane out(n);
  switch (spec.family) {
    case TextureFamily::grating:
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double u = static_cast<double>(x) * c + static_cast<double>(y) * s;
          out[y * w + x] = std::sin(2.0 * kPi * f * u + phase);
        }
      }
      break;
    case TextureFamily::checkerboard:
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double u = static_cast<double>(x) * c + static_cast<double>(y) * s;
          const double v = -static_cast<double>(x) * s + static_cast<double>(y) * c;
          const double a = std::sin(2.0 * kPi * f * u + phase), b = std::sin(2.0 * kPi * f * v + phase2);
          out[y * w + x] = (a >= 0.0) == (b >= 0.0) ? 1.0 : -1.0;
        }
      }
      break;
    case TextureFamily::band_noise: {
      const Plane noise = gaussian_noise(n, rng);
      const double s1 = 0.25 / f;
      const Plane lo = blur(noise, h, w, s1), hi = blur(noise, h, w, 2.0 * s1);
      for (std::size_t i = 0; i < n; ++i) out[i] = lo[i] - hi[i];
      normalise(out);
      break;
    }
    case TextureFamily::blob_field: {
      const double radius = 0.35 / f;
      const std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * f * f * 0.8)));
      std::fill(out.begin(), out.end(), -1.0);
      const long r = static_cast<long>(std::ceil(radius));
      for (std::size_t b = 0; b < count; ++b) {
        const double cy = uniform01(rng) * static_cast<double>(h), cx = uniform01(rng) * static_cast<double>(w);
        for (long dy = -r; dy <= r; ++dy) {
          for (long dx = -r; dx <= r; ++dx) {
            const double py = std::floor(cy) + static_cast<double>(dy), px = std::floor(cx) + static_cast<double>(dx);
            if ((py - cy) * (py - cy) + (px - cx) * (px - cx) > radius * radius) continue;
            out[wrap(static_cast<long>(py), h) * w + wrap(static_cast<long>(px), w)] = 1.0;
          }
        }
      }
      out = blur(out, h, w, 0.7);
      break;
    }
    case TextureFamily::stripe_noise: {
      const Plane noise = blur(gaussian_noise(n, rng), h, w, 0.6);
      const long len = std::max<long>(2, std::lround(0.6 / f));
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (long t = -len; t <= len; ++t) {
            const long yy = std::lround(static_cast<double>(y) + static_cast<double>(t) * s);
            const long xx = std::lround(static_cast<double>(x) + static_cast<double>(t) * c);
            acc += noise[wrap(yy, h) * w + wrap(xx, w)];
          }
          out[y * w + x] = acc;
        }
      }
      normalise(out);
      break;
    }
  }
  return out;
}

std::string join_classes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ";" : "") + std::to_string(v[i]);
  return out;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

}  // namespace

std::string family_name(TextureFamily family) {
  switch (family) {
    case TextureFamily::grating: return "grating";
    case TextureFamily::checkerboard: return "checkerboard";
    case TextureFamily::band_noise: return "band_noise";
    case TextureFamily::blob_field: return "blob_field";
    case TextureFamily::stripe_noise: return "stripe_noise";
  }
  return "unknown";
}

TextureFamily parse_family(const std::string& name) {
  for (TextureFamily f : {TextureFamily::grating, TextureFamily::checkerboard, TextureFamily::band_noise,
                          TextureFamily::blob_field, TextureFamily::stripe_noise}) {
    if (family_name(f) == name) return f;
  }
  throw ValidationError("unknown texture family '" + name + "'");
}

Tensor gen_texture(const TextureSpec& spec, std::size_t height, std::size_t width) {
  if (height < kMinInputExtent || width < kMinInputExtent) {
    throw DimensionError(height < kMinInputExtent ? "height" : "width", "textures need extents of at least 32");
  }
  if (!(spec.frequency > 0.0)) throw ValidationError("texture frequency must be positive");
  Rng rng(spec.seed);
  const Plane pat = pattern(spec, height, width, rng);
  const Plane noise = gaussian_noise(pat.size(), rng);
  Tensor out({1, 1, height, width});
  std::span<double> v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 + spec.contrast * (0.5 * pat[i] + spec.noise_sigma * noise[i]);
  for (int it = 0; it < 50; ++it) {
    double mean = 0.0;
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (std::abs(mean - 0.5) < 1e-3) break;
    for (double& x : v) x += 0.5 - mean;
  }
  for (double& x : v) x = std::clamp(x, 0.0, 1.0);
  return out;
}

std::vector<TextureSpec> texture_bank(std::size_t classes) {
  using F = TextureFamily;
  struct Row {
    F family;
    double frequency, orientation;
  };
  static const Row base[] = {
      {F::grating, 0.10, 0.0},           {F::checkerboard, 0.08, kPi / 4}, {F::band_noise, 0.15, 0.0},
      {F::blob_field, 0.06, 0.0},        {F::stripe_noise, 0.10, kPi / 2}, {F::grating, 0.20, kPi / 2},
      {F::checkerboard, 0.16, 0.0},      {F::band_noise, 0.05, 0.0},       {F::blob_field, 0.14, 0.0},
      {F::stripe_noise, 0.10, kPi / 4},
  };
  static const double scales[] = {0.07, 0.12, 0.18};
  std::vector<TextureSpec> bank;
  for (std::size_t i = 0; i < classes; ++i) {
    TextureSpec t;
    if (i < std::size(base)) {
      t.family = base[i].family;
      t.frequency = base[i].frequency;
      t.orientation = base[i].orientation;
    } else {
      t.family = static_cast<F>(i % 5);
      t.frequency = scales[(i / 5) % 3];
      t.orientation = std::fmod(static_cast<double>(i) * 2.399963, kPi);
    }
    t.class_id = i;
    bank.push_back(t);
  }
  return bank;
}

TextureSpec texture_instance(const TextureSpec& cls, std::uint64_t seed) {
  TextureSpec t = cls;
  t.seed = seed;
  return t;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t s = master;
  s = splitmix64(s) ^ (stream * 0xd1b54a32d192ed03ULL);
  s = splitmix64(s) ^ index;
  return splitmix64(s);
}

std::string layout_name(MosaicLayout layout) {
  switch (layout) {
    case MosaicLayout::vertical: return "vertical";
    case MosaicLayout::horizontal: return "horizontal";
    case MosaicLayout::voronoi: return "voronoi";
  }
  return "unknown";
}

MosaicLayout parse_layout(const std::string& name) {
  for (MosaicLayout l : {MosaicLayout::vertical, MosaicLayout::horizontal, MosaicLayout::voronoi}) {
    if (layout_name(l) == name) return l;
  }
  throw ValidationError("unknown mosaic layout '" + name + "'");
}

LabelMap mosaic_partition(const MosaicSpec& spec) {
  const std::size_t k = spec.classes.size();
  if (k == 0) throw ValidationError("a mosaic needs at least one region");
  if (!spec.allow_nonpaper && (k < kMinRegions || k > kMaxRegions)) {
    throw ValidationError("mosaics have 2 to 5 regions, got " + std::to_string(k));
  }
  const std::size_t h = spec.height, w = spec.width;
  LabelMap out(h, w);
  switch (spec.layout) {
    case MosaicLayout::vertical:
      if (w < k) throw DimensionError("width", "too narrow for the requested strips");
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) out.at(y, x) = static_cast<Label>(x * k / w);
      }
      break;
    case MosaicLayout::horizontal:
      if (h < k) throw DimensionError("height", "too short for the requested strips");
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) out.at(y, x) = static_cast<Label>(y * k / h);
      }
      break;
    case MosaicLayout::voronoi: {
      // Seeds kept apart so every cell is reasonably large. Euclidean Voronoi
      // cells are convex, hence connected.
      Rng rng(spec.seed ^ 0x5eedULL);
      std::vector<std::pair<double, double>> seeds;
      double min_dist = 0.6 * std::sqrt(static_cast<double>(h * w) / static_cast<double>(k));
      for (int attempt = 0; seeds.size() < k; ++attempt) {
        if (attempt > 0 && attempt % 200 == 0) min_dist *= 0.8;
        const double sy = uniform01(rng) * static_cast<double>(h), sx = uniform01(rng) * static_cast<double>(w);
        bool ok = true;
        for (auto [py, px] : seeds) ok = ok && std::hypot(py - sy, px - sx) >= min_dist;
        if (ok) seeds.emplace_back(sy, sx);
      }
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          std::size_t best = 0;
          double bd = std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < k; ++i) {
            const double dy = static_cast<double>(y) + 0.5 - seeds[i].first;
            const double dx = static_cast<double>(x) + 0.5 - seeds[i].second;
            const double d = dy * dy + dx * dx;
            if (d < bd) {
              bd = d;
              best = i;
            }
          }
          out.at(y, x) = static_cast<Label>(best);
        }
      }
      break;
    }
  }
  return out;
}

Mosaic compose_mosaic(const MosaicSpec& spec, const std::vector<TextureSpec>& bank) {
  std::vector<std::size_t> sorted(spec.classes);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("mosaic regions must come from distinct classes");
  }
  for (std::size_t c : spec.classes) {
    if (c >= bank.size()) throw ValidationError("class " + std::to_string(c) + " is not in the texture bank");
  }
  if (!spec.labels.empty() && spec.labels.size() != spec.classes.size()) {
    throw ValidationError("mosaic labels must match the region count");
  }
  const LabelMap partition = mosaic_partition(spec);
  Mosaic m{Tensor({1, 1, spec.height, spec.width}), LabelMap(spec.height, spec.width)};
  for (std::size_t r = 0; r < spec.classes.size(); ++r) {
    const TextureSpec t = texture_instance(bank[spec.classes[r]], derive_seed(spec.seed, 3, r));
    const Tensor tex = gen_texture(t, spec.height, spec.width);
    const Label label = spec.labels.empty() ? static_cast<Label>(spec.classes[r]) : spec.labels[r];
    for (std::size_t p = 0; p < partition.size(); ++p) {
      if (partition[p] != static_cast<Label>(r)) continue;
      m.image[p] = tex[p];
      m.gt[p] = label;
    }
  }
  return m;
}

void DatasetConfig::validate() const {
  if (num_classes < 2) throw ValidationError("a dataset needs at least 2 classes");
  if (min_regions < 1 || min_regions > max_regions) throw ValidationError("invalid region range");
  if (!allow_nonpaper && (min_regions < kMinRegions || max_regions > kMaxRegions)) {
    throw ValidationError("regions must lie in 2..5 (got " + std::to_string(min_regions) + ".." +
                          std::to_string(max_regions) + "); pass --allow-nonpaper to override");
  }
  if (test_mosaics > 0 && max_regions > num_classes) {
    throw ValidationError("mosaics with " + std::to_string(max_regions) + " regions need as many classes, have " +
                          std::to_string(num_classes));
  }
  if (train_size < kMinInputExtent || test_size < kMinInputExtent) {
    throw ValidationError("image sizes must be at least 32");
  }
  if (layouts.empty()) throw ValidationError("at least one mosaic layout is required");
}

KvFile build_dataset(const DatasetConfig& config, const fs::path& root) {
  config.validate();
  const std::vector<TextureSpec> bank = texture_bank(config.class_offset + config.num_classes);
  KvFile m;
  m.set("format", "fcnt-dataset");
  m.set("version", 1);
  m.set("seed", config.seed);
  m.set("num_classes", config.num_classes);
  m.set("class_offset", config.class_offset);
  m.set("train_per_class", config.train_per_class);
  m.set("test_mosaics", config.test_mosaics);
  m.set("min_regions", config.min_regions);
  m.set("max_regions", config.max_regions);
  m.set("train_size", config.train_size);
  m.set("test_size", config.test_size);
  std::string layouts;
  for (std::size_t i = 0; i < config.layouts.size(); ++i) layouts += (i ? "," : "") + layout_name(config.layouts[i]);
  m.set("layouts", layouts);
  m.set("allow_nonpaper", config.allow_nonpaper);
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    const TextureSpec& t = bank[config.class_offset + c];
    m.add("class_name", "c" + std::to_string(c) + ":" + family_name(t.family) + "@" + KvFile::to_string(t.frequency));
  }

  for (std::size_t c = 0; c < config.num_classes; ++c) {
    for (std::size_t i = 0; i < config.train_per_class; ++i) {
      const std::uint64_t seed = derive_seed(config.seed, 1, c * config.train_per_class + i);
      const std::string rel = "train/c" + std::to_string(c) + "_" + std::to_string(i) + ".pgm";
      const Tensor img = gen_texture(texture_instance(bank[config.class_offset + c], seed), config.train_size,
                                     config.train_size);
      write_image(root / rel, tensor_to_image(img));
      m.add("train", rel + "|" + std::to_string(c) + "|" + std::to_string(seed) + "|" + file_crc32(root / rel));
    }
  }

  Rng pick(derive_seed(config.seed, 2, 0xffffffffULL));
  char name[32];
  for (std::size_t t = 0; t < config.test_mosaics; ++t) {
    MosaicSpec spec;
    spec.height = spec.width = config.test_size;
    spec.allow_nonpaper = config.allow_nonpaper;
    spec.seed = derive_seed(config.seed, 2, t);
    const std::size_t regions = config.min_regions + static_cast<std::size_t>(pick() % (config.max_regions - config.min_regions + 1));
    spec.layout = config.layouts[static_cast<std::size_t>(pick() % config.layouts.size())];
    std::vector<std::size_t> all(config.num_classes);
    for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
    for (std::size_t i = 0; i < regions; ++i) {
      std::swap(all[i], all[i + static_cast<std::size_t>(pick() % (all.size() - i))]);
      spec.classes.push_back(config.class_offset + all[i]);
      spec.labels.push_back(static_cast<Label>(all[i]));
    }
    const Mosaic mo = compose_mosaic(spec, bank);
    std::snprintf(name, sizeof name, "m%02zu.pgm", t);
    const std::string img_rel = std::string("test/") + name, gt_rel = std::string("gt/") + name;
    write_image(root / img_rel, tensor_to_image(mo.image));
    write_label_image(root / gt_rel, mo.gt);
    std::vector<std::size_t> labels;
    for (Label l : spec.labels) labels.push_back(static_cast<std::size_t>(l));
    m.add("test", img_rel + "|" + gt_rel + "|" + std::to_string(regions) + "|" + layout_name(spec.layout) + "|" +
                      join_classes(labels) + "|" + std::to_string(spec.seed) + "|" + file_crc32(root / img_rel) + "|" +
                      file_crc32(root / gt_rel));
  }
  m.save(root / kManifestName);
  return m;
}

DatasetConfig config_from_manifest(const KvFile& m) {
  if (m.get_or("format", "") != "fcnt-dataset") throw ValidationError("not a dataset manifest");
  DatasetConfig c;
  c.seed = std::stoull(m.get("seed"));
  c.num_classes = to_size(m.get("num_classes"));
  c.class_offset = to_size(m.get_or("class_offset", "0"));
  c.train_per_class = to_size(m.get("train_per_class"));
  c.test_mosaics = to_size(m.get("test_mosaics"));
  c.min_regions = to_size(m.get("min_regions"));
  c.max_regions = to_size(m.get("max_regions"));
  c.train_size = to_size(m.get("train_size"));
  c.test_size = to_size(m.get("test_size"));
  c.layouts.clear();
  for (const std::string& l : split(m.get("layouts"), ',')) c.layouts.push_back(parse_layout(l));
  c.allow_nonpaper = m.get_or("allow_nonpaper", "false") == "true";
  return c;
}

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest = root / kManifestName;
  if (!fs::exists(manifest)) throw IoError("no dataset manifest at " + manifest.string());
  const KvFile m = KvFile::load(manifest);
  Dataset d;
  d.root = root;
  if (m.get_or("source", "") == "ingest") {
    d.config.num_classes = to_size(m.get("num_classes"));
    d.config.test_mosaics = 0;
  } else {
    d.config = config_from_manifest(m);
  }
  d.class_names = m.get_all("class_name");
  for (const std::string& line : m.get_all("train")) {
    const auto f = split(line, '|');
    if (f.size() < 4) throw ValidationError("malformed train entry '" + line + "'");
    d.train.push_back({f[0], static_cast<Label>(std::stol(f[1])), std::stoull(f[2])});
  }
  for (const std::string& line : m.get_all("test")) {
    const auto f = split(line, '|');
    if (f.size() < 8) throw ValidationError("malformed test entry '" + line + "'");
    d.test.push_back({f[0], f[1], to_size(f[2]), std::stoull(f[5])});
  }
  return d;
}

std::vector<std::string> verify_dataset(const fs::path& root) {
  const KvFile m = KvFile::load(root / kManifestName);
  std::vector<std::string> bad;
  auto check = [&](const std::string& rel, const std::string& crc) {
    if (!fs::exists(root / rel) || file_crc32(root / rel) != crc) bad.push_back(rel);
  };
  for (const std::string& line : m.get_all("train")) {
    const auto f = split(line, '|');
    check(f.at(0), f.at(3));
  }
  for (const std::string& line : m.get_all("test")) {
    const auto f = split(line, '|');
    check(f.at(0), f.at(6));
    check(f.at(1), f.at(7));
  }
  return bad;
}

std::vector<TrainSample> load_train_samples(const Dataset& dataset, std::size_t channels) {
  std::vector<TrainSample> out;
  for (const TrainEntry& e : dataset.train) {
    out.push_back(TrainSample::uniform(image_to_tensor(read_image(dataset.root / e.path), channels), e.label));
  }
  return out;
}

IngestResult ingest_real_dataset(const fs::path& source, const fs::path& root, const IngestOptions& options) {
  IngestResult r;
  r.manifest.set("format", "fcnt-dataset");
  r.manifest.set("version", 1);
  r.manifest.set("source", "ingest");
  std::vector<fs::path> dirs;
  if (fs::is_directory(source)) {
    for (const auto& e : fs::directory_iterator(source)) {
      if (e.is_directory()) dirs.push_back(e.path());
    }
  } else {
    r.warnings.push_back("source " + source.string() + " is not a directory");
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) r.warnings.push_back("no class directories found under " + source.string());
  r.manifest.set("num_classes", dirs.size());
  r.manifest.set("center_crop", options.center_crop);
  for (std::size_t c = 0; c < dirs.size(); ++c) {
    r.manifest.add("class_name", dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dirs[c])) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t i = 0;
    for (const fs::path& f : files) {
      Tensor img;
      try {
        img = image_to_tensor(read_image(f), 1);
      } catch (const Error& e) {
        r.warnings.push_back("skipped " + f.string() + ": " + e.what());
        continue;
      }
      if (options.center_crop > 0) {
        const Shape& s = img.shape();
        const std::size_t ch = std::min(options.center_crop, s.h), cw = std::min(options.center_crop, s.w);
        img = crop(img, (s.h - ch) / 2, (s.w - cw) / 2, ch, cw);
      }
      const std::string rel = "train/c" + std::to_string(c) + "_" + std::to_string(i++) + ".pgm";
      write_image(root / rel, tensor_to_image(img));
      r.manifest.add("train", rel + "|" + std::to_string(c) + "|0|" + file_crc32(root / rel));
      ++r.images;
    }
  }
  r.classes = dirs.size();
  r.manifest.set("train_per_class", 0);
  r.manifest.set("test_mosaics", 0);
  for (const std::string& w : r.warnings) r.manifest.add("warning", w);
  r.manifest.save(root / kManifestName);
  return r;
}

}  // namespace fcnt
