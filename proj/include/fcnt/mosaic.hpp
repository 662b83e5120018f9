#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fcnt/kv_file.hpp"
#include "fcnt/label_map.hpp"
#include "fcnt/tensor.hpp"
#include "fcnt/trainer.hpp"

namespace fcnt {

enum class TextureFamily { grating, checkerboard, band_noise, blob_field, stripe_noise };

std::string family_name(TextureFamily family);
TextureFamily parse_family(const std::string& name);

/// Parameters of one texture class. `frequency` is in cycles per pixel and
/// sets the dominant scale of every family; `orientation` is in radians.
struct TextureSpec {
  TextureFamily family = TextureFamily::grating;
  double frequency = 0.1;
  double orientation = 0.0;
  double contrast = 0.8;
  double noise_sigma = 0.15;
  std::size_t class_id = 0;
  std::uint64_t seed = 0;
};

/// Deterministic gray image in [0, 1] with mean 0.5 +- 0.02. Phase, offsets
/// and a small orientation jitter come from `spec.seed`.
Tensor gen_texture(const TextureSpec& spec, std::size_t height, std::size_t width);

/// Class catalogue: the first ten entries are hand-picked to be mutually
/// distinct; later ones cycle families with shifted scale and orientation.
std::vector<TextureSpec> texture_bank(std::size_t classes);
TextureSpec texture_instance(const TextureSpec& cls, std::uint64_t seed);

std::uint64_t splitmix64(std::uint64_t& state);
/// Seed of item `index` in stream `stream` of a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

enum class MosaicLayout { vertical, horizontal, voronoi };
std::string layout_name(MosaicLayout layout);
MosaicLayout parse_layout(const std::string& name);

struct MosaicSpec {
  std::size_t height = 128;
  std::size_t width = 128;
  MosaicLayout layout = MosaicLayout::voronoi;
  /// Bank indices, one per region, all distinct; 2..5 entries.
  std::vector<std::size_t> classes;
  /// Label written to the ground truth for each region; defaults to `classes`.
  std::vector<Label> labels;
  std::uint64_t seed = 0;
  bool allow_nonpaper = false;
};

struct Mosaic {
  Tensor image;
  LabelMap gt;
};

/// Region partition only, as region indices 0..k-1.
LabelMap mosaic_partition(const MosaicSpec& spec);
Mosaic compose_mosaic(const MosaicSpec& spec, const std::vector<TextureSpec>& bank);

inline constexpr std::size_t kMinRegions = 2;
inline constexpr std::size_t kMaxRegions = 5;

struct DatasetConfig {
  std::size_t num_classes = 5;
  /// Index of the first bank class used; dataset labels are 0..num_classes-1.
  std::size_t class_offset = 0;
  std::size_t train_per_class = 8;
  std::size_t test_mosaics = 20;
  std::size_t min_regions = 2;
  std::size_t max_regions = 5;
  std::size_t train_size = 128;
  std::size_t test_size = 128;
  std::vector<MosaicLayout> layouts{MosaicLayout::vertical, MosaicLayout::horizontal, MosaicLayout::voronoi};
  std::uint64_t seed = 1;
  bool allow_nonpaper = false;

  void validate() const;
};

struct TrainEntry {
  std::string path;
  Label label = 0;
  std::uint64_t seed = 0;
};

struct TestEntry {
  std::string image;
  std::string gt;
  std::size_t regions = 0;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::filesystem::path root;
  DatasetConfig config;
  std::vector<std::string> class_names;
  std::vector<TrainEntry> train;
  std::vector<TestEntry> test;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes train/c<class>_<i>.pgm, test/m<NN>.pgm, gt/m<NN>.pgm and a
/// key=value manifest with seeds and CRC-32 checksums under `root`.
KvFile build_dataset(const DatasetConfig& config, const std::filesystem::path& root);
DatasetConfig config_from_manifest(const KvFile& manifest);
Dataset load_dataset(const std::filesystem::path& root);
/// Files whose checksum differs from the manifest (empty when intact).
std::vector<std::string> verify_dataset(const std::filesystem::path& root);

std::vector<TrainSample> load_train_samples(const Dataset& dataset, std::size_t channels = 1);

struct IngestOptions {
  /// Center-crop side; 0 keeps the full image.
  std::size_t center_crop = 288;
};

struct IngestResult {
  KvFile manifest;
  std::vector<std::string> warnings;
  std::size_t classes = 0;
  std::size_t images = 0;
};

/// One subdirectory per class under `source`; images are converted to gray
/// PGM under `root` with a dataset manifest. Unreadable files are listed in
/// the warnings and skipped.
IngestResult ingest_real_dataset(const std::filesystem::path& source, const std::filesystem::path& root,
                                 const IngestOptions& options = {});

}  // namespace fcnt
