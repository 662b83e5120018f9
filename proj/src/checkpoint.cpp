#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fcnt/error.hpp"
#include "fcnt/image_io.hpp"
#include "fcnt/model.hpp"

namespace fcnt {

namespace {

constexpr char kMagic[8] = {'F', 'C', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void doubles(std::span<const double> v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t limit, std::string path)
      : bytes_(bytes), limit_(limit), path_(std::move(path)) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    if (n > (limit_ - pos_) / 8) fail("array length exceeds file");
    std::vector<double> v(n);
    for (double& d : v) d = f64();
    return v;
  }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw ChecksumError(path_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > limit_) fail("truncated checkpoint");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
  std::string path_;
};

void write_params(Writer& w, const ConvParams& p) {
  const Shape& s = p.weights.shape();
  w.u64(s.n);
  w.u64(s.c);
  w.u64(s.h);
  w.u64(s.w);
  w.u64(p.stride);
  w.u64(p.padding);
  w.doubles(p.weights.values());
  w.doubles(p.bias);
}

ConvParams read_params(Reader& r) {
  Shape s;
  s.n = r.u64();
  s.c = r.u64();
  s.h = r.u64();
  s.w = r.u64();
  ConvParams p;
  p.stride = r.u64();
  p.padding = r.u64();
  std::vector<double> values = r.doubles();
  if (values.size() != s.numel()) r.fail("weight buffer does not match its shape");
  p.weights = Tensor(s, std::move(values));
  p.bias = r.doubles();
  return p;
}

}  // namespace

void save_state(const NetworkState& state, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  const NetworkSpec& s = state.spec;
  w.u64(s.num_classes);
  for (std::size_t v : s.block_channels) w.u64(v);
  for (std::size_t v : s.convs_per_block) w.u64(v);
  w.u64(s.head_channels);
  w.u64(s.input_channels);
  w.u64(s.kernel_size);
  w.u8(static_cast<std::uint8_t>(s.upsampling));
  w.u64(state.seed);
  w.u32(static_cast<std::uint32_t>(state.layers.size()));
  for (const Layer& l : state.layers) {
    w.str(l.name);
    w.u8(static_cast<std::uint8_t>(l.kind));
    write_params(w, l.params);
    write_params(w, l.velocity);
  }
  const std::uint32_t crc = crc32_bytes(w.bytes().data(), w.bytes().size());
  w.u32(crc);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("short write to " + path.string());

  std::ofstream side(path.string() + ".spec");
  side << "format=fcnt-checkpoint\nversion=" << kVersion << "\nseed=" << state.seed << "\n" << describe_spec(s)
       << "parameters=" << state.parameter_count() << "\n";
}

NetworkState load_state(const std::filesystem::path& path, std::optional<std::size_t> expected_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::string name = path.string();
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ChecksumError(name + ": not a checkpoint (bad magic or truncated)");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + static_cast<std::size_t>(i)]) << (8 * i);
  if (crc32_bytes(bytes.data(), body) != stored) throw ChecksumError(name + ": checksum mismatch");

  Reader r(bytes, body, name);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw ValidationError(name + ": unsupported checkpoint version " + std::to_string(version));
  NetworkState state;
  NetworkSpec& s = state.spec;
  s.num_classes = r.u64();
  for (std::size_t& v : s.block_channels) v = r.u64();
  for (std::size_t& v : s.convs_per_block) v = r.u64();
  s.head_channels = r.u64();
  s.input_channels = r.u64();
  s.kernel_size = r.u64();
  s.upsampling = static_cast<UpsampleMode>(r.u8());
  state.seed = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer l;
    l.name = r.str();
    l.kind = static_cast<LayerKind>(r.u8());
    l.params = read_params(r);
    l.velocity = read_params(r);
    state.layers.push_back(std::move(l));
  }
  if (r.pos() != body) r.fail("trailing bytes after layer table");

  s.validate();
  if (expected_classes && *expected_classes != s.num_classes) {
    throw ValidationError(name + ": class count mismatch: checkpoint has " + std::to_string(s.num_classes) +
                          " classes, expected " + std::to_string(*expected_classes));
  }
  const auto names = layer_names(s);
  if (names.size() != state.layers.size()) throw ValidationError(name + ": layer table does not match the network description");
  const NetworkState reference = build_fcnt(s, state.seed);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Layer& l = state.layers[i];
    const Layer& ref = reference.layers[i];
    if (l.name != names[i]) throw ValidationError(name + ": unexpected layer '" + l.name + "'");
    if (l.params.weights.shape() != ref.params.weights.shape() || l.params.bias.size() != ref.params.bias.size() ||
        l.velocity.weights.shape() != ref.params.weights.shape()) {
      throw ValidationError(name + ": layer '" + l.name + "' has inconsistent shapes");
    }
  }
  return state;
}

}  // namespace fcnt
