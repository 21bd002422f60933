#include "remogen/codec.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace remogen {

namespace {

constexpr std::string_view kArchiveMagic = "RMGW1\n";
constexpr std::string_view kMotionMagic = "RMGM1";
constexpr std::string_view kVoxelMagic = "RMGV1";

class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void bytes(std::span<const std::uint8_t> s) { out_.insert(out_.end(), s.begin(), s.end()); }
  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, const char* what) : in_(in), what_(what) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError(std::string(what_) + ": truncated file");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void magic(std::string_view m) {
    if (in_.size() - pos_ < m.size() || std::memcmp(in_.data() + pos_, m.data(), m.size()) != 0) {
      throw FormatError(std::string(what_) + ": bad magic");
    }
    pos_ += m.size();
  }
  template <class U>
  U uint() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(s[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const char* what_;
};

}  // namespace

std::size_t ArchiveTensor::element_count() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

const ArchiveTensor* WeightArchive::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void WeightArchive::add(std::string name, const Tensor2& t) {
  if (find(name)) throw ConfigError("archive: duplicate tensor name " + name);
  tensors.push_back({std::move(name), {t.rows(), t.cols()}, t.storage()});
}

Tensor2 WeightArchive::tensor2(std::string_view name) const {
  const ArchiveTensor* t = find(name);
  if (!t) throw FormatError("archive: missing tensor " + std::string(name));
  if (t->shape.size() != 2) throw FormatError("archive: tensor " + t->name + " is not 2-D");
  return Tensor2(t->shape[0], t->shape[1], t->values);
}

std::vector<std::uint8_t> encode_archive(const WeightArchive& a) {
  nlohmann::json manifest;
  manifest["meta"] = a.meta;
  manifest["tensors"] = nlohmann::json::array();
  std::set<std::string> names;
  std::uint64_t offset = 0;
  for (const auto& t : a.tensors) {
    if (!names.insert(t.name).second) throw ConfigError("archive: duplicate tensor name " + t.name);
    if (t.element_count() != t.values.size()) throw DimensionError("archive: tensor " + t.name + " shape/data mismatch");
    const std::uint64_t len = t.values.size() * 4;
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", t.shape}, {"dtype", "f32-le"}, {"offset", offset}, {"byte_length", len}});
    offset += len;
  }
  const std::string text = manifest.dump();
  Writer w;
  w.bytes(kArchiveMagic);
  w.uint<std::uint64_t>(text.size());
  w.bytes(text);
  for (const auto& t : a.tensors)
    for (float v : t.values) w.f32(v);
  return w.take();
}

WeightArchive decode_archive(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "weight archive");
  r.magic(kArchiveMagic);
  const auto mlen = r.uint<std::uint64_t>();
  if (mlen > r.remaining()) throw CorruptArchiveError("weight archive: manifest length exceeds file");
  const auto mbytes = r.take(mlen);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mbytes.begin(), mbytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weight archive: manifest is not JSON: ") + e.what());
  }
  const auto blob = r.take(r.remaining());
  WeightArchive a;
  try {
    a.meta = manifest.at("meta");
    std::set<std::string> names;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const auto& e : manifest.at("tensors")) {
      ArchiveTensor t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<std::vector<std::size_t>>();
      if (e.at("dtype").get<std::string>() != "f32-le") throw FormatError("weight archive: unsupported dtype");
      const auto off = e.at("offset").get<std::uint64_t>();
      const auto len = e.at("byte_length").get<std::uint64_t>();
      if (!names.insert(t.name).second) throw CorruptArchiveError("weight archive: duplicate tensor " + t.name);
      if (t.element_count() * 4 != len) throw CorruptArchiveError("weight archive: byte length of " + t.name);
      if (off > blob.size() || len > blob.size() - off) {
        throw CorruptArchiveError("weight archive: tensor " + t.name + " lies outside the blob");
      }
      ranges.emplace_back(off, len);
      t.values.resize(len / 4);
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        std::uint32_t u = 0;
        for (std::size_t b = 0; b < 4; ++b) u |= std::uint32_t{blob[off + 4 * i + b]} << (8 * b);
        t.values[i] = std::bit_cast<float>(u);
      }
      a.tensors.push_back(std::move(t));
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
      if (ranges[i - 1].first + ranges[i - 1].second > ranges[i].first) {
        throw CorruptArchiveError("weight archive: overlapping tensors");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weight archive: malformed manifest: ") + e.what());
  }
  return a;
}

std::vector<std::uint8_t> encode_motion(const MotionFile& m) {
  const Tensor2& f = m.motion.frames;
  if (f.cols() != m.layout.dim()) throw FormatError("motion file: frame width differs from layout");
  Writer w;
  w.bytes(kMotionMagic);
  w.uint<std::uint32_t>(kMotionFileVersion);
  w.f32(static_cast<float>(m.motion.fps));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(m.layout.joints));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(f.cols()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(f.rows()));
  const std::string id = m.layout.id();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(id.size()));
  w.bytes(id);
  for (float v : f.data()) w.f32(v);
  return w.take();
}

MotionFile decode_motion(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "motion file");
  r.magic(kMotionMagic);
  if (r.uint<std::uint32_t>() != kMotionFileVersion) throw FormatError("motion file: unsupported version");
  const float fps = r.f32();
  const auto J = r.uint<std::uint32_t>();
  const auto D = r.uint<std::uint32_t>();
  const auto T = r.uint<std::uint32_t>();
  const auto id_len = r.uint<std::uint32_t>();
  const auto id = r.take(id_len);
  MotionFile m;
  try {
    m.layout = FeatureLayout::from_id(std::string(id.begin(), id.end()));
  } catch (const Error& e) {
    throw FormatError(std::string("motion file: ") + e.what());
  }
  if (m.layout.joints != J) throw FormatError("motion file: joint count differs from layout id");
  if (m.layout.dim() != D) {
    throw FormatError("motion file: D = " + std::to_string(D) + " but layout implies " +
                      std::to_string(m.layout.dim()));
  }
  if (!(fps > 0.0f) || !std::isfinite(fps)) throw FormatError("motion file: invalid fps");
  if (r.remaining() != std::uint64_t{T} * D * 4) throw FormatError("motion file: payload size mismatch");
  m.motion.fps = fps;
  m.motion.frames = Tensor2(T, D);
  for (float& v : m.motion.frames.data()) v = r.f32();
  return m;
}

std::vector<std::uint8_t> encode_voxels(const VoxelGrid& g) {
  const GridSpec& s = g.spec();
  Writer w;
  w.bytes(kVoxelMagic);
  for (int i = 0; i < 3; ++i) w.f64(s.min_corner[i]);
  for (int i = 0; i < 3; ++i) w.f64(s.max_corner[i]);
  for (auto d : s.dims) w.uint<std::uint32_t>(d);
  w.bytes(g.packed());
  return w.take();
}

VoxelGrid decode_voxels(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "voxel file");
  r.magic(kVoxelMagic);
  GridSpec s;
  for (int i = 0; i < 3; ++i) s.min_corner[i] = r.f64();
  for (int i = 0; i < 3; ++i) s.max_corner[i] = r.f64();
  for (auto& d : s.dims) d = r.uint<std::uint32_t>();
  try {
    s.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("voxel file: ") + e.what());
  }
  if (r.remaining() != (s.cell_count() + 7) / 8) throw FormatError("voxel file: payload size mismatch");
  const auto payload = r.take(r.remaining());
  return VoxelGrid(s, std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw FormatError("short read from " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

void save_archive(const WeightArchive& a, const std::filesystem::path& path) { write_file(path, encode_archive(a)); }
WeightArchive load_archive(const std::filesystem::path& path) { return decode_archive(read_file(path)); }
void save_motion(const MotionFile& m, const std::filesystem::path& path) { write_file(path, encode_motion(m)); }
MotionFile load_motion(const std::filesystem::path& path) { return decode_motion(read_file(path)); }
void save_voxels(const VoxelGrid& g, const std::filesystem::path& path) { write_file(path, encode_voxels(g)); }
VoxelGrid load_voxels(const std::filesystem::path& path) { return decode_voxels(read_file(path)); }

}  // namespace remogen
