#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "remogen/motion.hpp"
#include "remogen/scene.hpp"

namespace remogen {

struct ArchiveTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;

  std::size_t element_count() const;
};

// "RMGW1\n", u64 manifest length, JSON manifest, blob. Offsets in the
// manifest are relative to the start of the blob.
struct WeightArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ArchiveTensor> tensors;

  const ArchiveTensor* find(std::string_view name) const;
  void add(std::string name, const Tensor2& t);
  Tensor2 tensor2(std::string_view name) const;  // throws FormatError if missing
};

std::vector<std::uint8_t> encode_archive(const WeightArchive& a);
WeightArchive decode_archive(std::span<const std::uint8_t> bytes);
void save_archive(const WeightArchive& a, const std::filesystem::path& path);
WeightArchive load_archive(const std::filesystem::path& path);

// "RMGM1", u32 version, f32 fps, u32 J, u32 D, u32 T, u32 id length, id bytes, T×D f32.
struct MotionFile {
  MotionSegment motion;
  FeatureLayout layout;
};
inline constexpr std::uint32_t kMotionFileVersion = 1;

std::vector<std::uint8_t> encode_motion(const MotionFile& m);
MotionFile decode_motion(std::span<const std::uint8_t> bytes);
void save_motion(const MotionFile& m, const std::filesystem::path& path);
MotionFile load_motion(const std::filesystem::path& path);

// "RMGV1", 6×f64 bounds (min xyz, max xyz), 3×u32 dims, packed occupancy.
std::vector<std::uint8_t> encode_voxels(const VoxelGrid& g);
VoxelGrid decode_voxels(std::span<const std::uint8_t> bytes);
void save_voxels(const VoxelGrid& g, const std::filesystem::path& path);
VoxelGrid load_voxels(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace remogen
