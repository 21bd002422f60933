#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "remogen/motion.hpp"

namespace remogen {

struct GridSpec {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Ones();
  std::array<std::uint32_t, 3> dims{1, 1, 1};

  Vec3 voxel_size() const;
  std::size_t cell_count() const { return std::size_t{dims[0]} * dims[1] * dims[2]; }
  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return (ix * dims[1] + iy) * dims[2] + iz;
  }
  void validate() const;

  // dims = round((max - min) / resolution) per axis.
  static GridSpec from_resolution(const Vec3& min_corner, const Vec3& max_corner, double resolution);
  // Room-scale bounds x∈[-3,3], y∈[-4,4], z∈[0,2] at 0.02 m.
  static GridSpec lingo();
};

enum class Occupancy { kFree, kOccupied, kOutOfBounds };

// Bit-packed occupancy, cell index (ix*ny + iy)*nz + iz, LSB-first within a byte.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(GridSpec spec);
  VoxelGrid(GridSpec spec, std::vector<std::uint8_t> packed);

  const GridSpec& spec() const { return spec_; }
  const std::vector<std::uint8_t>& packed() const { return bits_; }

  bool cell(std::size_t index) const { return (bits_[index >> 3] >> (index & 7)) & 1u; }
  void set_cell(std::size_t index, bool occupied);
  std::size_t occupied_count() const;

  // Floor-index lookup; each cell owns [lo, hi) per axis.
  std::optional<std::array<std::size_t, 3>> locate(const Vec3& p) const;

 private:
  GridSpec spec_;
  std::vector<std::uint8_t> bits_;
};

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> cells);
std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t count);

// Ego box bounds in the ego frame.
struct EgoBox {
  static constexpr std::size_t kCells = 32;
  static constexpr double kMinXY = -0.6, kMaxXY = 0.6;
  static constexpr double kMinZ = 0.1, kMaxZ = 1.2;
  static Vec3 cell_center(std::size_t i, std::size_t j, std::size_t k);
};

struct EgoVoxelBlock {
  std::vector<std::uint8_t> occupancy;  // 32³ entries of 0/1, same index order as VoxelGrid
  RigidTransform frame;

  static std::size_t index(std::size_t i, std::size_t j, std::size_t k) {
    return (i * EgoBox::kCells + j) * EgoBox::kCells + k;
  }
  bool at(std::size_t i, std::size_t j, std::size_t k) const { return occupancy[index(i, j, k)] != 0; }
  static EgoVoxelBlock empty();
};

VoxelGrid voxelize_points(std::span<const Vec3> points, const GridSpec& spec);
Occupancy query_occupancy(const VoxelGrid& grid, const Vec3& point);

// Samples the world grid at each ego cell center mapped through ego_to_world.
// With axis_aligned set, only the translation of ego_to_world is used.
EgoVoxelBlock extract_ego_voxels(const VoxelGrid& grid, const RigidTransform& ego_to_world,
                                 bool axis_aligned = false);

// Shifts points so their XY center sits at the origin and the lowest Z is 0.
std::vector<Vec3> normalize_scene_points(std::span<const Vec3> points);

}  // namespace remogen
