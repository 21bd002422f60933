#include "remogen/scene.hpp"

#include <bit>
#include <cmath>
#include <optional>

namespace remogen {

Vec3 GridSpec::voxel_size() const {
  return {(max_corner.x() - min_corner.x()) / dims[0], (max_corner.y() - min_corner.y()) / dims[1],
          (max_corner.z() - min_corner.z()) / dims[2]};
}

void GridSpec::validate() const {
  for (int k = 0; k < 3; ++k) {
    if (!(max_corner[k] > min_corner[k])) throw ConfigError("grid spec: max corner must exceed min corner");
    if (dims[k] == 0) throw ConfigError("grid spec: dims must be >= 1");
  }
}

GridSpec GridSpec::from_resolution(const Vec3& min_corner, const Vec3& max_corner, double resolution) {
  if (!(resolution > 0.0)) throw ConfigError("grid spec: resolution must be positive");
  GridSpec s{min_corner, max_corner, {}};
  for (int k = 0; k < 3; ++k) {
    s.dims[k] = static_cast<std::uint32_t>(std::llround((max_corner[k] - min_corner[k]) / resolution));
  }
  s.validate();
  return s;
}

GridSpec GridSpec::lingo() { return from_resolution(Vec3(-3.0, -4.0, 0.0), Vec3(3.0, 4.0, 2.0), 0.02); }

VoxelGrid::VoxelGrid(GridSpec spec) : spec_(spec) {
  spec_.validate();
  bits_.assign((spec_.cell_count() + 7) / 8, 0);
}

VoxelGrid::VoxelGrid(GridSpec spec, std::vector<std::uint8_t> packed) : spec_(spec), bits_(std::move(packed)) {
  spec_.validate();
  const std::size_t n = spec_.cell_count();
  if (bits_.size() != (n + 7) / 8) throw FormatError("voxel grid: packed size does not match dims");
  if (n % 8 != 0 && (bits_.back() >> (n % 8)) != 0) throw FormatError("voxel grid: nonzero padding bits");
}

void VoxelGrid::set_cell(std::size_t index, bool occupied) {
  const auto mask = static_cast<std::uint8_t>(1u << (index & 7));
  if (occupied) {
    bits_[index >> 3] |= mask;
  } else {
    bits_[index >> 3] &= static_cast<std::uint8_t>(~mask);
  }
}

std::size_t VoxelGrid::occupied_count() const {
  std::size_t n = 0;
  for (auto b : bits_) n += static_cast<std::size_t>(std::popcount(b));
  return n;
}

std::optional<std::array<std::size_t, 3>> VoxelGrid::locate(const Vec3& p) const {
  std::array<std::size_t, 3> idx{};
  for (int k = 0; k < 3; ++k) {
    const double u = (p[k] - spec_.min_corner[k]) * spec_.dims[k] / (spec_.max_corner[k] - spec_.min_corner[k]);
    if (!(u >= 0.0)) return std::nullopt;  // also rejects NaN
    const double f = std::floor(u);
    if (f >= spec_.dims[k]) return std::nullopt;
    idx[k] = static_cast<std::size_t>(f);
  }
  return idx;
}

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> cells) {
  std::vector<std::uint8_t> out((cells.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i]) out[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits(std::span<const std::uint8_t> packed, std::size_t count) {
  if (packed.size() != (count + 7) / 8) throw FormatError("unpack_bits: size mismatch");
  std::vector<std::uint8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = (packed[i >> 3] >> (i & 7)) & 1u;
  return out;
}

Vec3 EgoBox::cell_center(std::size_t i, std::size_t j, std::size_t k) {
  const double sxy = (kMaxXY - kMinXY) / kCells, sz = (kMaxZ - kMinZ) / kCells;
  return {kMinXY + (i + 0.5) * sxy, kMinXY + (j + 0.5) * sxy, kMinZ + (k + 0.5) * sz};
}

EgoVoxelBlock EgoVoxelBlock::empty() {
  return {std::vector<std::uint8_t>(EgoBox::kCells * EgoBox::kCells * EgoBox::kCells, 0), RigidTransform{}};
}

VoxelGrid voxelize_points(std::span<const Vec3> points, const GridSpec& spec) {
  VoxelGrid grid(spec);
  for (const Vec3& p : points) {
    if (auto idx = grid.locate(p)) grid.set_cell(spec.index((*idx)[0], (*idx)[1], (*idx)[2]), true);
  }
  return grid;
}

Occupancy query_occupancy(const VoxelGrid& grid, const Vec3& point) {
  const auto idx = grid.locate(point);
  if (!idx) return Occupancy::kOutOfBounds;
  return grid.cell(grid.spec().index((*idx)[0], (*idx)[1], (*idx)[2])) ? Occupancy::kOccupied : Occupancy::kFree;
}

EgoVoxelBlock extract_ego_voxels(const VoxelGrid& grid, const RigidTransform& ego_to_world, bool axis_aligned) {
  ego_to_world.validate();
  EgoVoxelBlock block = EgoVoxelBlock::empty();
  block.frame = ego_to_world;
  const Mat3 rot = axis_aligned ? Mat3::Identity() : ego_to_world.rotation;
  constexpr std::size_t n = EgoBox::kCells;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        const Vec3 world = rot * EgoBox::cell_center(i, j, k) + ego_to_world.translation;
        block.occupancy[EgoVoxelBlock::index(i, j, k)] = query_occupancy(grid, world) == Occupancy::kOccupied;
      }
  return block;
}

std::vector<Vec3> normalize_scene_points(std::span<const Vec3> points) {
  if (points.empty()) return {};
  Vec3 lo = points.front(), hi = points.front();
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 shift(-(lo.x() + hi.x()) / 2.0, -(lo.y() + hi.y()) / 2.0, -lo.z());
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(p + shift);
  return out;
}

}  // namespace remogen
