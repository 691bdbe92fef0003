#pragma once

#include <cstdint>
#include <vector>

#include "celis/geometry.hpp"

namespace celis {

struct VolumeShape {
  int nx = 0, ny = 0, nz = 0;

  std::size_t voxels() const { return std::size_t(nx) * ny * nz; }
  bool inside(Vec3i p) const {
    return p.x >= 0 && p.x < nx && p.y >= 0 && p.y < ny && p.z >= 0 && p.z < nz;
  }
  /// Linear index in x-fastest order.
  std::size_t index(Vec3i p) const { return std::size_t(p.x) + std::size_t(nx) * (p.y + std::size_t(ny) * p.z); }
  Vec3i position(std::size_t i) const {
    int x = int(i % nx);
    int y = int((i / nx) % ny);
    int z = int(i / (std::size_t(nx) * ny));
    return {x, y, z};
  }
  Box3i bounds() const { return {{0, 0, 0}, {nx, ny, nz}}; }

  friend bool operator==(const VolumeShape& a, const VolumeShape& b) {
    return a.nx == b.nx && a.ny == b.ny && a.nz == b.nz;
  }
};

/// Dense 3-D grid of integer labels in x-fastest order.  Label 0 is reserved
/// for background; positive labels denote supervoxels or segments.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(VolumeShape shape, std::uint32_t fill = 0);

  const VolumeShape& shape() const { return shape_; }
  std::uint32_t at(Vec3i p) const { return labels_[shape_.index(p)]; }
  std::uint32_t& at(Vec3i p) { return labels_[shape_.index(p)]; }
  std::uint32_t at(std::size_t i) const { return labels_[i]; }
  std::uint32_t& at(std::size_t i) { return labels_[i]; }

  const std::vector<std::uint32_t>& data() const { return labels_; }
  std::vector<std::uint32_t>& data() { return labels_; }

  std::uint32_t max_label() const;

  friend bool operator==(const LabelVolume& a, const LabelVolume& b) {
    return a.shape_ == b.shape_ && a.labels_ == b.labels_;
  }

 private:
  VolumeShape shape_;
  std::vector<std::uint32_t> labels_;
};

/// Per-voxel connection affinities to the adjacent voxel in +x, +y and +z.
/// Stored channel-fastest within each voxel; affinities on the far boundary
/// faces are defined but ignored (kept at 0).
class AffinityVolume {
 public:
  AffinityVolume() = default;
  AffinityVolume(VolumeShape shape, float fill = 0.f);

  const VolumeShape& shape() const { return shape_; }
  float at(int axis, Vec3i p) const { return data_[3 * shape_.index(p) + axis]; }
  float& at(int axis, Vec3i p) { return data_[3 * shape_.index(p) + axis]; }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  friend bool operator==(const AffinityVolume& a, const AffinityVolume& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  VolumeShape shape_;
  std::vector<float> data_;
};

inline constexpr int kTransformCount = 16;

/// Applies one of the 16 axis-aligned symmetries (8 dihedral symmetries of
/// the x-y plane times an optional z reflection).  Transform 0 is identity.
LabelVolume apply_transform(const LabelVolume& v, int t);

/// Affinity channels are re-anchored so the transformed volume describes the
/// same voxel-pair relations as the input.
AffinityVolume apply_transform(const AffinityVolume& v, int t);

/// Coordinate map used by both overloads; exposed for tests.
/// Returns the transformed position and output shape.
Vec3i transform_point(Vec3i p, const VolumeShape& shape, int t, VolumeShape* out_shape = nullptr);

}  // namespace celis
