#pragma once

#include <cstdint>
#include <vector>

#include "celis/descriptor.hpp"
#include "celis/region_connectivity.hpp"
#include "celis/region_graph.hpp"
#include "celis/volume.hpp"

namespace celis {

/// Spatial index for one descriptor type: the region tiling, per-region
/// connectivity states, and a per-center cache of descriptor bits.
struct TypeIndex {
  DescriptorType dt;
  RegionTiling tiling;
  std::vector<RegionState> regions;
  std::vector<std::vector<std::uint64_t>> bits;  // per region: centers * words
  std::vector<std::size_t> centers;              // per region: center count

  TypeIndex() = default;
  TypeIndex(const DescriptorType& type, const LabelVolume& sv, const UnionFind& seg);

  /// Linear index of center x within its region's clipped center block.
  std::size_t center_index(int cell, Vec3i x) const {
    Box3i b = regions[cell].centers();
    return std::size_t(x.x - b.lo.x) +
           std::size_t(b.hi.x - b.lo.x) *
               ((x.y - b.lo.y) + std::size_t(b.hi.y - b.lo.y) * (x.z - b.lo.z));
  }
  std::uint64_t* bits_at(int cell, std::size_t center_linear) {
    return bits[cell].data() + center_linear * dt.words();
  }
  const std::uint64_t* bits_at(int cell, std::size_t center_linear) const {
    return bits[cell].data() + center_linear * dt.words();
  }

  /// Calls fn(x, linear_index) for every center of `cell` that lies in a set
  /// zone of `zmask`, in fixed (zone-major, then x-fastest) order.
  template <typename Fn>
  void for_centers_in_zones(int cell, const std::uint64_t* zmask, Fn&& fn) const {
    const RegionState& rs = regions[cell];
    int nz = rs.zone_count();
    for (int z = 0; z < nz; ++z) {
      if (!(zmask[z >> 6] >> (z & 63) & 1)) continue;
      Box3i b = rs.zone_center_box(z);
      if (b.empty()) continue;
      for (int zz = b.lo.z; zz < b.hi.z; ++zz)
        for (int yy = b.lo.y; yy < b.hi.y; ++yy)
          for (int xx = b.lo.x; xx < b.hi.x; ++xx) {
            Vec3i x{xx, yy, zz};
            fn(x, center_index(cell, x));
          }
    }
  }

  /// Number of centers in zones of `cell` NOT covered by zmask.
  std::uint64_t centers_outside_zones(int cell, const std::uint64_t* zmask) const;
};

/// Builds one TypeIndex per descriptor type with fresh bit caches.
std::vector<TypeIndex> build_type_indexes(const std::vector<DescriptorType>& types,
                                          const LabelVolume& sv, const UnionFind& seg);

}  // namespace celis
