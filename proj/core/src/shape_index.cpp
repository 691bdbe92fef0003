#include "celis/shape_index.hpp"

namespace celis {

TypeIndex::TypeIndex(const DescriptorType& type, const LabelVolume& sv, const UnionFind& seg) {
  dt = type;
  tiling = tile_regions(sv.shape(), dt);
  int ncells = tiling.cell_count();
  regions.reserve(ncells);
  bits.resize(ncells);
  centers.resize(ncells);
  for (int cell = 0; cell < ncells; ++cell) {
    regions.emplace_back(tiling, cell, dt.zone, sv, seg);
    const RegionState& rs = regions.back();
    Box3i b = rs.centers();
    std::size_t n = std::size_t(b.volume());
    centers[cell] = n;
    bits[cell].assign(n * dt.words(), 0);
    for (int z = b.lo.z; z < b.hi.z; ++z)
      for (int y = b.lo.y; y < b.hi.y; ++y)
        for (int x = b.lo.x; x < b.hi.x; ++x) {
          Vec3i p{x, y, z};
          rs.compute_bits(dt, p, nullptr, bits_at(cell, center_index(cell, p)));
        }
  }
}

std::uint64_t TypeIndex::centers_outside_zones(int cell, const std::uint64_t* zmask) const {
  const RegionState& rs = regions[cell];
  std::uint64_t n = 0;
  for (int z = 0; z < rs.zone_count(); ++z) {
    if (zmask[z >> 6] >> (z & 63) & 1) continue;
    n += std::uint64_t(rs.zone_center_box(z).volume());
  }
  return n;
}

std::vector<TypeIndex> build_type_indexes(const std::vector<DescriptorType>& types,
                                          const LabelVolume& sv, const UnionFind& seg) {
  std::vector<TypeIndex> out;
  out.reserve(types.size());
  for (const DescriptorType& dt : types) out.emplace_back(dt, sv, seg);
  return out;
}

}  // namespace celis
