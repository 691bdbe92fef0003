#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "celis/descriptor.hpp"
#include "celis/region_graph.hpp"
#include "celis/volume.hpp"

namespace celis {

/// Tiling of descriptor-center positions into connectivity regions.  Centers
/// are partitioned into stride^3 blocks; a region's voxel extent is its block
/// dilated by (bbox-1)/2 on every side (clipped to the volume), so every
/// descriptor bounding box with center in the block fits in the unclipped
/// extent and adjacent extents overlap by bbox-1.
struct RegionTiling {
  VolumeShape vol;
  int bbox = 1;
  int region = 1;
  int stride = 1;  // region - bbox + 1
  int halo = 0;    // (bbox - 1) / 2
  int cells_x = 0, cells_y = 0, cells_z = 0;

  int cell_count() const { return cells_x * cells_y * cells_z; }
  Vec3i cell_coord(int idx) const {
    return {idx % cells_x, (idx / cells_x) % cells_y, idx / (cells_x * cells_y)};
  }
  /// Region index owning descriptor center x (x must be inside the volume).
  int cell_of_center(Vec3i x) const {
    return (x.x / stride) + cells_x * ((x.y / stride) + cells_y * (x.z / stride));
  }
  /// Center positions of the region, clipped to the volume.
  Box3i center_block(int idx) const {
    Vec3i c = cell_coord(idx);
    Box3i b{{c.x * stride, c.y * stride, c.z * stride},
            {(c.x + 1) * stride, (c.y + 1) * stride, (c.z + 1) * stride}};
    return b.clipped(vol.bounds());
  }
  Box3i unclipped_extent(int idx) const {
    Vec3i c = cell_coord(idx);
    Box3i b{{c.x * stride, c.y * stride, c.z * stride},
            {(c.x + 1) * stride, (c.y + 1) * stride, (c.z + 1) * stride}};
    return b.dilated(halo);
  }
  Box3i extent(int idx) const { return unclipped_extent(idx).clipped(vol.bounds()); }
};

/// Validates region >= bbox and derives the stride.  Throws on region < bbox.
RegionTiling tile_regions(const VolumeShape& shape, const DescriptorType& dt);

/// Per-region local connectivity under the current segmentation.
///
/// Fragments (maximal 6-connected same-supervoxel voxel sets inside the
/// region extent) are static; merges only coarsen the component union-find
/// over them.  Each fragment carries a summed-area table of its occupancy so
/// box-intersection queries are O(1), plus a static zone-visibility bitmask.
class RegionState {
 public:
  struct Fragment {
    std::uint32_t sv = 0;
    Box3i bbox{{0, 0, 0}, {0, 0, 0}};
    std::vector<std::uint32_t> sat;  // dims (bx+1)*(by+1)*(bz+1)
    /// Number of fragment voxels inside the (global-coordinate) query box.
    std::int64_t count_in(Box3i query) const;
  };

  struct FragEdge {
    std::uint32_t f = 0, g = 0;
    std::uint32_t sv_f = 0, sv_g = 0;
    bool on = false;
  };

  /// Virtual merge of one or more segment groups on top of the current
  /// component structure; used to evaluate descriptors under hypothetical
  /// agglomeration actions without mutating state.
  struct Overlay {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> remap;  // comp root -> group rep
    std::uint32_t resolve(std::uint32_t root) const {
      for (const auto& [from, to] : remap)
        if (from == root) return to;
      return root;
    }
    bool empty() const { return remap.empty(); }
  };

  RegionState() = default;
  RegionState(const RegionTiling& tiling, int cell, int zone_edge, const LabelVolume& sv,
              const UnionFind& seg);

  const Box3i& extent() const { return extent_; }
  const Box3i& centers() const { return centers_; }
  int cell() const { return cell_; }

  std::size_t fragment_count() const { return frags_.size(); }
  const Fragment& fragment(std::uint32_t f) const { return frags_[f]; }
  /// Fragment id at a voxel, or -1 for background / outside the extent.
  std::int32_t fragment_at(Vec3i p) const;
  std::uint32_t component_of(std::uint32_t frag) const { return comp_.find(frag); }
  std::size_t component_count() const;

  bool has_segment(std::uint32_t seg) const { return segs_.count(seg) > 0; }
  bool pair_active(SegPair pair) const { return off_pairs_.count(pair) > 0; }
  /// Active segment pairs A(C), sorted.
  std::vector<SegPair> active_pairs() const;

  /// True iff both positions are foreground and locally connected.
  /// Throws std::out_of_range if either position is outside the extent.
  bool local_connected(Vec3i u, Vec3i v) const;

  /// Builds the overlay realizing the merge of each group of segment roots.
  Overlay make_overlay(const std::vector<std::vector<std::uint32_t>>& groups) const;

  /// Descriptor bits at center x under the current (or overlaid) connectivity.
  /// Bits are 0 for out-of-volume or background endpoints.  Throws if the
  /// descriptor bounding box does not fit inside the unclipped extent.
  void compute_bits(const DescriptorType& dt, Vec3i x, const Overlay* overlay,
                    std::uint64_t* out) const;

  /// Component roots owning at least one fragment intersecting the query box
  /// (deduplicated, sorted).  O(1) per fragment via the summed-area tables.
  void visible_components(Box3i query, std::vector<std::uint32_t>& roots) const;

  // Zone machinery.  Zones subdivide the descriptor-center block into a
  // regular grid of edge `zone`; masks have one bit per zone.
  int zone_count() const { return zones_x_ * zones_y_ * zones_z_; }
  int zone_words() const { return zone_words_; }
  /// Center positions of zone z, clipped to the region's center block.
  Box3i zone_center_box(int z) const;
  const std::uint64_t* component_zone_mask(std::uint32_t root) const {
    return zmask_.data() + std::size_t(root) * zone_words_;
  }

  /// Sound active-zone mask for merging the given segment groups: a zone bit
  /// is set iff two components that the merge would join are both visible
  /// from the zone.  (A segment-level AND of visibility masks misses joins
  /// bridged by components outside the descriptor box and is not sound.)
  void active_zone_mask(const std::vector<std::vector<std::uint32_t>>& groups,
                        std::uint64_t* out) const;

  /// Component roots incident to the off edges realizing `pair` (sorted).
  void incident_components(SegPair pair, std::vector<std::uint32_t>& roots) const;

  /// Segment root of a component (current segment of its supervoxel).
  std::uint32_t component_segment(std::uint32_t root, const UnionFind& seg) const {
    return seg.find(frags_[root].sv);
  }

  /// Turns on every fragment edge internal to the merged segment {a, b},
  /// unions the affected components, and re-keys bookkeeping to new_root.
  /// Returns true iff any two components were joined (the edge was active).
  bool apply_merge(std::uint32_t a, std::uint32_t b, std::uint32_t new_root);

 private:
  void joined_component_groups(const std::vector<std::vector<std::uint32_t>>& groups,
                               std::vector<std::vector<std::uint32_t>>& out) const;
  std::size_t local_index(Vec3i p) const {
    return std::size_t(p.x - extent_.lo.x) +
           std::size_t(extent_.hi.x - extent_.lo.x) *
               ((p.y - extent_.lo.y) +
                std::size_t(extent_.hi.y - extent_.lo.y) * (p.z - extent_.lo.z));
  }

  int cell_ = -1;
  VolumeShape vol_;
  Box3i extent_{{0, 0, 0}, {0, 0, 0}};
  Box3i centers_{{0, 0, 0}, {0, 0, 0}};
  Vec3i block_origin_{0, 0, 0};  // unclipped center-block origin (zone anchor)
  int halo_ = 0;
  int zone_edge_ = 1;
  int zones_x_ = 0, zones_y_ = 0, zones_z_ = 0;
  int zone_words_ = 0;

  std::vector<Fragment> frags_;
  std::vector<std::int32_t> vfrag_;  // per extent voxel, -1 = background
  std::vector<FragEdge> edges_;
  UnionFind comp_;
  std::vector<std::uint64_t> zmask_;  // per fragment root, zone_words_ words
  std::map<SegPair, std::vector<std::uint32_t>> off_pairs_;
  std::map<std::uint32_t, std::uint32_t> segs_;  // segment root -> fragment count
};

/// Spec-level wrapper: computes the descriptor at x, validating that the
/// bounding box lies within the region.
void compute_descriptor(const DescriptorType& dt, Vec3i x, const RegionState& state,
                        std::uint64_t* out);

}  // namespace celis
