#pragma once

#include "celis/volume.hpp"

namespace celis {

struct WatershedParams {
  double t_high = 0.99;  // affinities >= t_high are forced merges
  double t_low = 0.5;    // affinities below min(t_low, t_high) are removed
  double t_edge = 0.1;   // size-based merging threshold
  std::uint64_t t_size = 1;  // minimum surviving segment size in voxels

  void validate() const;
};

/// Affinity-graph watershed oversegmentation.
///
/// Pipeline: (1) clamp edges (>= t_high -> 1, < min(t_low, t_high) -> 0 and
/// removed); (2) steepest-ascent basin assignment with deterministic plateau
/// resolution (lowest linear voxel index wins); voxels with no surviving
/// incident edge are background; (3) basin graph weighted by maximum
/// connecting affinity; (4) basins smaller than t_size merge along their
/// maximum-weight incident edge while that weight >= t_edge, processed in
/// descending edge weight to a fixed point; (5) remaining basins below t_size
/// become background.  Output labels are compacted to 1..n in order of each
/// segment's smallest voxel index.
LabelVolume oversegment(const AffinityVolume& aff, const WatershedParams& params);

/// Fraction of foreground voxels whose supervoxel's majority ground-truth
/// segment matches their own ground-truth segment.
double oversegmentation_purity(const LabelVolume& sv, const LabelVolume& truth);

}  // namespace celis
