#pragma once

#include <cstdint>

#include "celis/volume.hpp"

namespace celis {

/// Parameters for a synthetic desk-scale scene.  The seed fully determines
/// the output.
struct SceneSpec {
  VolumeShape shape{32, 32, 32};
  int object_count = 8;
  double tube_radius_min = 2.0, tube_radius_max = 4.0;
  double blob_radius_min = 3.0, blob_radius_max = 6.0;
  double noise_sigma = 0.2;      // affinity noise level in [0, 1)
  double split_rate = 0.01;      // per-voxel chance of seeding an extra supervoxel
  std::uint64_t seed = 1;
  int max_place_tries = 200;     // placement attempts per object

  void validate() const;
};

struct SceneData {
  LabelVolume ground_truth;
  AffinityVolume affinities;
  LabelVolume supervoxels;
};

/// Generates ground truth objects (tubes and blobs on background 0), affinity
/// channels (1 - sigma*u within objects, sigma*u across boundaries and next to
/// background), and a pure oversegmentation of the ground truth: every
/// supervoxel is a 6-connected subset of exactly one ground-truth object.
SceneData generate_synthetic_scene(const SceneSpec& spec);

}  // namespace celis
