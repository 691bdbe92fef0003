#pragma once

#include <string>
#include <vector>

#include "celis/volume.hpp"

namespace celis {

/// Dense multi-channel float field over a volume, channel-fastest per voxel.
/// Used for file-backed image features.
struct FloatField {
  VolumeShape shape;
  int channels = 0;
  std::vector<float> data;

  float at(int c, Vec3i p) const { return data[std::size_t(channels) * shape.index(p) + c]; }
  float& at(int c, Vec3i p) { return data[std::size_t(channels) * shape.index(p) + c]; }
};

// Raw little-endian arrays in x-fastest order with a JSON sidecar at
// <path>.json describing {shape, dtype, channels, voxel_size}.

void write_labels(const std::string& path, const LabelVolume& v);
LabelVolume read_labels(const std::string& path);

void write_affinities(const std::string& path, const AffinityVolume& v);
AffinityVolume read_affinities(const std::string& path);

void write_float_field(const std::string& path, const FloatField& f);
FloatField read_float_field(const std::string& path);

}  // namespace celis
