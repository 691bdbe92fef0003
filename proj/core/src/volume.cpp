#include "celis/volume.hpp"

#include <algorithm>
#include <stdexcept>

namespace celis {

LabelVolume::LabelVolume(VolumeShape shape, std::uint32_t fill)
    : shape_(shape), labels_(shape.voxels(), fill) {
  if (shape.nx < 1 || shape.ny < 1 || shape.nz < 1)
    throw std::invalid_argument("volume shape components must be >= 1");
}

std::uint32_t LabelVolume::max_label() const {
  std::uint32_t m = 0;
  for (std::uint32_t v : labels_) m = std::max(m, v);
  return m;
}

AffinityVolume::AffinityVolume(VolumeShape shape, float fill)
    : shape_(shape), data_(shape.voxels() * 3, fill) {
  if (shape.nx < 1 || shape.ny < 1 || shape.nz < 1)
    throw std::invalid_argument("volume shape components must be >= 1");
}

Vec3i transform_point(Vec3i p, const VolumeShape& shape, int t, VolumeShape* out_shape) {
  if (t < 0 || t >= kTransformCount) throw std::invalid_argument("invalid transform id");
  int nx = shape.nx, ny = shape.ny;
  int x = p.x, y = p.y, z = p.z;
  if (t & 4) x = nx - 1 - x;  // mirror across the y-z plane
  int rot = t & 3;
  for (int r = 0; r < rot; ++r) {
    // 90-degree rotation in the x-y plane: (x, y) -> (ny-1-y, x)
    int x2 = ny - 1 - y;
    int y2 = x;
    x = x2;
    y = y2;
    std::swap(nx, ny);
  }
  if (t & 8) z = shape.nz - 1 - z;
  if (out_shape) *out_shape = {nx, ny, shape.nz};
  return {x, y, z};
}

LabelVolume apply_transform(const LabelVolume& v, int t) {
  VolumeShape out_shape;
  transform_point({0, 0, 0}, v.shape(), t, &out_shape);
  LabelVolume out(out_shape);
  const VolumeShape& s = v.shape();
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        Vec3i p{x, y, z};
        out.at(transform_point(p, s, t)) = v.at(p);
      }
  return out;
}

AffinityVolume apply_transform(const AffinityVolume& v, int t) {
  VolumeShape out_shape;
  transform_point({0, 0, 0}, v.shape(), t, &out_shape);
  AffinityVolume out(out_shape, 0.f);
  const VolumeShape& s = v.shape();
  const Vec3i axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        Vec3i p{x, y, z};
        Vec3i tp = transform_point(p, s, t);
        for (int a = 0; a < 3; ++a) {
          Vec3i q = p + axes[a];
          if (!s.inside(q)) continue;  // far-face values are ignored, stay 0
          Vec3i tq = transform_point(q, s, t);
          // The transformed pair differs by 1 on exactly one axis.
          Vec3i d = tq - tp;
          Vec3i anchor = tp;
          int axis;
          if (d.x != 0) axis = 0;
          else if (d.y != 0) axis = 1;
          else axis = 2;
          if (d.x < 0 || d.y < 0 || d.z < 0) anchor = tq;
          out.at(axis, anchor) = v.at(a, p);
        }
      }
  return out;
}

}  // namespace celis
