#include "celis/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

namespace celis {

void SceneSpec::validate() const {
  if (shape.nx < 1 || shape.ny < 1 || shape.nz < 1)
    throw std::invalid_argument("scene shape components must be >= 1");
  if (object_count < 1) throw std::invalid_argument("object_count must be >= 1");
  if (noise_sigma < 0.0 || noise_sigma >= 1.0)
    throw std::invalid_argument("noise_sigma must be in [0, 1)");
  if (split_rate < 0.0 || split_rate > 1.0)
    throw std::invalid_argument("split_rate must be in [0, 1]");
  if (tube_radius_min <= 0 || tube_radius_max < tube_radius_min)
    throw std::invalid_argument("bad tube radius range");
  if (blob_radius_min <= 0 || blob_radius_max < blob_radius_min)
    throw std::invalid_argument("bad blob radius range");
  if (max_place_tries < 1) throw std::invalid_argument("max_place_tries must be >= 1");
}

namespace {

// Collects the voxels of a sphere of radius r around c, clipped to the volume.
void rasterize_ball(const VolumeShape& s, Vec3i c, double r, std::vector<std::size_t>& out) {
  int ir = int(std::ceil(r));
  for (int dz = -ir; dz <= ir; ++dz)
    for (int dy = -ir; dy <= ir; ++dy)
      for (int dx = -ir; dx <= ir; ++dx) {
        if (double(dx) * dx + double(dy) * dy + double(dz) * dz > r * r) continue;
        Vec3i p{c.x + dx, c.y + dy, c.z + dz};
        if (s.inside(p)) out.push_back(s.index(p));
      }
}

std::vector<std::size_t> make_tube(const VolumeShape& s, Rng& rng, double r) {
  std::vector<std::size_t> voxels;
  Vec3i start{int(rng.below(s.nx)), int(rng.below(s.ny)), int(rng.below(s.nz))};
  double dx = rng.uniform(-1, 1), dy = rng.uniform(-1, 1), dz = rng.uniform(-1, 1);
  double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (norm < 1e-6) { dx = 1; norm = 1; }
  dx /= norm; dy /= norm; dz /= norm;
  int max_extent = std::max(s.nx, std::max(s.ny, s.nz));
  int length = 3 + int(rng.below(std::uint64_t(std::max(1, max_extent - 3))));
  double px = start.x, py = start.y, pz = start.z;
  for (int step = 0; step < length; ++step) {
    rasterize_ball(s, {int(std::lround(px)), int(std::lround(py)), int(std::lround(pz))}, r, voxels);
    // small direction jitter so tubes bend
    dx += rng.uniform(-0.2, 0.2);
    dy += rng.uniform(-0.2, 0.2);
    dz += rng.uniform(-0.2, 0.2);
    norm = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (norm < 1e-6) { dx = 1; norm = 1; }
    dx /= norm; dy /= norm; dz /= norm;
    px += dx; py += dy; pz += dz;
  }
  return voxels;
}

std::vector<std::size_t> make_blob(const VolumeShape& s, Rng& rng, double r) {
  std::vector<std::size_t> voxels;
  Vec3i c{int(rng.below(s.nx)), int(rng.below(s.ny)), int(rng.below(s.nz))};
  rasterize_ball(s, c, r, voxels);
  return voxels;
}

void dedupe(std::vector<std::size_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

SceneData generate_synthetic_scene(const SceneSpec& spec) {
  spec.validate();
  const VolumeShape& s = spec.shape;
  Rng rng(spec.seed);

  LabelVolume gt(s, 0);
  for (int obj = 1; obj <= spec.object_count; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_place_tries && !placed; ++attempt) {
      bool tube = rng.below(2) == 0;
      std::vector<std::size_t> voxels =
          tube ? make_tube(s, rng, rng.uniform(spec.tube_radius_min, spec.tube_radius_max))
               : make_blob(s, rng, rng.uniform(spec.blob_radius_min, spec.blob_radius_max));
      dedupe(voxels);
      if (voxels.empty()) continue;
      bool overlap = false;
      for (std::size_t i : voxels)
        if (gt.at(i) != 0) { overlap = true; break; }
      if (overlap) continue;
      for (std::size_t i : voxels) gt.at(i) = std::uint32_t(obj);
      placed = true;
    }
    if (!placed) throw std::runtime_error("could not place object within retry budget");
  }

  // Affinities: adjacent same-object pairs get 1 - sigma*u, everything else
  // (cross-object or next to background) gets sigma*u.
  AffinityVolume aff(s, 0.f);
  const Vec3i axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        Vec3i p{x, y, z};
        for (int a = 0; a < 3; ++a) {
          Vec3i q = p + axes[a];
          if (!s.inside(q)) continue;
          std::uint32_t lp = gt.at(p), lq = gt.at(q);
          double u = rng.unit();
          bool same_object = lp != 0 && lp == lq;
          aff.at(a, p) = float(same_object ? 1.0 - spec.noise_sigma * u : spec.noise_sigma * u);
        }
      }

  // Supervoxels: split each object into connected pieces by multi-source BFS
  // from randomly chosen seed voxels.  One seed is always present, so a split
  // rate of 0 reproduces the object.
  LabelVolume sv(s, 0);
  std::uint32_t next_label = 1;
  std::vector<std::vector<std::size_t>> object_voxels(spec.object_count + 1);
  for (std::size_t i = 0; i < s.voxels(); ++i)
    if (gt.at(i) != 0) object_voxels[gt.at(i)].push_back(i);

  std::vector<std::int64_t> owner(s.voxels(), -1);
  for (int obj = 1; obj <= spec.object_count; ++obj) {
    auto& voxels = object_voxels[obj];
    std::size_t n = voxels.size();
    std::size_t seeds = 1;
    for (std::size_t i = 0; i + 1 < n; ++i)
      if (rng.unit() < spec.split_rate) ++seeds;
    seeds = std::min(seeds, n);

    // choose distinct seed voxels via a partial shuffle
    std::vector<std::size_t> pool = voxels;
    std::deque<std::pair<std::size_t, std::uint32_t>> frontier;
    for (std::size_t i = 0; i < seeds; ++i) {
      std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      owner[pool[i]] = next_label;
      frontier.push_back({pool[i], next_label});
      ++next_label;
    }
    while (!frontier.empty()) {
      auto [idx, label] = frontier.front();
      frontier.pop_front();
      Vec3i p = s.position(idx);
      const Vec3i steps[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const Vec3i& d : steps) {
        Vec3i q = p + d;
        if (!s.inside(q)) continue;
        std::size_t qi = s.index(q);
        if (gt.at(qi) != std::uint32_t(obj) || owner[qi] >= 0) continue;
        owner[qi] = label;
        frontier.push_back({qi, std::uint32_t(label)});
      }
    }
  }
  for (std::size_t i = 0; i < s.voxels(); ++i)
    if (owner[i] >= 0) sv.at(i) = std::uint32_t(owner[i]);

  return {std::move(gt), std::move(aff), std::move(sv)};
}

}  // namespace celis
