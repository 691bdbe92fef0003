#include "celis/region_connectivity.hpp"

#include <algorithm>
#include <stdexcept>

namespace celis {

RegionTiling tile_regions(const VolumeShape& shape, const DescriptorType& dt) {
  if (dt.region < dt.bbox) throw std::invalid_argument("region edge must be >= bbox edge");
  RegionTiling t;
  t.vol = shape;
  t.bbox = dt.bbox;
  t.region = dt.region;
  t.stride = dt.region - dt.bbox + 1;
  t.halo = (dt.bbox - 1) / 2;
  t.cells_x = (shape.nx + t.stride - 1) / t.stride;
  t.cells_y = (shape.ny + t.stride - 1) / t.stride;
  t.cells_z = (shape.nz + t.stride - 1) / t.stride;
  return t;
}

std::int64_t RegionState::Fragment::count_in(Box3i query) const {
  Box3i q = query.clipped(bbox);
  if (q.empty()) return 0;
  int bx = bbox.hi.x - bbox.lo.x, by = bbox.hi.y - bbox.lo.y;
  auto at = [&](int x, int y, int z) -> std::int64_t {
    return sat[std::size_t(x) + std::size_t(bx + 1) * (y + std::size_t(by + 1) * z)];
  };
  int x0 = q.lo.x - bbox.lo.x, x1 = q.hi.x - bbox.lo.x;
  int y0 = q.lo.y - bbox.lo.y, y1 = q.hi.y - bbox.lo.y;
  int z0 = q.lo.z - bbox.lo.z, z1 = q.hi.z - bbox.lo.z;
  return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) +
         at(x0, y1, z0) + at(x1, y0, z0) - at(x0, y0, z0);
}

RegionState::RegionState(const RegionTiling& tiling, int cell, int zone_edge,
                         const LabelVolume& sv, const UnionFind& seg) {
  if (zone_edge < 1) throw std::invalid_argument("zone edge must be >= 1");
  cell_ = cell;
  vol_ = tiling.vol;
  extent_ = tiling.extent(cell);
  centers_ = tiling.center_block(cell);
  Vec3i cc = tiling.cell_coord(cell);
  block_origin_ = {cc.x * tiling.stride, cc.y * tiling.stride, cc.z * tiling.stride};
  halo_ = tiling.halo;
  zone_edge_ = zone_edge;
  zones_x_ = zones_y_ = zones_z_ = (tiling.stride + zone_edge - 1) / zone_edge;
  zone_words_ = (zone_count() + 63) / 64;

  // Fragments: flood fill of same-supervoxel voxels within the extent.
  std::size_t nvox = std::size_t(extent_.volume());
  vfrag_.assign(nvox, -1);
  std::vector<std::size_t> stack;
  const Vec3i steps[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int z = extent_.lo.z; z < extent_.hi.z; ++z)
    for (int y = extent_.lo.y; y < extent_.hi.y; ++y)
      for (int x = extent_.lo.x; x < extent_.hi.x; ++x) {
        Vec3i p{x, y, z};
        std::size_t li = local_index(p);
        if (vfrag_[li] >= 0) continue;
        std::uint32_t label = sv.at(p);
        if (label == 0) continue;
        std::int32_t fid = std::int32_t(frags_.size());
        Fragment frag;
        frag.sv = label;
        frag.bbox = {p, p + Vec3i{1, 1, 1}};
        std::vector<Vec3i> voxels;
        vfrag_[li] = fid;
        stack.push_back(li);
        voxels.push_back(p);
        while (!stack.empty()) {
          std::size_t cur = stack.back();
          stack.pop_back();
          // recover position from local index
          int ex = extent_.hi.x - extent_.lo.x, ey = extent_.hi.y - extent_.lo.y;
          Vec3i q{int(cur % ex) + extent_.lo.x, int((cur / ex) % ey) + extent_.lo.y,
                  int(cur / (std::size_t(ex) * ey)) + extent_.lo.z};
          for (const Vec3i& d : steps) {
            Vec3i r = q + d;
            if (!extent_.contains(r)) continue;
            std::size_t rl = local_index(r);
            if (vfrag_[rl] >= 0 || sv.at(r) != label) continue;
            vfrag_[rl] = fid;
            stack.push_back(rl);
            voxels.push_back(r);
          }
        }
        for (const Vec3i& v : voxels) {
          frag.bbox.lo = {std::min(frag.bbox.lo.x, v.x), std::min(frag.bbox.lo.y, v.y),
                          std::min(frag.bbox.lo.z, v.z)};
          frag.bbox.hi = {std::max(frag.bbox.hi.x, v.x + 1), std::max(frag.bbox.hi.y, v.y + 1),
                          std::max(frag.bbox.hi.z, v.z + 1)};
        }
        int bx = frag.bbox.hi.x - frag.bbox.lo.x;
        int by = frag.bbox.hi.y - frag.bbox.lo.y;
        int bz = frag.bbox.hi.z - frag.bbox.lo.z;
        frag.sat.assign(std::size_t(bx + 1) * (by + 1) * (bz + 1), 0);
        auto sat_at = [&](int i, int j, int k_) -> std::uint32_t& {
          return frag.sat[std::size_t(i) + std::size_t(bx + 1) * (j + std::size_t(by + 1) * k_)];
        };
        for (const Vec3i& v : voxels)
          sat_at(v.x - frag.bbox.lo.x + 1, v.y - frag.bbox.lo.y + 1, v.z - frag.bbox.lo.z + 1) = 1;
        for (int k_ = 1; k_ <= bz; ++k_)
          for (int j = 1; j <= by; ++j)
            for (int i = 1; i <= bx; ++i)
              sat_at(i, j, k_) += sat_at(i - 1, j, k_) + sat_at(i, j - 1, k_) +
                                  sat_at(i, j, k_ - 1) - sat_at(i - 1, j - 1, k_) -
                                  sat_at(i - 1, j, k_ - 1) - sat_at(i, j - 1, k_ - 1) +
                                  sat_at(i - 1, j - 1, k_ - 1);
        frags_.push_back(std::move(frag));
      }

  // Fragment adjacency edges (distinct fragments are always distinct
  // supervoxels; same-supervoxel neighbors are the same fragment by
  // maximality).
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> edge_ids;
  const Vec3i fwd[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int z = extent_.lo.z; z < extent_.hi.z; ++z)
    for (int y = extent_.lo.y; y < extent_.hi.y; ++y)
      for (int x = extent_.lo.x; x < extent_.hi.x; ++x) {
        Vec3i p{x, y, z};
        std::int32_t fp = vfrag_[local_index(p)];
        if (fp < 0) continue;
        for (const Vec3i& d : fwd) {
          Vec3i q = p + d;
          if (!extent_.contains(q)) continue;
          std::int32_t fq = vfrag_[local_index(q)];
          if (fq < 0 || fq == fp) continue;
          std::pair<std::uint32_t, std::uint32_t> k =
              fp < fq ? std::pair<std::uint32_t, std::uint32_t>(fp, fq)
                      : std::pair<std::uint32_t, std::uint32_t>(fq, fp);
          if (edge_ids.count(k)) continue;
          edge_ids[k] = std::uint32_t(edges_.size());
          edges_.push_back({k.first, k.second, frags_[k.first].sv, frags_[k.second].sv, false});
        }
      }

  // Static per-fragment zone masks: bit z is set iff the fragment intersects
  // the union of descriptor boxes centered in zone z (the zone's center box
  // dilated by the halo).
  zmask_.assign(frags_.size() * std::size_t(zone_words_), 0);
  for (std::uint32_t f = 0; f < frags_.size(); ++f) {
    std::uint64_t* mask = zmask_.data() + std::size_t(f) * zone_words_;
    for (int z = 0; z < zone_count(); ++z) {
      Box3i cbox = zone_center_box(z);
      if (cbox.empty()) continue;
      Box3i vbox = cbox.dilated(halo_).clipped(extent_);
      if (frags_[f].count_in(vbox) > 0) mask[z >> 6] |= std::uint64_t(1) << (z & 63);
    }
  }

  // Initial components: fragment edges internal to a segment are on.
  comp_ = UnionFind(std::uint32_t(frags_.size()));
  for (FragEdge& e : edges_) {
    if (seg.find(e.sv_f) == seg.find(e.sv_g)) {
      e.on = true;
      std::uint32_t u = comp_.find(e.f), v = comp_.find(e.g);
      if (u != v) {
        std::uint32_t survivor = comp_.unite(u, v);
        std::uint32_t other = (survivor == u) ? v : u;
        std::uint64_t* ms = zmask_.data() + std::size_t(survivor) * zone_words_;
        const std::uint64_t* mo = zmask_.data() + std::size_t(other) * zone_words_;
        for (int w = 0; w < zone_words_; ++w) ms[w] |= mo[w];
      }
    }
  }

  for (std::uint32_t i = 0; i < edges_.size(); ++i) {
    const FragEdge& e = edges_[i];
    if (e.on) continue;
    off_pairs_[make_pair_key(seg.find(e.sv_f), seg.find(e.sv_g))].push_back(i);
  }
  for (const Fragment& f : frags_) segs_[seg.find(f.sv)] += 1;
}

std::int32_t RegionState::fragment_at(Vec3i p) const {
  if (!extent_.contains(p)) return -1;
  return vfrag_[local_index(p)];
}

std::size_t RegionState::component_count() const {
  std::size_t n = 0;
  for (std::uint32_t f = 0; f < frags_.size(); ++f)
    if (comp_.find(f) == f) ++n;
  return n;
}

std::vector<SegPair> RegionState::active_pairs() const {
  std::vector<SegPair> out;
  out.reserve(off_pairs_.size());
  for (const auto& [pair, ids] : off_pairs_) out.push_back(pair);
  return out;
}

bool RegionState::local_connected(Vec3i u, Vec3i v) const {
  if (!extent_.contains(u) || !extent_.contains(v))
    throw std::out_of_range("position outside region extent");
  std::int32_t fu = vfrag_[local_index(u)];
  std::int32_t fv = vfrag_[local_index(v)];
  if (fu < 0 || fv < 0) return false;
  return comp_.find(fu) == comp_.find(fv);
}

void RegionState::joined_component_groups(const std::vector<std::vector<std::uint32_t>>& groups,
                                          std::vector<std::vector<std::uint32_t>>& out) const {
  out.clear();
  // Tiny union-find over the component roots touched by the off edges
  // internal to each group.
  std::vector<std::uint32_t> roots;
  std::vector<std::uint32_t> parent;
  auto find_local = [&](std::uint32_t i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  auto index_of = [&](std::uint32_t root) -> std::uint32_t {
    for (std::uint32_t i = 0; i < roots.size(); ++i)
      if (roots[i] == root) return i;
    roots.push_back(root);
    parent.push_back(std::uint32_t(roots.size() - 1));
    return std::uint32_t(roots.size() - 1);
  };
  for (const auto& group : groups) {
    for (std::size_t i = 0; i < group.size(); ++i)
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        auto it = off_pairs_.find(make_pair_key(group[i], group[j]));
        if (it == off_pairs_.end()) continue;
        for (std::uint32_t eid : it->second) {
          std::uint32_t u = index_of(comp_.find(edges_[eid].f));
          std::uint32_t v = index_of(comp_.find(edges_[eid].g));
          std::uint32_t ru = find_local(u), rv = find_local(v);
          if (ru != rv) parent[std::max(ru, rv)] = std::min(ru, rv);
        }
      }
  }
  std::vector<std::vector<std::uint32_t>> buckets(roots.size());
  for (std::uint32_t i = 0; i < roots.size(); ++i) buckets[find_local(i)].push_back(roots[i]);
  for (auto& b : buckets)
    if (b.size() >= 2) {
      std::sort(b.begin(), b.end());
      out.push_back(std::move(b));
    }
}

RegionState::Overlay RegionState::make_overlay(
    const std::vector<std::vector<std::uint32_t>>& groups) const {
  Overlay ov;
  std::vector<std::vector<std::uint32_t>> joined;
  joined_component_groups(groups, joined);
  for (const auto& members : joined) {
    std::uint32_t rep = members.front();
    for (std::uint32_t m : members) ov.remap.push_back({m, rep});
  }
  return ov;
}

void RegionState::compute_bits(const DescriptorType& dt, Vec3i x, const Overlay* overlay,
                               std::uint64_t* out) const {
  // Centers inside this region's block are exactly the positions whose
  // descriptor box fits the unclipped extent.
  if (!centers_.contains(x)) throw std::out_of_range("descriptor outside region");
  int words = dt.words();
  for (int w = 0; w < words; ++w) out[w] = 0;

  auto resolve = [&](Vec3i p) -> std::int64_t {
    if (!vol_.inside(p)) return -1;
    std::int32_t f = vfrag_[local_index(p)];
    if (f < 0) return -1;
    std::uint32_t root = comp_.find(std::uint32_t(f));
    if (overlay) root = overlay->resolve(root);
    return root;
  };
  for (int i = 0; i < dt.k; ++i) {
    const OffsetPair& pr = dt.pairs[i];
    std::int64_t ra = resolve(x + pr.a);
    if (ra < 0) continue;
    std::int64_t rb = resolve(x + pr.b);
    if (rb < 0) continue;
    if (ra == rb) out[i >> 6] |= std::uint64_t(1) << (i & 63);
  }
}

void RegionState::visible_components(Box3i query, std::vector<std::uint32_t>& roots) const {
  roots.clear();
  for (std::uint32_t f = 0; f < frags_.size(); ++f)
    if (frags_[f].count_in(query) > 0) roots.push_back(comp_.find(f));
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
}

Box3i RegionState::zone_center_box(int z) const {
  int zx = z % zones_x_, zy = (z / zones_x_) % zones_y_, zz = z / (zones_x_ * zones_y_);
  Box3i b{{block_origin_.x + zx * zone_edge_, block_origin_.y + zy * zone_edge_,
           block_origin_.z + zz * zone_edge_},
          {block_origin_.x + (zx + 1) * zone_edge_, block_origin_.y + (zy + 1) * zone_edge_,
           block_origin_.z + (zz + 1) * zone_edge_}};
  return b.clipped(centers_);
}

void RegionState::active_zone_mask(const std::vector<std::vector<std::uint32_t>>& groups,
                                   std::uint64_t* out) const {
  for (int w = 0; w < zone_words_; ++w) out[w] = 0;
  std::vector<std::vector<std::uint32_t>> joined;
  joined_component_groups(groups, joined);
  for (const auto& members : joined)
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        const std::uint64_t* mi = component_zone_mask(members[i]);
        const std::uint64_t* mj = component_zone_mask(members[j]);
        for (int w = 0; w < zone_words_; ++w) out[w] |= mi[w] & mj[w];
      }
}

void RegionState::incident_components(SegPair pair, std::vector<std::uint32_t>& roots) const {
  roots.clear();
  auto it = off_pairs_.find(pair);
  if (it == off_pairs_.end()) return;
  for (std::uint32_t eid : it->second) {
    roots.push_back(comp_.find(edges_[eid].f));
    roots.push_back(comp_.find(edges_[eid].g));
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
}

bool RegionState::apply_merge(std::uint32_t a, std::uint32_t b, std::uint32_t new_root) {
  bool here_a = segs_.count(a) > 0, here_b = segs_.count(b) > 0;
  if (!here_a && !here_b) return false;

  bool changed = false;
  auto it = off_pairs_.find(make_pair_key(a, b));
  if (it != off_pairs_.end()) {
    for (std::uint32_t eid : it->second) {
      FragEdge& e = edges_[eid];
      e.on = true;
      std::uint32_t u = comp_.find(e.f), v = comp_.find(e.g);
      if (u != v) {
        std::uint32_t survivor = comp_.unite(u, v);
        std::uint32_t other = (survivor == u) ? v : u;
        std::uint64_t* ms = zmask_.data() + std::size_t(survivor) * zone_words_;
        const std::uint64_t* mo = zmask_.data() + std::size_t(other) * zone_words_;
        for (int w = 0; w < zone_words_; ++w) ms[w] |= mo[w];
        changed = true;
      }
    }
    off_pairs_.erase(it);
  }

  // Re-key bookkeeping from a/b to the merged root.
  if (here_a || here_b) {
    std::vector<std::pair<SegPair, std::vector<std::uint32_t>>> moved;
    for (auto kt = off_pairs_.begin(); kt != off_pairs_.end();) {
      const SegPair& key = kt->first;
      if (key.first == a || key.first == b || key.second == a || key.second == b) {
        std::uint32_t other = (key.first == a || key.first == b) ? key.second : key.first;
        moved.push_back({make_pair_key(new_root, other), std::move(kt->second)});
        kt = off_pairs_.erase(kt);
      } else {
        ++kt;
      }
    }
    for (auto& [key, ids] : moved) {
      auto& slot = off_pairs_[key];
      slot.insert(slot.end(), ids.begin(), ids.end());
      std::sort(slot.begin(), slot.end());
    }
    std::uint32_t count = 0;
    if (here_a) {
      count += segs_[a];
      segs_.erase(a);
    }
    if (here_b) {
      count += segs_[b];
      segs_.erase(b);
    }
    segs_[new_root] += count;
  }
  return changed;
}

void compute_descriptor(const DescriptorType& dt, Vec3i x, const RegionState& state,
                        std::uint64_t* out) {
  state.compute_bits(dt, x, nullptr, out);
}

}  // namespace celis
