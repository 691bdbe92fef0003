#include "celis/watershed.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

#include "celis/region_graph.hpp"

namespace celis {

void WatershedParams::validate() const {
  if (t_high < 0 || t_high > 1 || t_low < 0 || t_low > 1 || t_edge < 0 || t_edge > 1)
    throw std::invalid_argument("watershed thresholds must be in [0, 1]");
  if (t_size < 1) throw std::invalid_argument("t_size must be >= 1");
}

LabelVolume oversegment(const AffinityVolume& aff, const WatershedParams& params) {
  params.validate();
  const VolumeShape& s = aff.shape();
  const std::size_t n = s.voxels();
  const double removal = std::min(params.t_low, params.t_high);

  // Clamped weight of the edge anchored at voxel i along axis a; 0 = removed.
  auto weight = [&](std::size_t i, int a) -> double {
    double w = aff.data()[3 * i + a];
    if (w >= params.t_high) return 1.0;
    if (w < removal) return 0.0;
    return w;
  };

  const Vec3i axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  UnionFind uf{std::uint32_t(n)};

  // Forced merges across full-weight edges, then steepest-ascent parents.
  std::vector<bool> foreground(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3i p = s.position(i);
    for (int a = 0; a < 3; ++a) {
      Vec3i q = p + axes[a];
      if (!s.inside(q)) continue;
      double w = weight(i, a);
      if (w <= 0.0) continue;
      foreground[i] = true;
      foreground[s.index(q)] = true;
      if (w >= 1.0) uf.unite_into(std::min(uf.find(std::uint32_t(i)), uf.find(std::uint32_t(s.index(q)))),
                                  std::max(uf.find(std::uint32_t(i)), uf.find(std::uint32_t(s.index(q)))));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!foreground[i]) continue;
    Vec3i p = s.position(i);
    double best = 0.0;
    std::size_t parent = i;
    // All six incident edges; ties resolved by the lowest neighbor index.
    for (int a = 0; a < 3; ++a) {
      Vec3i q = p + axes[a];
      if (s.inside(q)) {
        double w = weight(i, a);
        std::size_t qi = s.index(q);
        if (w > best || (w == best && w > 0 && qi < parent)) {
          best = w;
          parent = qi;
        }
      }
      Vec3i r = p - axes[a];
      if (s.inside(r)) {
        std::size_t ri = s.index(r);
        double w = weight(ri, a);
        if (w > best || (w == best && w > 0 && ri < parent)) {
          best = w;
          parent = ri;
        }
      }
    }
    if (best > 0.0) {
      std::uint32_t ru = uf.find(std::uint32_t(i)), rv = uf.find(std::uint32_t(parent));
      if (ru != rv) uf.unite_into(std::min(ru, rv), std::max(ru, rv));
    }
  }

  // Basin sizes.
  std::map<std::uint32_t, std::uint64_t> size;
  for (std::size_t i = 0; i < n; ++i)
    if (foreground[i]) size[uf.find(std::uint32_t(i))] += 1;

  // Basin graph: maximum connecting affinity per basin pair.
  std::map<SegPair, double> basin_edges;
  for (std::size_t i = 0; i < n; ++i) {
    if (!foreground[i]) continue;
    Vec3i p = s.position(i);
    for (int a = 0; a < 3; ++a) {
      Vec3i q = p + axes[a];
      if (!s.inside(q)) continue;
      double w = weight(i, a);
      if (w <= 0.0) continue;
      std::uint32_t ru = uf.find(std::uint32_t(i)), rv = uf.find(std::uint32_t(s.index(q)));
      if (ru == rv) continue;
      auto [it, fresh] = basin_edges.emplace(make_pair_key(ru, rv), w);
      if (!fresh) it->second = std::max(it->second, w);
    }
  }

  // Merge small basins along maximum-weight edges, descending weight.
  struct QEdge {
    double w;
    SegPair pair;
    bool operator<(const QEdge& o) const {
      if (w != o.w) return w < o.w;  // max-heap by weight
      return pair > o.pair;          // then smallest pair first
    }
  };
  std::priority_queue<QEdge> heap;
  for (const auto& [pair, w] : basin_edges)
    if (w >= params.t_edge) heap.push({w, pair});
  while (!heap.empty()) {
    QEdge top = heap.top();
    heap.pop();
    std::uint32_t ru = uf.find(top.pair.first), rv = uf.find(top.pair.second);
    if (ru == rv) continue;
    if (size[ru] >= params.t_size && size[rv] >= params.t_size) continue;
    std::uint32_t keep = std::min(ru, rv), drop = std::max(ru, rv);
    uf.unite_into(keep, drop);
    size[keep] += size[drop];
    size.erase(drop);
  }

  // Surviving small basins become background; relabel compactly by the order
  // of each segment's smallest voxel index.
  LabelVolume out(s, 0);
  std::map<std::uint32_t, std::uint32_t> relabel;
  std::uint32_t next = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!foreground[i]) continue;
    std::uint32_t root = uf.find(std::uint32_t(i));
    if (size[root] < params.t_size) continue;
    auto [it, fresh] = relabel.emplace(root, 0);
    if (fresh) it->second = next++;
    out.at(i) = it->second;
  }
  return out;
}

double oversegmentation_purity(const LabelVolume& sv, const LabelVolume& truth) {
  if (!(sv.shape() == truth.shape())) throw std::invalid_argument("shape mismatch");
  // majority ground-truth segment per supervoxel
  std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>> votes;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < sv.shape().voxels(); ++i) {
    std::uint32_t s = sv.at(i), g = truth.at(i);
    if (s == 0 || g == 0) continue;
    votes[s][g] += 1;
    ++total;
  }
  if (total == 0) throw std::invalid_argument("no overlapping foreground voxels");
  std::map<std::uint32_t, std::uint32_t> majority;
  for (const auto& [s, counts] : votes) {
    std::uint32_t best_label = 0;
    std::uint64_t best_count = 0;
    for (const auto& [g, c] : counts)
      if (c > best_count) {
        best_count = c;
        best_label = g;
      }
    majority[s] = best_label;
  }
  std::uint64_t matched = 0;
  for (std::size_t i = 0; i < sv.shape().voxels(); ++i) {
    std::uint32_t s = sv.at(i), g = truth.at(i);
    if (s == 0 || g == 0) continue;
    if (majority[s] == g) ++matched;
  }
  return double(matched) / double(total);
}

}  // namespace celis
