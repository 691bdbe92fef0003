#include "celis/region_graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace celis {

std::size_t RegionGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& [root, nbrs] : adj_) n += nbrs.size();
  return n / 2;
}

bool RegionGraph::has_edge(std::uint32_t a, std::uint32_t b) const {
  auto it = adj_.find(uf_.find(a));
  if (it == adj_.end()) return false;
  return it->second.count(uf_.find(b)) > 0;
}

const RegionGraph::EdgeInfo& RegionGraph::edge(std::uint32_t a, std::uint32_t b) const {
  auto it = adj_.find(uf_.find(a));
  if (it == adj_.end()) throw std::out_of_range("no such edge");
  auto jt = it->second.find(uf_.find(b));
  if (jt == it->second.end()) throw std::out_of_range("no such edge");
  return jt->second;
}

std::vector<SegPair> RegionGraph::edge_list() const {
  std::vector<SegPair> out;
  for (const auto& [root, nbrs] : adj_)
    for (const auto& [other, info] : nbrs)
      if (root < other) out.push_back({root, other});
  return out;  // map iteration is already sorted
}

std::vector<std::uint32_t> RegionGraph::neighbors(std::uint32_t root) const {
  std::vector<std::uint32_t> out;
  auto it = adj_.find(uf_.find(root));
  if (it == adj_.end()) return out;
  for (const auto& [other, info] : it->second) out.push_back(other);
  return out;
}

std::vector<std::uint32_t> RegionGraph::roots() const {
  std::vector<std::uint32_t> out;
  for (const auto& [root, nbrs] : adj_) out.push_back(root);
  return out;
}

std::uint32_t RegionGraph::merge(std::uint32_t a, std::uint32_t b) {
  a = uf_.find(a);
  b = uf_.find(b);
  if (a == b) throw std::invalid_argument("merge of identical segments");
  // The smaller root survives so segment ids are reproducible from the merge
  // log alone.
  std::uint32_t keep = std::min(a, b);
  std::uint32_t drop = std::max(a, b);
  uf_.unite_into(keep, drop);

  auto drop_it = adj_.find(drop);
  auto keep_it = adj_.find(keep);
  if (keep_it == adj_.end()) keep_it = adj_.emplace(keep, std::map<std::uint32_t, EdgeInfo>{}).first;
  if (drop_it != adj_.end()) {
    for (auto& [other, info] : drop_it->second) {
      if (other == keep) continue;  // the merged edge disappears
      auto [slot_it, fresh] = keep_it->second.emplace(other, info);
      if (!fresh) {
        slot_it->second.contact += info.contact;
        slot_it->second.canonical = std::min(slot_it->second.canonical, info.canonical);
      }
      auto& back = adj_[other];
      back.erase(drop);
      back[keep] = slot_it->second;
    }
    adj_.erase(drop);
  }
  keep_it->second.erase(drop);
  node_count_ -= 1;
  return keep;
}

RegionGraph build_region_graph(const LabelVolume& sv) {
  RegionGraph g;
  const VolumeShape& s = sv.shape();
  std::uint32_t max_label = sv.max_label();
  if (max_label == 0) throw std::invalid_argument("no supervoxels");
  g.uf_ = UnionFind(max_label + 1);

  std::vector<bool> present(max_label + 1, false);
  std::map<SegPair, std::uint64_t> contacts;
  const Vec3i axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        Vec3i p{x, y, z};
        std::uint32_t lp = sv.at(p);
        if (lp == 0) continue;
        present[lp] = true;
        for (const Vec3i& d : axes) {
          Vec3i q = p + d;
          if (!s.inside(q)) continue;
          std::uint32_t lq = sv.at(q);
          if (lq == 0 || lq == lp) continue;
          contacts[make_pair_key(lp, lq)] += 1;
        }
      }

  for (std::uint32_t l = 1; l <= max_label; ++l)
    if (present[l]) {
      g.node_count_ += 1;
      g.adj_.emplace(l, std::map<std::uint32_t, RegionGraph::EdgeInfo>{});
    }
  for (const auto& [pair, count] : contacts) {
    RegionGraph::EdgeInfo info{count, pair};
    g.adj_[pair.first][pair.second] = info;
    g.adj_[pair.second][pair.first] = info;
  }
  return g;
}

}  // namespace celis
