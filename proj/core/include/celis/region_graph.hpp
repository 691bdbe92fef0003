#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "celis/volume.hpp"

namespace celis {

class UnionFind {
 public:
  UnionFind() = default;
  explicit UnionFind(std::uint32_t n) : parent_(n), rank_(n, 0) {
    for (std::uint32_t i = 0; i < n; ++i) parent_[i] = i;
  }

  std::uint32_t size() const { return std::uint32_t(parent_.size()); }

  std::uint32_t find(std::uint32_t x) const {
    std::uint32_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      std::uint32_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  /// Unites the sets of a and b; returns the surviving root.
  std::uint32_t unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }

  /// Directed union: `keep` becomes the root of both sets.  Used where the
  /// surviving id must be deterministic (merge logs, replay).
  void unite_into(std::uint32_t keep, std::uint32_t drop) {
    keep = find(keep);
    drop = find(drop);
    if (keep == drop) return;
    parent_[drop] = keep;
    if (rank_[keep] <= rank_[drop]) rank_[keep] = rank_[drop] + 1;
  }

  bool same(std::uint32_t a, std::uint32_t b) const { return find(a) == find(b); }

 private:
  mutable std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> rank_;
};

using SegPair = std::pair<std::uint32_t, std::uint32_t>;

inline SegPair make_pair_key(std::uint32_t a, std::uint32_t b) {
  return a < b ? SegPair{a, b} : SegPair{b, a};
}

/// Adjacency graph over segments with a union-find mapping supervoxel ids to
/// their current segment.  Edges carry the number of adjacent voxel pairs and
/// the canonical (smallest) original supervoxel pair they represent, which is
/// what merge logs record.
class RegionGraph {
 public:
  struct EdgeInfo {
    std::uint64_t contact = 0;
    SegPair canonical{0, 0};  // smallest original supervoxel pair
  };

  RegionGraph() = default;

  const UnionFind& segments() const { return uf_; }
  std::uint32_t find(std::uint32_t sv) const { return uf_.find(sv); }

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const;

  bool has_edge(std::uint32_t a, std::uint32_t b) const;
  const EdgeInfo& edge(std::uint32_t a, std::uint32_t b) const;

  /// Sorted canonical list of current edges (pairs of segment roots).
  std::vector<SegPair> edge_list() const;
  /// Sorted neighbors of a segment root.
  std::vector<std::uint32_t> neighbors(std::uint32_t root) const;
  /// Sorted list of current segment roots.
  std::vector<std::uint32_t> roots() const;

  /// Merges two current segment roots.  Incident edges are contracted and
  /// parallel edges unified (contacts summed, canonical pair minimized).
  /// Returns the surviving root.
  std::uint32_t merge(std::uint32_t a, std::uint32_t b);

  friend RegionGraph build_region_graph(const LabelVolume& sv);

 private:
  UnionFind uf_;
  std::size_t node_count_ = 0;
  // root -> (neighbor root -> edge info); both sides stored.
  std::map<std::uint32_t, std::map<std::uint32_t, EdgeInfo>> adj_;
};

/// Builds the supervoxel adjacency graph: one node per positive label present,
/// an edge for every 6-adjacent pair of differing positive labels, contact
/// counts equal to the number of adjacent voxel pairs.  Background (label 0)
/// contributes no nodes and no edges.
RegionGraph build_region_graph(const LabelVolume& sv);

}  // namespace celis
