#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "celis/volume.hpp"

namespace celis {

/// Sparse contingency table between a segmentation (rows) and a ground truth
/// (columns) over voxels that are foreground in both volumes.  Background
/// voxels carry no object identity and are excluded from all metrics.
class ContingencyTable {
 public:
  static ContingencyTable from_volumes(const LabelVolume& seg, const LabelVolume& truth);

  std::uint64_t total() const { return total_; }
  std::size_t row_count() const { return rows_.size(); }
  bool has_row(std::uint32_t u) const { return rows_.count(u) > 0; }

  /// Variation of Information in nats: H(S) + H(S*) - 2 I(S; S*).
  double variation_of_information() const;
  /// The two conditional entropies (H(S|S*), H(S*|S)): split and merge error.
  std::pair<double, double> vi_split_merge() const;
  /// F1 score over same-segment classification of all foreground voxel pairs.
  double rand_f1() const;

  /// Change in VI from merging segmentation rows u and v, in O(nnz(u)+nnz(v)).
  double delta_vi_merge(std::uint32_t u, std::uint32_t v) const;
  /// Merges row v into row u's partition cell under the key `into`.
  void merge_rows(std::uint32_t u, std::uint32_t v, std::uint32_t into);

 private:
  double row_entropy_term(std::uint64_t count) const;
  // row label -> (column label -> count); ordered for deterministic sums.
  std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>> rows_;
  std::map<std::uint32_t, std::uint64_t> row_sum_;
  std::map<std::uint32_t, std::uint64_t> col_sum_;
  std::uint64_t total_ = 0;
};

struct SegmentationScores {
  double vi = 0.0;
  double rand_f1 = 0.0;
  double vi_split = 0.0;
  double vi_merge = 0.0;
};

SegmentationScores score_segmentation(const LabelVolume& seg, const LabelVolume& truth);

}  // namespace celis
