#include "celis/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace celis {

ContingencyTable ContingencyTable::from_volumes(const LabelVolume& seg, const LabelVolume& truth) {
  if (!(seg.shape() == truth.shape())) throw std::invalid_argument("shape mismatch");
  ContingencyTable t;
  for (std::size_t i = 0; i < seg.shape().voxels(); ++i) {
    std::uint32_t s = seg.at(i), g = truth.at(i);
    if (s == 0 || g == 0) continue;
    t.rows_[s][g] += 1;
    t.row_sum_[s] += 1;
    t.col_sum_[g] += 1;
    t.total_ += 1;
  }
  if (t.total_ == 0) throw std::invalid_argument("no overlapping foreground voxels");
  return t;
}

namespace {
inline double xlogx(double p) { return p > 0 ? p * std::log(p) : 0.0; }
}  // namespace

double ContingencyTable::variation_of_information() const {
  auto [split, merge] = vi_split_merge();
  return split + merge;
}

std::pair<double, double> ContingencyTable::vi_split_merge() const {
  // H(S|S*) = H(S,S*) - H(S*);  H(S*|S) = H(S,S*) - H(S)
  double n = double(total_);
  double h_joint = 0.0, h_rows = 0.0, h_cols = 0.0;
  for (const auto& [u, cols] : rows_)
    for (const auto& [v, c] : cols) h_joint -= xlogx(double(c) / n);
  for (const auto& [u, c] : row_sum_) h_rows -= xlogx(double(c) / n);
  for (const auto& [v, c] : col_sum_) h_cols -= xlogx(double(c) / n);
  return {h_joint - h_cols, h_joint - h_rows};
}

double ContingencyTable::rand_f1() const {
  auto choose2 = [](std::uint64_t n) -> double { return 0.5 * double(n) * double(n - 1); };
  double tp = 0.0, pairs_seg = 0.0, pairs_truth = 0.0;
  for (const auto& [u, cols] : rows_)
    for (const auto& [v, c] : cols) tp += choose2(c);
  for (const auto& [u, c] : row_sum_) pairs_seg += choose2(c);
  for (const auto& [v, c] : col_sum_) pairs_truth += choose2(c);
  if (pairs_seg == 0.0 || pairs_truth == 0.0) return 0.0;
  double precision = tp / pairs_seg;
  double recall = tp / pairs_truth;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double ContingencyTable::delta_vi_merge(std::uint32_t u, std::uint32_t v) const {
  auto ru = rows_.find(u), rv = rows_.find(v);
  if (ru == rows_.end() || rv == rows_.end()) throw std::invalid_argument("missing row");
  if (u == v) throw std::invalid_argument("merge of identical rows");
  double n = double(total_);
  std::uint64_t au = row_sum_.at(u), av = row_sum_.at(v);

  // VI = H(S) + H(S*) - 2 I(S;S*);  H(S*) is unchanged by a row merge.
  // dH(S) from replacing the two row masses by their union:
  double d = -xlogx(double(au + av) / n) + xlogx(double(au) / n) + xlogx(double(av) / n);
  // -2 dI: I terms involve p_uv log(p_uv / (p_u q_v)); rewrite via joint and
  // marginal entropies: I = H(S) + H(S*) - H(S,S*), so
  // VI = 2 H(S,S*) - H(S) - H(S*) and dVI = 2 dH_joint - dH(S).
  double d_joint = 0.0;
  for (const auto& [col, cu] : ru->second) {
    auto it = rv->second.find(col);
    std::uint64_t cv = it == rv->second.end() ? 0 : it->second;
    d_joint += -xlogx(double(cu + cv) / n) + xlogx(double(cu) / n) + xlogx(double(cv) / n);
  }
  for (const auto& [col, cv] : rv->second)
    if (!ru->second.count(col)) d_joint += -xlogx(double(cv) / n) + xlogx(double(cv) / n);
  // columns only in v contribute nothing (cu = 0), handled above as zero.
  return 2.0 * d_joint - d;
}

void ContingencyTable::merge_rows(std::uint32_t u, std::uint32_t v, std::uint32_t into) {
  auto ru = rows_.find(u), rv = rows_.find(v);
  if (ru == rows_.end() || rv == rows_.end()) throw std::invalid_argument("missing row");
  if (u == v) throw std::invalid_argument("merge of identical rows");
  std::map<std::uint32_t, std::uint64_t> merged = std::move(ru->second);
  for (const auto& [col, c] : rv->second) merged[col] += c;
  std::uint64_t sum = row_sum_.at(u) + row_sum_.at(v);
  rows_.erase(ru);
  rows_.erase(v);
  row_sum_.erase(u);
  row_sum_.erase(v);
  rows_[into] = std::move(merged);
  row_sum_[into] = sum;
}

SegmentationScores score_segmentation(const LabelVolume& seg, const LabelVolume& truth) {
  ContingencyTable t = ContingencyTable::from_volumes(seg, truth);
  SegmentationScores s;
  auto [split, merge] = t.vi_split_merge();
  s.vi_split = split;
  s.vi_merge = merge;
  s.vi = split + merge;
  s.rand_f1 = t.rand_f1();
  return s;
}

}  // namespace celis
