#include <doctest.h>

#include <cmath>
#include <set>

#include "celis/descriptor.hpp"
#include "celis/region_connectivity.hpp"
#include "celis/region_graph.hpp"
#include "testutil.hpp"

using namespace celis;

namespace {

RegionState single_region_state(const LabelVolume& sv, const DescriptorType& dt,
                                const RegionGraph& graph) {
  RegionTiling t = tile_regions(sv.shape(), dt);
  REQUIRE(t.cell_count() >= 1);
  return RegionState(t, 0, dt.zone, sv, graph.segments());
}

}  // namespace

TEST_CASE("pairwise sampling: counts, ranges, determinism") {
  DescriptorType dt = sample_descriptor_type(0, 42, DescriptorKind::pairwise, 9, 512, 24, 8);
  CHECK(dt.pairs.size() == 512);
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  for (const OffsetPair& p : dt.pairs) {
    for (int c : {p.a.x, p.a.y, p.a.z, p.b.x, p.b.y, p.b.z}) {
      CHECK(c >= -4);
      CHECK(c <= 4);
    }
    CHECK_FALSE(p.a == p.b);
    auto key = std::make_pair(
        std::uint64_t((p.a.x + 4) + 9 * ((p.a.y + 4) + 9 * (p.a.z + 4))),
        std::uint64_t((p.b.x + 4) + 9 * ((p.b.y + 4) + 9 * (p.b.z + 4))));
    CHECK(seen.insert(key).second);  // no duplicate pairs
  }
  DescriptorType again = sample_descriptor_type(0, 42, DescriptorKind::pairwise, 9, 512, 24, 8);
  for (std::size_t i = 0; i < dt.pairs.size(); ++i) {
    CHECK(dt.pairs[i].a == again.pairs[i].a);
    CHECK(dt.pairs[i].b == again.pairs[i].b);
  }
}

TEST_CASE("center-based sampling anchors every pair at the origin") {
  DescriptorType dt = sample_descriptor_type(1, 7, DescriptorKind::center_based, 17, 512, 48, 8);
  CHECK(dt.pairs.size() == 512);
  for (const OffsetPair& p : dt.pairs) {
    CHECK(p.a == Vec3i{0, 0, 0});
    CHECK_FALSE(p.b == Vec3i{0, 0, 0});
  }
}

TEST_CASE("k exceeding the pair space is rejected") {
  // 3^3 box, center-based: 26 available pairs
  CHECK_THROWS_AS(sample_descriptor_type(0, 1, DescriptorKind::center_based, 3, 27, 8, 4),
                  std::invalid_argument);
  CHECK_NOTHROW(sample_descriptor_type(0, 1, DescriptorKind::center_based, 3, 26, 8, 4));
}

TEST_CASE("descriptor json round trip") {
  std::vector<DescriptorType> types;
  types.push_back(sample_descriptor_type(0, 3, DescriptorKind::pairwise, 5, 64, 12, 4));
  types.push_back(sample_descriptor_type(1, 4, DescriptorKind::center_based, 7, 32, 16, 8));
  auto back = descriptor_types_from_json(descriptor_types_to_json(types));
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back[i].id == types[i].id);
    CHECK(back[i].kind == types[i].kind);
    CHECK(back[i].k == types[i].k);
    for (std::size_t j = 0; j < types[i].pairs.size(); ++j) {
      CHECK(back[i].pairs[j].a == types[i].pairs[j].a);
      CHECK(back[i].pairs[j].b == types[i].pairs[j].b);
    }
  }
}

TEST_CASE("single-segment region: all in-volume bits set") {
  LabelVolume sv({9, 9, 9}, 1);  // one supervoxel fills the volume
  RegionGraph g = build_region_graph(sv);
  DescriptorType dt = sample_descriptor_type(0, 5, DescriptorKind::pairwise, 5, 64, 9, 4);
  RegionState rs = single_region_state(sv, dt, g);
  Vec3i x{4, 4, 4};  // bbox fully inside
  std::uint64_t bits[kMaxDescriptorWords];
  compute_descriptor(dt, x, rs, bits);
  for (int i = 0; i < dt.k; ++i) CHECK((bits[i >> 6] >> (i & 63) & 1) == 1);
}

TEST_CASE("all-background region: all bits zero") {
  LabelVolume sv({9, 9, 9}, 0);
  sv.at({0, 0, 0}) = 1;  // keep the graph builder happy, far from the probe
  RegionGraph g = build_region_graph(sv);
  DescriptorType dt = sample_descriptor_type(0, 5, DescriptorKind::pairwise, 5, 64, 13, 4);
  RegionState rs = single_region_state(sv, dt, g);
  std::uint64_t bits[kMaxDescriptorWords];
  compute_descriptor(dt, {5, 5, 5}, rs, bits);
  for (int w = 0; w < dt.words(); ++w) CHECK(bits[w] == 0);
}

TEST_CASE("two-segment plane split matches per-pair side test") {
  LabelVolume sv({9, 9, 9});
  for (int z = 0; z < 9; ++z)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 9; ++x) sv.at({x, y, z}) = x < 4 ? 1 : 2;
  RegionGraph g = build_region_graph(sv);
  DescriptorType dt = sample_descriptor_type(0, 6, DescriptorKind::pairwise, 9, 128, 13, 4);
  RegionState rs = single_region_state(sv, dt, g);
  Vec3i x{4, 4, 4};
  std::uint64_t bits[kMaxDescriptorWords];
  compute_descriptor(dt, x, rs, bits);
  for (int i = 0; i < dt.k; ++i) {
    Vec3i p = x + dt.pairs[i].a, q = x + dt.pairs[i].b;
    bool same_side = ((p.x < 4) == (q.x < 4));
    CHECK(bool(bits[i >> 6] >> (i & 63) & 1) == same_side);
  }
}

TEST_CASE("descriptor outside region is rejected") {
  LabelVolume sv({12, 12, 12}, 1);
  RegionGraph g = build_region_graph(sv);
  DescriptorType dt = sample_descriptor_type(0, 6, DescriptorKind::pairwise, 5, 16, 5, 4);
  RegionTiling t = tile_regions(sv.shape(), dt);
  RegionState rs(t, 0, dt.zone, sv, g.segments());  // centers [0,1)^3
  std::uint64_t bits[kMaxDescriptorWords];
  CHECK_THROWS_AS(compute_descriptor(dt, {5, 5, 5}, rs, bits), std::out_of_range);
}

TEST_CASE("hamming examples and xor-loop oracle") {
  DescriptorType dt = sample_descriptor_type(0, 9, DescriptorKind::pairwise, 9, 512, 24, 8);
  Rng rng(12);
  std::vector<std::uint64_t> d1(dt.words()), d2(dt.words());
  for (int w = 0; w < dt.words(); ++w) {
    d1[w] = rng.next_u64();
    d2[w] = rng.next_u64();
  }
  // mask tail bits beyond k
  int tail = dt.k % 64;
  if (tail) {
    d1.back() &= (std::uint64_t(1) << tail) - 1;
    d2.back() &= (std::uint64_t(1) << tail) - 1;
  }
  CHECK(hamming(d1.data(), d1.data(), dt.k) == 0);
  std::vector<std::uint64_t> comp(dt.words());
  for (int w = 0; w < dt.words(); ++w) comp[w] = ~d1[w];
  if (tail == 0) tail = 64;
  comp.back() &= dt.k % 64 ? (std::uint64_t(1) << (dt.k % 64)) - 1 : ~std::uint64_t(0);
  CHECK(hamming(d1.data(), comp.data(), dt.k) == dt.k);
  int expect = 0;
  for (int i = 0; i < dt.k; ++i)
    expect += int((d1[i >> 6] >> (i & 63) & 1) != (d2[i >> 6] >> (i & 63) & 1));
  CHECK(hamming(d1.data(), d2.data(), dt.k) == expect);
}

TEST_CASE("locality: labels outside the region never change the descriptor") {
  LabelVolume sv = testutil::random_labels({20, 20, 20}, 6, 0.8, 31);
  DescriptorType dt = sample_descriptor_type(0, 8, DescriptorKind::pairwise, 5, 64, 8, 4);
  RegionGraph g = build_region_graph(sv);
  RegionTiling t = tile_regions(sv.shape(), dt);
  RegionState rs(t, 0, dt.zone, sv, g.segments());
  Vec3i x = rs.centers().lo;
  std::uint64_t before[kMaxDescriptorWords];
  rs.compute_bits(dt, x, nullptr, before);

  // mutate far outside the extent and rebuild
  LabelVolume mutated = sv;
  mutated.at({19, 19, 19}) = 6;
  mutated.at({18, 19, 19}) = 0;
  RegionGraph g2 = build_region_graph(mutated);
  RegionState rs2(t, 0, dt.zone, mutated, g2.segments());
  std::uint64_t after[kMaxDescriptorWords];
  rs2.compute_bits(dt, x, nullptr, after);
  CHECK(bits_equal(before, after, dt.words()));
}

TEST_CASE("determinism: identical inputs give identical bits") {
  LabelVolume sv = testutil::random_labels({10, 10, 10}, 5, 0.7, 77);
  DescriptorType dt = sample_descriptor_type(0, 8, DescriptorKind::center_based, 5, 48, 10, 4);
  RegionGraph g = build_region_graph(sv);
  RegionState rs = single_region_state(sv, dt, g);
  std::uint64_t a[kMaxDescriptorWords], b[kMaxDescriptorWords];
  rs.compute_bits(dt, {5, 5, 5}, nullptr, a);
  rs.compute_bits(dt, {5, 5, 5}, nullptr, b);
  CHECK(bits_equal(a, b, dt.words()));
}

TEST_CASE("expected hamming/k equals the pair-disagreement rate (small Monte Carlo)") {
  // Whole-volume bounding box on a 5^3 volume, single connectivity region.
  const int B = 5;
  VolumeShape shape{B, B, B};
  LabelVolume s1 = testutil::random_labels(shape, 3, 0.85, 51);
  LabelVolume s2 = testutil::random_labels(shape, 3, 0.85, 52);
  testutil::FloodCC cc1, cc2;
  cc1.build(shape, shape.bounds(), [&](Vec3i p) { return s1.at(p); });
  cc2.build(shape, shape.bounds(), [&](Vec3i p) { return s2.at(p); });

  // Exact disagreement rate over all distinct position pairs.
  std::vector<Vec3i> pos;
  for (int z = 0; z < B; ++z)
    for (int y = 0; y < B; ++y)
      for (int x = 0; x < B; ++x) pos.push_back({x, y, z});
  std::uint64_t disagree = 0, total = 0;
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = i + 1; j < pos.size(); ++j) {
      bool m1 = cc1.at(pos[i]) >= 0 && cc1.at(pos[i]) == cc1.at(pos[j]);
      bool m2 = cc2.at(pos[i]) >= 0 && cc2.at(pos[i]) == cc2.at(pos[j]);
      disagree += m1 != m2;
      ++total;
    }
  double exact = double(disagree) / double(total);

  const int trials = 60, k = 128;
  Vec3i center{B / 2, B / 2, B / 2};
  double sum = 0.0, sumsq = 0.0;
  std::uint64_t d1[kMaxDescriptorWords], d2[kMaxDescriptorWords];
  for (int trial = 0; trial < trials; ++trial) {
    DescriptorType dt =
        sample_descriptor_type(0, 1000 + trial, DescriptorKind::pairwise, B, k, B, 4);
    cc1.bits_at(dt, center, d1);
    cc2.bits_at(dt, center, d2);
    double rate = double(hamming(d1, d2, k)) / k;
    sum += rate;
    sumsq += rate * rate;
  }
  double mean = sum / trials;
  double var = (sumsq / trials - mean * mean) / (trials - 1);
  double se = std::sqrt(std::max(var, 1e-12));
  CHECK(std::fabs(mean - exact) <= 3.0 * se + 1e-9);
}
