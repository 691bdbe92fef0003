#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "celis/geometry.hpp"

namespace celis {

enum class DescriptorKind { pairwise, center_based };

std::string to_string(DescriptorKind k);
DescriptorKind descriptor_kind_from_string(const std::string& s);

struct OffsetPair {
  Vec3i a, b;
};

/// Definition of one shape-descriptor scale: an odd cubic bounding box of
/// edge bbox, k offset pairs inside it, the connectivity-region size used to
/// evaluate "connected", and the zone grid edge used for pruning.  The pair
/// list is fixed at creation and is the authoritative definition; the seed is
/// provenance only.
struct DescriptorType {
  int id = 0;
  DescriptorKind kind = DescriptorKind::pairwise;
  int bbox = 9;          // odd cube edge B
  int k = 512;           // bit count
  int region = 24;       // connectivity region edge R (>= bbox)
  int zone = 8;          // zone grid edge over descriptor-center positions
  std::uint64_t seed = 0;
  std::vector<OffsetPair> pairs;

  int halo() const { return (bbox - 1) / 2; }
  int words() const { return (k + 63) / 64; }
};

/// Largest supported descriptor width in 64-bit words (k <= 1024).
inline constexpr int kMaxDescriptorWords = 16;

/// Samples pair offsets uniformly at random without replacement.  Pairwise
/// kind draws from all unordered pairs of distinct positions in the box;
/// center-based kind anchors every pair at the box center and draws the other
/// endpoint from the remaining positions.  Deterministic given the seed.
DescriptorType sample_descriptor_type(int id, std::uint64_t seed, DescriptorKind kind, int bbox,
                                      int k, int region, int zone);

/// Number of differing bits between two descriptors of the same width.
int hamming(const std::uint64_t* a, const std::uint64_t* b, int k);

inline bool bits_equal(const std::uint64_t* a, const std::uint64_t* b, int words) {
  for (int i = 0; i < words; ++i)
    if (a[i] != b[i]) return false;
  return true;
}

std::string descriptor_types_to_json(const std::vector<DescriptorType>& types);
std::vector<DescriptorType> descriptor_types_from_json(const std::string& text);

}  // namespace celis
