#pragma once

#include <algorithm>
#include <cstdint>

namespace celis {

struct Vec3i {
  int x = 0, y = 0, z = 0;

  friend Vec3i operator+(Vec3i a, Vec3i b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3i operator-(Vec3i a, Vec3i b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend bool operator==(Vec3i a, Vec3i b) { return a.x == b.x && a.y == b.y && a.z == b.z; }
  friend bool operator!=(Vec3i a, Vec3i b) { return !(a == b); }
};

/// Half-open axis-aligned box [lo, hi).
struct Box3i {
  Vec3i lo, hi;

  bool empty() const { return hi.x <= lo.x || hi.y <= lo.y || hi.z <= lo.z; }
  bool contains(Vec3i p) const {
    return p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y && p.z >= lo.z && p.z < hi.z;
  }
  std::int64_t volume() const {
    if (empty()) return 0;
    return std::int64_t(hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
  }
  Box3i clipped(const Box3i& other) const {
    Box3i r{{std::max(lo.x, other.lo.x), std::max(lo.y, other.lo.y), std::max(lo.z, other.lo.z)},
            {std::min(hi.x, other.hi.x), std::min(hi.y, other.hi.y), std::min(hi.z, other.hi.z)}};
    return r;
  }
  Box3i dilated(int r) const { return {{lo.x - r, lo.y - r, lo.z - r}, {hi.x + r, hi.y + r, hi.z + r}}; }

  friend bool operator==(const Box3i& a, const Box3i& b) { return a.lo == b.lo && a.hi == b.hi; }
};

/// Deterministic splittable RNG.  All randomized code in the library draws
/// through this type so results are reproducible across platforms and do not
/// depend on standard-library distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free is unnecessary here; modulo bias is negligible for the
    // small n used, but reject to keep draws exactly uniform anyway.
    if (n == 0) return 0;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  /// Uniform in [0, 1).
  double unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1] (never zero; suitable as a priority-sampling draw).
  double unit_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

 private:
  std::uint64_t state_;
};

/// Stateless hash of a small tuple of ids to a uniform in (0, 1].
/// Used where a draw must be a deterministic function of an item's identity
/// rather than of enumeration order.
inline double hash_to_unit(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                           std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t h = seed ^ 0x2545f4914f6cdd1dULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
  };
  mix(a);
  mix(b);
  mix(c);
  mix(d);
  return double((h >> 11) + 1) * 0x1.0p-53;
}

}  // namespace celis
