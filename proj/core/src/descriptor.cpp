#include "celis/descriptor.hpp"

#include <bit>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace celis {

std::string to_string(DescriptorKind k) {
  return k == DescriptorKind::pairwise ? "pairwise" : "center_based";
}

DescriptorKind descriptor_kind_from_string(const std::string& s) {
  if (s == "pairwise") return DescriptorKind::pairwise;
  if (s == "center_based") return DescriptorKind::center_based;
  throw std::invalid_argument("unknown descriptor kind: " + s);
}

DescriptorType sample_descriptor_type(int id, std::uint64_t seed, DescriptorKind kind, int bbox,
                                      int k, int region, int zone) {
  if (bbox < 1 || bbox % 2 == 0) throw std::invalid_argument("bbox edge must be odd and >= 1");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (k > 64 * kMaxDescriptorWords) throw std::invalid_argument("k too large");
  if (zone < 1) throw std::invalid_argument("zone edge must be >= 1");

  std::uint64_t positions = std::uint64_t(bbox) * bbox * bbox;
  std::uint64_t available = kind == DescriptorKind::pairwise
                                ? positions * (positions - 1) / 2
                                : positions - 1;
  if (std::uint64_t(k) > available)
    throw std::invalid_argument("k exceeds the number of distinct offset pairs");

  int h = (bbox - 1) / 2;
  auto offset_of = [&](std::uint64_t idx) -> Vec3i {
    int x = int(idx % bbox) - h;
    int y = int((idx / bbox) % bbox) - h;
    int z = int(idx / (std::uint64_t(bbox) * bbox)) - h;
    return {x, y, z};
  };

  DescriptorType dt;
  dt.id = id;
  dt.kind = kind;
  dt.bbox = bbox;
  dt.k = k;
  dt.region = region;
  dt.zone = zone;
  dt.seed = seed;
  dt.pairs.reserve(k);

  Rng rng(seed);
  std::unordered_set<std::uint64_t> used;
  while (int(dt.pairs.size()) < k) {
    std::uint64_t ai, bi;
    if (kind == DescriptorKind::pairwise) {
      ai = rng.below(positions);
      bi = rng.below(positions);
      if (ai == bi) continue;
      if (ai > bi) std::swap(ai, bi);
    } else {
      ai = positions / 2;  // box center
      bi = rng.below(positions);
      if (bi == ai) continue;
    }
    std::uint64_t key = ai * positions + bi;
    if (!used.insert(key).second) continue;
    dt.pairs.push_back({offset_of(ai), offset_of(bi)});
  }
  return dt;
}

int hamming(const std::uint64_t* a, const std::uint64_t* b, int k) {
  int words = (k + 63) / 64;
  int count = 0;
  for (int i = 0; i < words; ++i) count += std::popcount(a[i] ^ b[i]);
  return count;
}

std::string descriptor_types_to_json(const std::vector<DescriptorType>& types) {
  nlohmann::json arr = nlohmann::json::array();
  for (const DescriptorType& dt : types) {
    nlohmann::json j;
    j["id"] = dt.id;
    j["kind"] = to_string(dt.kind);
    j["bbox"] = dt.bbox;
    j["k"] = dt.k;
    j["region"] = dt.region;
    j["zone"] = dt.zone;
    j["seed"] = dt.seed;
    nlohmann::json pairs = nlohmann::json::array();
    for (const OffsetPair& p : dt.pairs)
      pairs.push_back({p.a.x, p.a.y, p.a.z, p.b.x, p.b.y, p.b.z});
    j["pairs"] = std::move(pairs);
    arr.push_back(std::move(j));
  }
  return arr.dump(1);
}

std::vector<DescriptorType> descriptor_types_from_json(const std::string& text) {
  nlohmann::json arr = nlohmann::json::parse(text);
  std::vector<DescriptorType> out;
  for (const auto& j : arr) {
    DescriptorType dt;
    dt.id = j.at("id").get<int>();
    dt.kind = descriptor_kind_from_string(j.at("kind").get<std::string>());
    dt.bbox = j.at("bbox").get<int>();
    dt.k = j.at("k").get<int>();
    dt.region = j.at("region").get<int>();
    dt.zone = j.at("zone").get<int>();
    dt.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("pairs")) {
      OffsetPair op;
      op.a = {p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()};
      op.b = {p.at(3).get<int>(), p.at(4).get<int>(), p.at(5).get<int>()};
      dt.pairs.push_back(op);
    }
    if (int(dt.pairs.size()) != dt.k)
      throw std::runtime_error("descriptor pair list does not match k");
    out.push_back(std::move(dt));
  }
  return out;
}

}  // namespace celis
