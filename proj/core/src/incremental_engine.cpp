#include "celis/incremental_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace celis {

std::string EngineCounters::to_json() const {
  nlohmann::json j;
  j["descriptors_computed"] = descriptors_computed;
  j["model_evaluations"] = model_evaluations;
  j["naive_descriptor_terms"] = naive_descriptor_terms;
  j["pruned"] = {{"lemma1", pruned_lemma1}, {"lemma2", pruned_lemma2}, {"lemma3", pruned_lemma3},
                 {"lemma4", pruned_lemma4}, {"zone", pruned_zone}};
  j["parallel_edge_recomputes"] = parallel_edge_recomputes;
  j["steps"] = steps;
  return j.dump(2);
}

AuditResults::Tally& AuditResults::of(PruneCategory c) {
  switch (c) {
    case PruneCategory::lemma1: return lemma1;
    case PruneCategory::lemma2: return lemma2;
    case PruneCategory::lemma3: return lemma3;
    case PruneCategory::lemma4: return lemma4;
    default: return zone;
  }
}
const AuditResults::Tally& AuditResults::of(PruneCategory c) const {
  return const_cast<AuditResults*>(this)->of(c);
}

void write_merge_log(const std::string& path, const std::vector<MergeLogEntry>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write merge log: " + path);
  for (const MergeLogEntry& e : log) {
    nlohmann::json j;
    j["t"] = e.t;
    j["a"] = e.a;
    j["b"] = e.b;
    j["delta"] = e.delta;
    j["energy"] = e.energy;
    out << j.dump() << "\n";
  }
}

std::vector<MergeLogEntry> read_merge_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read merge log: " + path);
  std::vector<MergeLogEntry> log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    log.push_back({j.at("t").get<std::uint64_t>(), j.at("a").get<std::uint32_t>(),
                   j.at("b").get<std::uint32_t>(), j.at("delta").get<double>(),
                   j.at("energy").get<double>()});
  }
  return log;
}

LabelVolume replay_merge_log(const LabelVolume& sv, const std::vector<MergeLogEntry>& log,
                             double tau) {
  UnionFind uf(sv.max_label() + 1);
  for (const MergeLogEntry& e : log) {
    if (!(e.delta < tau)) break;  // prefix truncation at the first delta >= tau
    std::uint32_t ra = uf.find(e.a), rb = uf.find(e.b);
    if (ra != rb) uf.unite_into(std::min(ra, rb), std::max(ra, rb));
  }
  LabelVolume out(sv.shape());
  for (std::size_t i = 0; i < sv.shape().voxels(); ++i)
    out.at(i) = sv.at(i) == 0 ? 0 : uf.find(sv.at(i));
  return out;
}

namespace {

/// Fresh flood-fill connected components over a region extent, labeling by a
/// caller-provided segment function.  Independent of RegionState; this is the
/// reference connectivity used by the naive energy and the pruning audit.
struct ExtentCC {
  Box3i extent;
  VolumeShape vol;
  std::vector<std::int32_t> comp;

  std::size_t local(Vec3i p) const {
    return std::size_t(p.x - extent.lo.x) +
           std::size_t(extent.hi.x - extent.lo.x) *
               ((p.y - extent.lo.y) +
                std::size_t(extent.hi.y - extent.lo.y) * (p.z - extent.lo.z));
  }

  template <typename LabelFn>
  void build(const VolumeShape& shape, Box3i ext, LabelFn&& label) {
    vol = shape;
    extent = ext;
    comp.assign(std::size_t(extent.volume()), -1);
    std::vector<std::size_t> stack;
    std::vector<Vec3i> pos_stack;
    std::int32_t next = 0;
    const Vec3i steps[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int z = extent.lo.z; z < extent.hi.z; ++z)
      for (int y = extent.lo.y; y < extent.hi.y; ++y)
        for (int x = extent.lo.x; x < extent.hi.x; ++x) {
          Vec3i p{x, y, z};
          if (comp[local(p)] >= 0) continue;
          std::uint32_t l = label(p);
          if (l == 0) continue;
          std::int32_t id = next++;
          comp[local(p)] = id;
          pos_stack.push_back(p);
          while (!pos_stack.empty()) {
            Vec3i q = pos_stack.back();
            pos_stack.pop_back();
            for (const Vec3i& d : steps) {
              Vec3i r = q + d;
              if (!extent.contains(r)) continue;
              if (comp[local(r)] >= 0) continue;
              if (label(r) != l) continue;
              comp[local(r)] = id;
              pos_stack.push_back(r);
            }
          }
        }
    (void)stack;
  }

  void bits_at(const DescriptorType& dt, Vec3i x, std::uint64_t* out) const {
    for (int w = 0; w < dt.words(); ++w) out[w] = 0;
    for (int i = 0; i < dt.k; ++i) {
      Vec3i p = x + dt.pairs[i].a;
      if (!vol.inside(p)) continue;
      std::int32_t cp = comp[local(p)];
      if (cp < 0) continue;
      Vec3i q = x + dt.pairs[i].b;
      if (!vol.inside(q)) continue;
      std::int32_t cq = comp[local(q)];
      if (cq < 0) continue;
      if (cp == cq) out[i >> 6] |= std::uint64_t(1) << (i & 63);
    }
  }
};

/// Collapses a segment id through an optional list of merge groups.
struct GroupRemap {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> map;

  explicit GroupRemap(const std::vector<std::vector<std::uint32_t>>& groups) {
    for (const auto& g : groups) {
      std::uint32_t rep = *std::min_element(g.begin(), g.end());
      for (std::uint32_t s : g)
        if (s != rep) map.push_back({s, rep});
    }
  }
  std::uint32_t resolve(std::uint32_t s) const {
    for (const auto& [from, to] : map)
      if (from == s) return to;
    return s;
  }
};

}  // namespace

AgglomerationEngine::AgglomerationEngine(const LabelVolume& sv, std::vector<DescriptorType> types,
                                         std::vector<EnergyModel> models,
                                         const FeatureProvider& provider, Options options)
    : sv_(sv), graph_(build_region_graph(sv)), models_(std::move(models)), options_(options) {
  if (types.size() != models_.size())
    throw std::invalid_argument("one energy model per descriptor type required");
  feature_dim_ = provider.dim();
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (models_[i].k() != types[i].k)
      throw std::invalid_argument("model descriptor width does not match type");
    if (models_[i].feature_dim() != feature_dim_)
      throw std::invalid_argument("model feature dim does not match provider");
  }

  const VolumeShape& shape = sv_.shape();
  features_.resize(shape.voxels() * feature_dim_);
  for (std::size_t i = 0; i < shape.voxels(); ++i)
    provider.feature_at(shape.position(i), features_.data() + i * feature_dim_);

  types_ = build_type_indexes(types, sv_, graph_.segments());

  energy_cache_.resize(types_.size());
  energy_ = 0.0;
  std::uint64_t total_centers = 0;
  for (std::size_t ti = 0; ti < types_.size(); ++ti) {
    TypeIndex& T = types_[ti];
    energy_cache_[ti].resize(T.regions.size());
    for (std::size_t cell = 0; cell < T.regions.size(); ++cell) {
      std::size_t n = T.centers[cell];
      counters_.descriptors_computed += n;  // cache construction in TypeIndex
      total_centers += n;
      energy_cache_[ti][cell].resize(n);
      Box3i b = T.regions[cell].centers();
      double region_sum = 0.0;
      for (int z = b.lo.z; z < b.hi.z; ++z)
        for (int y = b.lo.y; y < b.hi.y; ++y)
          for (int x = b.lo.x; x < b.hi.x; ++x) {
            Vec3i p{x, y, z};
            std::size_t lin = T.center_index(int(cell), p);
            double v = eval_model(int(ti), p, T.bits_at(int(cell), lin));
            energy_cache_[ti][cell][lin] = v;
            region_sum += v;
          }
      energy_ += region_sum;
    }
  }

  for (const SegPair& e : graph_.edge_list()) deltas_[e] = compute_delta_full(e);
  counters_.naive_descriptor_terms += (deltas_.size() + 1) * total_centers;
}

void AgglomerationEngine::enable_audit(AuditConfig cfg) {
  audit_enabled_ = true;
  audit_cfg_ = cfg;
  audit_ = AuditResults{};
}

const float* AgglomerationEngine::features_at(Vec3i x) const {
  return features_.data() + sv_.shape().index(x) * feature_dim_;
}

double AgglomerationEngine::eval_model(int type_index, Vec3i x, const std::uint64_t* bits) {
  ++counters_.model_evaluations;
  return models_[type_index].evaluate(bits, features_at(x));
}

double AgglomerationEngine::compute_delta_full(SegPair e) {
  double total = 0.0;
  std::vector<std::uint64_t> zmask;
  std::uint64_t post[kMaxDescriptorWords];
  std::vector<std::uint32_t> incident;
  for (int ti = 0; ti < int(types_.size()); ++ti) {
    TypeIndex& T = types_[ti];
    bool center_based = T.dt.kind == DescriptorKind::center_based;
    int words = T.dt.words();
    for (int cell = 0; cell < int(T.regions.size()); ++cell) {
      RegionState& rs = T.regions[cell];
      if (!rs.pair_active(e)) {
        counters_.pruned_lemma1 += T.centers[cell];
        audit_skip_region(PruneCategory::lemma1, ti, cell, e, std::nullopt);
        continue;
      }
      zmask.assign(rs.zone_words(), 0);
      rs.active_zone_mask({{e.first, e.second}}, zmask.data());
      counters_.pruned_zone += T.centers_outside_zones(cell, zmask.data());
      audit_skip_zones(PruneCategory::zone, ti, cell, e, std::nullopt, zmask.data());
      RegionState::Overlay ov = rs.make_overlay({{e.first, e.second}});
      if (center_based) rs.incident_components(e, incident);
      double local = 0.0;
      T.for_centers_in_zones(cell, zmask.data(), [&](Vec3i x, std::size_t lin) {
        if (center_based) {
          std::int32_t f = rs.fragment_at(x);
          bool ok = f >= 0 && std::binary_search(incident.begin(), incident.end(),
                                                 rs.component_of(std::uint32_t(f)));
          if (!ok) {
            ++counters_.pruned_lemma3;
            audit_skip(PruneCategory::lemma3, ti, cell, e, std::nullopt, x);
            return;
          }
        }
        rs.compute_bits(T.dt, x, &ov, post);
        ++counters_.descriptors_computed;
        const std::uint64_t* pre = T.bits_at(cell, lin);
        if (bits_equal(pre, post, words)) {
          ++counters_.pruned_lemma2;
          audit_skip(PruneCategory::lemma2, ti, cell, e, std::nullopt, x);
          return;
        }
        local += eval_model(ti, x, post) - energy_cache_[ti][cell][lin];
      });
      total += local;
    }
  }
  return total;
}

std::optional<std::pair<SegPair, double>> AgglomerationEngine::best_action() const {
  if (deltas_.empty()) return std::nullopt;
  const SegPair* best = nullptr;
  double best_delta = 0.0;
  std::uint64_t best_contact = 0;
  SegPair best_canon{0, 0};
  for (const auto& [e, d] : deltas_) {
    const RegionGraph::EdgeInfo& info = graph_.edge(e.first, e.second);
    bool better;
    if (!best) {
      better = true;
    } else if (d != best_delta) {
      better = d < best_delta;
    } else if (info.contact != best_contact) {
      better = info.contact > best_contact;
    } else {
      better = info.canonical < best_canon;
    }
    if (better) {
      best = &e;
      best_delta = d;
      best_contact = info.contact;
      best_canon = info.canonical;
    }
  }
  return std::make_pair(*best, best_delta);
}

MergeLogEntry AgglomerationEngine::commit(SegPair e_in) {
  std::uint32_t A = graph_.find(e_in.first), B = graph_.find(e_in.second);
  if (A == B) throw std::invalid_argument("segments already merged");
  SegPair e_t = make_pair_key(A, B);
  A = e_t.first;
  B = e_t.second;
  auto dit = deltas_.find(e_t);
  if (dit == deltas_.end()) throw std::invalid_argument("merging non-adjacent segments");
  double delta_t = dit->second;
  SegPair canon = graph_.edge(A, B).canonical;
  std::uint32_t new_root = std::min(A, B);
  std::uint64_t edge_count = deltas_.size();

  std::vector<std::uint32_t> nbrA = graph_.neighbors(A), nbrB = graph_.neighbors(B);
  std::vector<SegPair> all_edges;
  if (audit_enabled_) {
    all_edges.reserve(deltas_.size());
    for (const auto& [key, d] : deltas_) all_edges.push_back(key);
  }

  struct Cand {
    SegPair e;
    bool shared;
  };
  std::vector<Cand> cands_base;
  for (std::uint32_t X : nbrA)
    if (X != B) cands_base.push_back({make_pair_key(A, X), true});
  for (std::uint32_t X : nbrB)
    if (X != A) cands_base.push_back({make_pair_key(B, X), true});
  std::sort(cands_base.begin(), cands_base.end(),
            [](const Cand& a, const Cand& b) { return a.e < b.e; });

  std::map<SegPair, double> updates;

  std::vector<std::uint64_t> zm_t, zm_e, zm_gate;
  std::vector<std::uint64_t> r0t_bits;
  std::vector<std::uint8_t> r0t_known;
  std::vector<double> e0t;
  std::uint64_t re0[kMaxDescriptorWords], ret[kMaxDescriptorWords];
  std::vector<std::int32_t> vis_offset;
  std::vector<std::int32_t> vis_len;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> vis_pool;  // (comp root, segment)

  for (int ti = 0; ti < int(types_.size()); ++ti) {
    TypeIndex& T = types_[ti];
    bool center_based = T.dt.kind == DescriptorKind::center_based;
    int words = T.dt.words();
    for (int cell = 0; cell < int(T.regions.size()); ++cell) {
      RegionState& rs = T.regions[cell];
      std::uint64_t ncent = T.centers[cell];
      bool hasA = rs.has_segment(A), hasB = rs.has_segment(B);
      if (!hasA && !hasB) {
        counters_.pruned_lemma1 += (edge_count - 1) * ncent;
        if (audit_enabled_)
          for (const SegPair& e : all_edges)
            if (e != e_t) audit_skip_region(PruneCategory::lemma1, ti, cell, e, e_t);
        continue;
      }
      bool t_active = rs.pair_active(e_t);

      std::vector<Cand> cands = cands_base;
      std::uint64_t disjoint_active = 0;
      if (t_active) {
        for (const SegPair& p : rs.active_pairs()) {
          if (p == e_t) continue;
          if (p.first == A || p.first == B || p.second == A || p.second == B) continue;
          cands.push_back({p, false});
          ++disjoint_active;
        }
      }
      std::uint64_t disjoint_total = edge_count - 1 - cands_base.size();
      counters_.pruned_lemma1 += (disjoint_total - disjoint_active) * ncent;
      if (audit_enabled_) {
        for (const SegPair& e : all_edges) {
          if (e == e_t) continue;
          if (e.first == A || e.first == B || e.second == A || e.second == B) continue;
          if (t_active && rs.pair_active(e)) continue;
          audit_skip_region(PruneCategory::lemma1, ti, cell, e, e_t);
        }
      }

      zm_t.assign(rs.zone_words(), 0);
      RegionState::Overlay ov_t;
      if (t_active) {
        rs.active_zone_mask({{A, B}}, zm_t.data());
        ov_t = rs.make_overlay({{A, B}});
      }

      r0t_known.assign(ncent, 0);
      r0t_bits.assign(ncent * words, 0);
      e0t.assign(ncent, std::numeric_limits<double>::quiet_NaN());
      vis_offset.assign(ncent, -1);
      vis_len.assign(ncent, 0);
      vis_pool.clear();

      auto get_r0t = [&](Vec3i x, std::size_t lin) -> const std::uint64_t* {
        if (!t_active) return T.bits_at(cell, lin);
        std::uint64_t* slot = r0t_bits.data() + lin * words;
        if (!r0t_known[lin]) {
          rs.compute_bits(T.dt, x, &ov_t, slot);
          ++counters_.descriptors_computed;
          r0t_known[lin] = 1;
        }
        return slot;
      };
      auto get_e0t = [&](Vec3i x, std::size_t lin, const std::uint64_t* r0t,
                         const std::uint64_t* r00) -> double {
        if (std::isnan(e0t[lin])) {
          if (bits_equal(r0t, r00, words)) {
            e0t[lin] = energy_cache_[ti][cell][lin];
          } else {
            e0t[lin] = eval_model(ti, x, r0t);
          }
        }
        return e0t[lin];
      };
      auto get_vis = [&](Vec3i x, std::size_t lin) -> std::pair<const std::pair<std::uint32_t, std::uint32_t>*, int> {
        if (vis_offset[lin] < 0) {
          vis_offset[lin] = std::int32_t(vis_pool.size());
          int h = T.dt.halo();
          Box3i bb{{x.x - h, x.y - h, x.z - h}, {x.x + h + 1, x.y + h + 1, x.z + h + 1}};
          thread_local std::vector<std::uint32_t> roots;
          rs.visible_components(bb, roots);
          for (std::uint32_t r : roots)
            vis_pool.push_back({r, rs.component_segment(r, graph_.segments())});
          vis_len[lin] = std::int32_t(roots.size());
        }
        return {vis_pool.data() + vis_offset[lin], vis_len[lin]};
      };

      for (const Cand& c : cands) {
        const SegPair& e = c.e;
        std::vector<std::vector<std::uint32_t>> groups_e, groups_te;
        std::uint32_t union_set[4];
        int union_n = 0;
        if (c.shared) {
          std::uint32_t shared_seg = (e.first == A || e.first == B) ? e.first : e.second;
          std::uint32_t X = (shared_seg == e.first) ? e.second : e.first;
          std::uint32_t other = (shared_seg == A) ? B : A;
          SegPair third = make_pair_key(other, X);
          bool e_here = rs.pair_active(e);
          bool third_here = rs.pair_active(third);
          // Either closure pairing must differ locally for a nonzero term:
          // merging e after e_t also turns on the third pair's contacts.
          bool gate = (e_here || third_here) && (t_active || third_here);
          if (!gate) {
            counters_.pruned_lemma1 += ncent;
            audit_skip_region(PruneCategory::lemma1, ti, cell, e, e_t);
            continue;
          }
          if (center_based) {
            // per-x segment gate below
          }
          groups_e = {{e.first, e.second}};
          groups_te = {{A, B, X}};
          union_set[union_n++] = A;
          union_set[union_n++] = B;
          union_set[union_n++] = X;
          zm_gate.assign(rs.zone_words(), 0);
          rs.active_zone_mask(groups_te, zm_gate.data());
        } else {
          if (center_based) {
            // Disjoint center-based second differences vanish: the component
            // containing x cannot belong to both closures.
            counters_.pruned_lemma3 += ncent;
            audit_skip_region(PruneCategory::lemma3, ti, cell, e, e_t);
            continue;
          }
          groups_e = {{e.first, e.second}};
          groups_te = {{A, B}, {e.first, e.second}};
          union_set[union_n++] = A;
          union_set[union_n++] = B;
          union_set[union_n++] = e.first;
          union_set[union_n++] = e.second;
          zm_e.assign(rs.zone_words(), 0);
          rs.active_zone_mask({{e.first, e.second}}, zm_e.data());
          zm_gate.assign(rs.zone_words(), 0);
          for (int w = 0; w < rs.zone_words(); ++w) zm_gate[w] = zm_e[w] & zm_t[w];
        }
        bool any_zone = false;
        for (int w = 0; w < rs.zone_words(); ++w) any_zone |= zm_gate[w] != 0;
        counters_.pruned_zone += T.centers_outside_zones(cell, zm_gate.data());
        audit_skip_zones(PruneCategory::zone, ti, cell, e, e_t, zm_gate.data());
        if (!any_zone) continue;

        RegionState::Overlay ov_e = rs.make_overlay(groups_e);
        RegionState::Overlay ov_te = rs.make_overlay(groups_te);

        double local = 0.0;
        T.for_centers_in_zones(cell, zm_gate.data(), [&](Vec3i x, std::size_t lin) {
          if (center_based) {
            std::int32_t f = rs.fragment_at(x);
            bool ok = false;
            if (f >= 0) {
              std::uint32_t seg =
                  rs.component_segment(rs.component_of(std::uint32_t(f)), graph_.segments());
              for (int i = 0; i < union_n && !ok; ++i) ok = union_set[i] == seg;
            }
            if (!ok) {
              ++counters_.pruned_lemma3;
              audit_skip(PruneCategory::lemma3, ti, cell, e, e_t, x);
              return;
            }
          }
          auto [vis, nvis] = get_vis(x, lin);
          int cnt = 0;
          for (int i = 0; i < nvis; ++i)
            for (int u = 0; u < union_n; ++u)
              if (vis[i].second == union_set[u]) {
                ++cnt;
                break;
              }
          if (cnt < 2) {
            ++counters_.pruned_lemma4;
            audit_skip(PruneCategory::lemma4, ti, cell, e, e_t, x);
            return;
          }
          const std::uint64_t* r00 = T.bits_at(cell, lin);
          const std::uint64_t* r0t = get_r0t(x, lin);
          rs.compute_bits(T.dt, x, &ov_e, re0);
          rs.compute_bits(T.dt, x, &ov_te, ret);
          counters_.descriptors_computed += 2;
          bool t_eq = bits_equal(r0t, r00, words);
          bool e_eq = bits_equal(re0, r00, words);
          bool te_eq_0t = bits_equal(ret, r0t, words);
          bool te_eq_e0 = bits_equal(ret, re0, words);
          if ((e_eq && te_eq_0t) || (t_eq && te_eq_e0)) {
            ++counters_.pruned_lemma2;
            audit_skip(PruneCategory::lemma2, ti, cell, e, e_t, x);
            return;  // all four terms cancel exactly
          }
          double E00 = energy_cache_[ti][cell][lin];
          double E0t = get_e0t(x, lin, r0t, r00);
          double Ee0;
          if (e_eq) {
            Ee0 = E00;
            ++counters_.pruned_lemma2;
          } else if (bits_equal(re0, r0t, words)) {
            Ee0 = E0t;
            ++counters_.pruned_lemma2;
          } else {
            Ee0 = eval_model(ti, x, re0);
          }
          double Eret;
          if (te_eq_0t) {
            Eret = E0t;
            ++counters_.pruned_lemma2;
          } else if (te_eq_e0) {
            Eret = Ee0;
            ++counters_.pruned_lemma2;
          } else if (bits_equal(ret, r00, words)) {
            Eret = E00;
            ++counters_.pruned_lemma2;
          } else {
            Eret = eval_model(ti, x, ret);
          }
          local += (Eret - E0t) - (Ee0 - E00);
        });
        updates[e] += local;
      }

      // Refresh caches at positions whose descriptor changed under the merge.
      if (t_active) {
        T.for_centers_in_zones(cell, zm_t.data(), [&](Vec3i x, std::size_t lin) {
          if (center_based) {
            std::int32_t f = rs.fragment_at(x);
            if (f < 0) return;
            std::uint32_t seg =
                rs.component_segment(rs.component_of(std::uint32_t(f)), graph_.segments());
            if (seg != A && seg != B) return;
          }
          const std::uint64_t* r0t = get_r0t(x, lin);
          std::uint64_t* pre = T.bits_at(cell, lin);
          if (bits_equal(r0t, pre, words)) return;
          double v = get_e0t(x, lin, r0t, pre);
          energy_cache_[ti][cell][lin] = v;
          std::memcpy(pre, r0t, std::size_t(words) * 8);
        });
      }

      rs.apply_merge(A, B, new_root);
    }
  }

  for (const auto& [e, d] : updates) deltas_.at(e) += d;

  // Graph contraction: unify parallel edges and re-key deltas.
  deltas_.erase(e_t);
  std::set<std::uint32_t> others;
  for (std::uint32_t X : nbrA)
    if (X != B) others.insert(X);
  for (std::uint32_t X : nbrB)
    if (X != A) others.insert(X);

  std::map<SegPair, double> rekeyed;
  std::vector<SegPair> recompute;
  for (std::uint32_t X : others) {
    auto itA = deltas_.find(make_pair_key(A, X));
    auto itB = deltas_.find(make_pair_key(B, X));
    double val = 0.0;
    if (itA != deltas_.end() && itB != deltas_.end()) {
      double dA = itA->second, dB = itB->second;
      double scale = std::max({1.0, std::fabs(dA), std::fabs(dB)});
      if (std::fabs(dA - dB) > options_.parallel_edge_tolerance * scale) {
        ++counters_.parallel_edge_recomputes;
        recompute.push_back(make_pair_key(new_root, X));
      } else {
        SegPair cA = graph_.edge(A, X).canonical;
        SegPair cB = graph_.edge(B, X).canonical;
        val = (cA <= cB) ? dA : dB;
      }
    } else {
      val = itA != deltas_.end() ? itA->second : itB->second;
    }
    if (itA != deltas_.end()) deltas_.erase(itA);
    if (itB != deltas_.end()) deltas_.erase(itB);
    rekeyed[make_pair_key(new_root, X)] = val;
  }
  graph_.merge(A, B);
  for (const auto& [key, val] : rekeyed) deltas_[key] = val;
  for (const SegPair& p : recompute) deltas_[p] = compute_delta_full(p);

  energy_ += delta_t;
  MergeLogEntry entry{counters_.steps, canon.first, canon.second, delta_t, energy_};
  ++counters_.steps;

  std::uint64_t total_centers = 0;
  for (const TypeIndex& T : types_)
    for (std::size_t c : T.centers) total_centers += c;
  if (!deltas_.empty())
    counters_.naive_descriptor_terms += (deltas_.size() + 1) * total_centers;
  return entry;
}

std::vector<MergeLogEntry> AgglomerationEngine::run(double tau, std::uint64_t max_steps) {
  std::vector<MergeLogEntry> log;
  while (log.size() < max_steps) {
    auto best = best_action();
    if (!best) break;
    if (!(best->second < tau)) break;
    log.push_back(commit(best->first));
  }
  return log;
}

LabelVolume AgglomerationEngine::current_segment_volume() const {
  LabelVolume out(sv_.shape());
  for (std::size_t i = 0; i < sv_.shape().voxels(); ++i)
    out.at(i) = sv_.at(i) == 0 ? 0 : graph_.find(sv_.at(i));
  return out;
}

void AgglomerationEngine::naive_region_bits(int type_index, int cell, Vec3i x,
                                            const std::vector<std::vector<std::uint32_t>>& groups,
                                            std::uint64_t* out) const {
  const TypeIndex& T = types_[type_index];
  GroupRemap remap(groups);
  ExtentCC cc;
  cc.build(sv_.shape(), T.regions[cell].extent(), [&](Vec3i p) -> std::uint32_t {
    std::uint32_t sv = sv_.at(p);
    if (sv == 0) return 0;
    return remap.resolve(graph_.find(sv));
  });
  cc.bits_at(T.dt, x, out);
}

bool AgglomerationEngine::verify_skip_zero(PruneCategory cat, int type_index, int cell, SegPair e,
                                           std::optional<SegPair> e_commit, Vec3i center) const {
  (void)cat;
  std::uint64_t b0[kMaxDescriptorWords], b1[kMaxDescriptorWords];
  int words = types_[type_index].dt.words();
  if (!e_commit) {
    naive_region_bits(type_index, cell, center, {}, b0);
    naive_region_bits(type_index, cell, center, {{e.first, e.second}}, b1);
    return bits_equal(b0, b1, words);
  }
  SegPair t = *e_commit;
  bool shared = e.first == t.first || e.first == t.second || e.second == t.first ||
                e.second == t.second;
  std::vector<std::vector<std::uint32_t>> g_te;
  if (shared) {
    std::vector<std::uint32_t> g{e.first, e.second, t.first, t.second};
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    g_te = {g};
  } else {
    g_te = {{t.first, t.second}, {e.first, e.second}};
  }
  std::uint64_t r00[kMaxDescriptorWords], r0t[kMaxDescriptorWords], re0[kMaxDescriptorWords],
      ret[kMaxDescriptorWords];
  naive_region_bits(type_index, cell, center, {}, r00);
  naive_region_bits(type_index, cell, center, {{t.first, t.second}}, r0t);
  naive_region_bits(type_index, cell, center, {{e.first, e.second}}, re0);
  naive_region_bits(type_index, cell, center, g_te, ret);
  (void)b0;
  (void)b1;
  bool pairing_e = bits_equal(re0, r00, words) && bits_equal(ret, r0t, words);
  bool pairing_t = bits_equal(r0t, r00, words) && bits_equal(ret, re0, words);
  return pairing_e || pairing_t;
}

void AgglomerationEngine::audit_skip(PruneCategory cat, int type_index, int cell, SegPair e,
                                     std::optional<SegPair> e_commit, Vec3i center) {
  if (!audit_enabled_) return;
  AuditResults::Tally& tally = audit_.of(cat);
  if (tally.checked >= audit_cfg_.max_per_category) return;
  std::uint64_t h1 = (std::uint64_t(type_index) << 48) | (std::uint64_t(cell) << 16) |
                     (counters_.steps & 0xffff);
  std::uint64_t h2 = (std::uint64_t(e.first) << 32) | e.second;
  std::uint64_t h3 = e_commit ? (std::uint64_t(e_commit->first) << 32) | e_commit->second : 0;
  std::uint64_t h4 = (std::uint64_t(std::uint32_t(center.x)) << 42) |
                     (std::uint64_t(std::uint32_t(center.y)) << 21) |
                     std::uint64_t(std::uint32_t(center.z));
  if (hash_to_unit(audit_cfg_.seed, h1, h2, h3, h4) >= audit_cfg_.sample_prob) return;
  bool zero = verify_skip_zero(cat, type_index, cell, e, e_commit, center);
  ++tally.checked;
  if (!zero) ++tally.nonzero;
}

void AgglomerationEngine::audit_skip_region(PruneCategory cat, int type_index, int cell, SegPair e,
                                            std::optional<SegPair> e_commit) {
  if (!audit_enabled_) return;
  AuditResults::Tally& tally = audit_.of(cat);
  if (tally.checked >= audit_cfg_.max_per_category) return;
  std::uint64_t h1 = (std::uint64_t(type_index) << 48) | (std::uint64_t(cell) << 16) |
                     (counters_.steps & 0xffff);
  std::uint64_t h2 = (std::uint64_t(e.first) << 32) | e.second;
  std::uint64_t h3 = e_commit ? (std::uint64_t(e_commit->first) << 32) | e_commit->second : 0;
  double u = hash_to_unit(audit_cfg_.seed ^ 0x51ce5ca1, h1, h2, h3, 0);
  if (u >= audit_cfg_.sample_prob) return;
  // Sample one center of the region for the force-computed check.
  const TypeIndex& T = types_[type_index];
  Box3i b = T.regions[cell].centers();
  std::uint64_t n = std::uint64_t(b.volume());
  if (n == 0) return;
  std::uint64_t pick =
      std::uint64_t(hash_to_unit(audit_cfg_.seed ^ 0x9e3779b9, h1, h2, h3, 1) * double(n));
  if (pick >= n) pick = n - 1;
  int bx = b.hi.x - b.lo.x, by = b.hi.y - b.lo.y;
  Vec3i center{int(pick % bx) + b.lo.x, int((pick / bx) % by) + b.lo.y,
               int(pick / (std::uint64_t(bx) * by)) + b.lo.z};
  bool zero = verify_skip_zero(cat, type_index, cell, e, e_commit, center);
  ++tally.checked;
  if (!zero) ++tally.nonzero;
}

void AgglomerationEngine::audit_skip_zones(PruneCategory cat, int type_index, int cell, SegPair e,
                                           std::optional<SegPair> e_commit,
                                           const std::uint64_t* gate) {
  if (!audit_enabled_) return;
  AuditResults::Tally& tally = audit_.of(cat);
  if (tally.checked >= audit_cfg_.max_per_category) return;
  std::uint64_t h1 = (std::uint64_t(type_index) << 48) | (std::uint64_t(cell) << 16) |
                     (counters_.steps & 0xffff);
  std::uint64_t h2 = (std::uint64_t(e.first) << 32) | e.second;
  std::uint64_t h3 = e_commit ? (std::uint64_t(e_commit->first) << 32) | e_commit->second : 0;
  if (hash_to_unit(audit_cfg_.seed ^ 0x20e5a11, h1, h2, h3, 2) >= audit_cfg_.sample_prob) return;
  // Pick one center from the complement zones.
  const RegionState& rs = types_[type_index].regions[cell];
  std::vector<int> complement;
  for (int z = 0; z < rs.zone_count(); ++z) {
    if (gate[z >> 6] >> (z & 63) & 1) continue;
    if (!rs.zone_center_box(z).empty()) complement.push_back(z);
  }
  if (complement.empty()) return;
  std::uint64_t zi = std::uint64_t(hash_to_unit(audit_cfg_.seed ^ 0x7ab1e, h1, h2, h3, 3) *
                                   double(complement.size()));
  if (zi >= complement.size()) zi = complement.size() - 1;
  Box3i b = rs.zone_center_box(complement[zi]);
  std::uint64_t n = std::uint64_t(b.volume());
  std::uint64_t pick =
      std::uint64_t(hash_to_unit(audit_cfg_.seed ^ 0xfeed, h1, h2, h3, 4) * double(n));
  if (pick >= n) pick = n - 1;
  int bx = b.hi.x - b.lo.x, by = b.hi.y - b.lo.y;
  Vec3i center{int(pick % bx) + b.lo.x, int((pick / bx) % by) + b.lo.y,
               int(pick / (std::uint64_t(bx) * by)) + b.lo.z};
  bool zero = verify_skip_zero(cat, type_index, cell, e, e_commit, center);
  ++tally.checked;
  if (!zero) ++tally.nonzero;
}

double AgglomerationEngine::naive_delta(SegPair e) const {
  std::uint32_t a = graph_.find(e.first), b = graph_.find(e.second);
  double total = 0.0;
  std::uint64_t b0[kMaxDescriptorWords], b1[kMaxDescriptorWords];
  for (int ti = 0; ti < int(types_.size()); ++ti) {
    const TypeIndex& T = types_[ti];
    for (int cell = 0; cell < int(T.regions.size()); ++cell) {
      const RegionState& rs = T.regions[cell];
      ExtentCC cc0, cc1;
      cc0.build(sv_.shape(), rs.extent(), [&](Vec3i p) -> std::uint32_t {
        std::uint32_t sv = sv_.at(p);
        return sv == 0 ? 0 : graph_.find(sv);
      });
      cc1.build(sv_.shape(), rs.extent(), [&](Vec3i p) -> std::uint32_t {
        std::uint32_t sv = sv_.at(p);
        if (sv == 0) return 0;
        std::uint32_t s = graph_.find(sv);
        return (s == a || s == b) ? std::min(a, b) : s;
      });
      Box3i blk = rs.centers();
      for (int z = blk.lo.z; z < blk.hi.z; ++z)
        for (int y = blk.lo.y; y < blk.hi.y; ++y)
          for (int x = blk.lo.x; x < blk.hi.x; ++x) {
            Vec3i p{x, y, z};
            cc0.bits_at(T.dt, p, b0);
            cc1.bits_at(T.dt, p, b1);
            if (bits_equal(b0, b1, T.dt.words())) continue;
            total += models_[ti].evaluate(b1, features_at(p)) -
                     models_[ti].evaluate(b0, features_at(p));
          }
    }
  }
  return total;
}

double AgglomerationEngine::naive_global_energy(const LabelVolume& segmentation,
                                                const std::vector<DescriptorType>& types,
                                                const std::vector<EnergyModel>& models,
                                                const FeatureProvider& provider) {
  if (types.size() != models.size()) throw std::invalid_argument("types/models size mismatch");
  double total = 0.0;
  std::uint64_t bits[kMaxDescriptorWords];
  std::vector<float> feat(provider.dim());
  for (std::size_t ti = 0; ti < types.size(); ++ti) {
    RegionTiling tiling = tile_regions(segmentation.shape(), types[ti]);
    for (int cell = 0; cell < tiling.cell_count(); ++cell) {
      ExtentCC cc;
      cc.build(segmentation.shape(), tiling.extent(cell),
               [&](Vec3i p) { return segmentation.at(p); });
      Box3i blk = tiling.center_block(cell);
      for (int z = blk.lo.z; z < blk.hi.z; ++z)
        for (int y = blk.lo.y; y < blk.hi.y; ++y)
          for (int x = blk.lo.x; x < blk.hi.x; ++x) {
            Vec3i p{x, y, z};
            cc.bits_at(types[ti], p, bits);
            provider.feature_at(p, feat.data());
            total += models[ti].evaluate(bits, feat.data());
          }
    }
  }
  return total;
}

}  // namespace celis
