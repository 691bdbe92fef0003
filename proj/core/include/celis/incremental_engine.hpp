#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "celis/energy_model.hpp"
#include "celis/shape_index.hpp"

namespace celis {

struct EngineCounters {
  std::uint64_t descriptors_computed = 0;
  std::uint64_t model_evaluations = 0;
  /// Descriptor computations a per-step naive recomputation of all deltas
  /// would have needed, accumulated over the run.
  std::uint64_t naive_descriptor_terms = 0;
  std::uint64_t pruned_lemma1 = 0;  // region activity (first and second order)
  std::uint64_t pruned_lemma2 = 0;  // descriptor-equality evaluation skips
  std::uint64_t pruned_lemma3 = 0;  // center-based incidence
  std::uint64_t pruned_lemma4 = 0;  // visibility
  std::uint64_t pruned_zone = 0;    // zone masks
  std::uint64_t parallel_edge_recomputes = 0;
  std::uint64_t steps = 0;

  std::string to_json() const;
};

enum class PruneCategory { lemma1, lemma2, lemma3, lemma4, zone };

struct AuditConfig {
  double sample_prob = 0.02;           // per skipped term
  std::uint64_t seed = 1;
  std::uint64_t max_per_category = 20000;
};

/// Results of the inline pruning audit: every sampled skipped term is
/// force-computed through an independent flood-fill path and checked to be
/// exactly zero (by descriptor equality of the canceling terms).
struct AuditResults {
  struct Tally {
    std::uint64_t checked = 0;
    std::uint64_t nonzero = 0;
  };
  Tally lemma1, lemma2, lemma3, lemma4, zone;

  Tally& of(PruneCategory c);
  const Tally& of(PruneCategory c) const;
  bool all_zero() const {
    return lemma1.nonzero + lemma2.nonzero + lemma3.nonzero + lemma4.nonzero + zone.nonzero == 0;
  }
};

struct MergeLogEntry {
  std::uint64_t t = 0;
  std::uint32_t a = 0, b = 0;  // canonical original supervoxel pair
  double delta = 0.0;
  double energy = 0.0;  // global energy after the merge
};

void write_merge_log(const std::string& path, const std::vector<MergeLogEntry>& log);
std::vector<MergeLogEntry> read_merge_log(const std::string& path);

/// Applies the log prefix with delta < tau to the initial supervoxels.
LabelVolume replay_merge_log(const LabelVolume& sv, const std::vector<MergeLogEntry>& log,
                             double tau);

struct EngineOptions {
  double parallel_edge_tolerance = 1e-6;
};

/// Greedy energy minimization over supervoxel agglomerations with incremental
/// first/second-difference maintenance of all candidate-merge deltas.
class AgglomerationEngine {
 public:
  using Options = EngineOptions;

  AgglomerationEngine(const LabelVolume& sv, std::vector<DescriptorType> types,
                      std::vector<EnergyModel> models, const FeatureProvider& provider,
                      Options options = Options());

  const RegionGraph& graph() const { return graph_; }
  const LabelVolume& supervoxels() const { return sv_; }
  double global_energy() const { return energy_; }
  const std::map<SegPair, double>& deltas() const { return deltas_; }
  const EngineCounters& counters() const { return counters_; }

  void enable_audit(AuditConfig cfg);
  const AuditResults& audit_results() const { return audit_; }

  /// Minimal-delta edge; ties broken by larger contact count, then smaller
  /// canonical supervoxel pair.  Empty when no edges remain.
  std::optional<std::pair<SegPair, double>> best_action() const;

  /// Commits the merge, updating every surviving delta via second
  /// differences, refreshing caches, and contracting the graph.
  MergeLogEntry commit(SegPair e);

  /// Merges best actions while delta < tau and steps < max_steps.
  std::vector<MergeLogEntry> run(double tau, std::uint64_t max_steps);

  /// Current segmentation as a label volume (voxel -> segment root).
  LabelVolume current_segment_volume() const;

  /// Slow reference: E(S + e) - E(S) by full naive recomputation at the
  /// current state.  Test oracle only.
  double naive_delta(SegPair e) const;

  /// Slow reference implementation of the global energy: for every descriptor
  /// type and center position, compute the descriptor by fresh flood fill and
  /// evaluate the model.  Test oracle only.
  static double naive_global_energy(const LabelVolume& segmentation,
                                    const std::vector<DescriptorType>& types,
                                    const std::vector<EnergyModel>& models,
                                    const FeatureProvider& provider);

 private:
  struct RegionScratch;

  double compute_delta_full(SegPair e);
  void audit_skip(PruneCategory cat, int type_index, int cell, SegPair e,
                  std::optional<SegPair> e_commit, Vec3i center);
  void audit_skip_region(PruneCategory cat, int type_index, int cell, SegPair e,
                         std::optional<SegPair> e_commit);
  void audit_skip_zones(PruneCategory cat, int type_index, int cell, SegPair e,
                        std::optional<SegPair> e_commit, const std::uint64_t* gate);
  bool verify_skip_zero(PruneCategory cat, int type_index, int cell, SegPair e,
                        std::optional<SegPair> e_commit, Vec3i center) const;
  void naive_region_bits(int type_index, int cell, Vec3i x,
                         const std::vector<std::vector<std::uint32_t>>& merge_groups,
                         std::uint64_t* out) const;
  double eval_model(int type_index, Vec3i x, const std::uint64_t* bits);
  const float* features_at(Vec3i x) const;

  LabelVolume sv_;
  RegionGraph graph_;
  std::vector<EnergyModel> models_;
  std::vector<TypeIndex> types_;
  std::vector<std::vector<std::vector<double>>> energy_cache_;  // [type][cell][center]
  std::vector<float> features_;  // voxel-major, feature_dim per voxel
  int feature_dim_ = 0;
  std::map<SegPair, double> deltas_;
  double energy_ = 0.0;
  Options options_;
  EngineCounters counters_;

  bool audit_enabled_ = false;
  AuditConfig audit_cfg_;
  AuditResults audit_;
  std::uint64_t audit_draw_ = 0;
};

}  // namespace celis
