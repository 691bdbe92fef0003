#pragma once

#include <memory>
#include <string>
#include <vector>

#include "celis/incremental_engine.hpp"
#include "celis/metrics.hpp"
#include "celis/run_config.hpp"

namespace celis {

struct SweepRow {
  double tau = 0.0;
  SegmentationScores scores;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double best_vi = 0.0;
  double best_rand_f1 = 0.0;
  double best_vi_tau = 0.0;
  double best_rand_f1_tau = 0.0;
};

/// Evaluates the merge log at every threshold: truncate at the first
/// delta >= tau, rebuild labels, score against the ground truth.
SweepResult threshold_sweep(const LabelVolume& sv, const std::vector<MergeLogEntry>& log,
                            const LabelVolume& truth, const std::vector<double>& taus);

std::string sweep_to_json(const SweepResult& r);
std::string scores_to_json(const SegmentationScores& s);

/// Builds the configured feature provider (handcrafted needs the affinities).
std::unique_ptr<FeatureProvider> make_feature_provider(const FeatureProviderSpec& spec,
                                                       const AffinityVolume* affinities);

}  // namespace celis
