#include "celis/pipeline.hpp"

#include <limits>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "celis/volume_io.hpp"

namespace celis {

SweepResult threshold_sweep(const LabelVolume& sv, const std::vector<MergeLogEntry>& log,
                            const LabelVolume& truth, const std::vector<double>& taus) {
  SweepResult result;
  result.best_vi = std::numeric_limits<double>::infinity();
  result.best_rand_f1 = -1.0;
  for (double tau : taus) {
    LabelVolume labels = replay_merge_log(sv, log, tau);
    SweepRow row{tau, score_segmentation(labels, truth)};
    if (row.scores.vi < result.best_vi) {
      result.best_vi = row.scores.vi;
      result.best_vi_tau = tau;
    }
    if (row.scores.rand_f1 > result.best_rand_f1) {
      result.best_rand_f1 = row.scores.rand_f1;
      result.best_rand_f1_tau = tau;
    }
    result.rows.push_back(row);
  }
  return result;
}

std::string scores_to_json(const SegmentationScores& s) {
  nlohmann::json j;
  j["vi"] = s.vi;
  j["rand_f1"] = s.rand_f1;
  j["vi_split"] = s.vi_split;
  j["vi_merge"] = s.vi_merge;
  return j.dump();
}

std::string sweep_to_json(const SweepResult& r) {
  nlohmann::json j;
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepRow& row : r.rows) {
    nlohmann::json rj;
    rj["tau"] = row.tau;
    rj["vi"] = row.scores.vi;
    rj["rand_f1"] = row.scores.rand_f1;
    rj["vi_split"] = row.scores.vi_split;
    rj["vi_merge"] = row.scores.vi_merge;
    rows.push_back(std::move(rj));
  }
  j["rows"] = std::move(rows);
  j["best_vi"] = r.best_vi;
  j["best_vi_tau"] = r.best_vi_tau;
  j["best_rand_f1"] = r.best_rand_f1;
  j["best_rand_f1_tau"] = r.best_rand_f1_tau;
  return j.dump(2);
}

std::unique_ptr<FeatureProvider> make_feature_provider(const FeatureProviderSpec& spec,
                                                       const AffinityVolume* affinities) {
  if (spec.mode == "handcrafted") {
    if (!affinities)
      throw std::invalid_argument("handcrafted feature provider requires affinities");
    return std::make_unique<HandcraftedFeatures>(*affinities);
  }
  if (spec.mode == "file_backed") {
    if (spec.path.empty())
      throw std::invalid_argument("file_backed feature provider requires a path");
    return std::make_unique<FileBackedFeatures>(read_float_field(spec.path));
  }
  throw std::invalid_argument("unknown feature provider mode: " + spec.mode);
}

}  // namespace celis
