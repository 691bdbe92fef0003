#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "celis/descriptor.hpp"
#include "celis/energy_model.hpp"
#include "celis/metrics.hpp"
#include "celis/region_graph.hpp"
#include "celis/volume.hpp"

namespace celis {

/// One emitted descriptor-pair example: merging edge e at some rollout state
/// changed the descriptor at a position from bits_pre to bits_post, with
/// signed error change y (VI units) and image features at that position.
struct TrainingExample {
  float y = 0.f;       // signed delta-error of the merge
  float weight = 0.f;  // adjusted sampling weight (after balancing)
  std::vector<std::uint64_t> bits_pre, bits_post;
  std::vector<float> features;
};

/// Weighted sampling without replacement with unbiased subset-sum estimates:
/// item priority q = w/u with u uniform in (0,1]; the m largest-priority
/// items are kept and the (m+1)-th priority becomes the adjustment threshold.
class PrioritySampler {
 public:
  explicit PrioritySampler(std::size_t capacity);

  void offer(TrainingExample ex, double abs_weight, double u);
  std::size_t stream_count() const { return seen_; }

  /// Kept items with weight set to max(|w|, threshold).
  std::vector<TrainingExample> take();

 private:
  struct Item {
    double priority;
    double abs_weight;
    std::uint64_t seq;
    TrainingExample ex;
  };
  std::size_t cap_;
  std::size_t seen_ = 0;
  std::vector<Item> heap_;  // min-heap by (priority, seq), size <= cap_+1
};

/// Rescales weights so the total over y<0 examples equals the total over y>0
/// examples (each class scaled to the mean of the two totals).  Throws if a
/// class is empty.
void balance_classes(std::vector<TrainingExample>& sample);

struct ExpertStep {
  SegPair canonical{0, 0};  // original supervoxel pair of the merged edge
  double delta_error = 0.0;
};

struct ExpertRollout {
  std::vector<ExpertStep> steps;
  LabelVolume final_labels;
  double initial_vi = 0.0;
  double final_vi = 0.0;
};

/// Greedy agglomeration minimizing VI against the ground truth; merges while
/// the best delta is negative.  Serves as the expert policy for training and
/// as the oracle baseline for evaluation.
ExpertRollout expert_rollout(const LabelVolume& sv, const LabelVolume& truth);

struct ExtractionConfig {
  std::size_t samples_per_type = 200000;  // reservoir capacity per type
  std::uint64_t seed = 1;
  bool include_final_state = true;
  int state_stride = 1;  // extract from every k-th rollout state
};

struct ExtractionResult {
  std::vector<std::vector<TrainingExample>> per_type;  // sampled, adjusted weights
  std::vector<std::uint64_t> stream_counts;            // emitted before sampling
  ExpertRollout rollout;
};

/// Runs the expert rollout and, at each visited state, emits an example for
/// every (candidate edge, descriptor type, position) whose descriptor would
/// change, weighted by the edge's exact delta-VI.  Examples are priority
/// sampled per type with separate reservoirs per sign class so neither class
/// starves; call balance_classes before training (after pooling scenes).
ExtractionResult extract_examples(const LabelVolume& sv, const LabelVolume& truth,
                                  const std::vector<DescriptorType>& types,
                                  const FeatureProvider& provider, const ExtractionConfig& cfg);

/// Merges per-type example sets from several extractions (used to pool
/// training scenes before balancing is redone).
void append_examples(std::vector<std::vector<TrainingExample>>& into,
                     const std::vector<std::vector<TrainingExample>>& from);

enum class LossKind { log_loss, signed_linear };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

struct TrainConfig {
  LossKind loss = LossKind::log_loss;
  double learning_rate = 0.1;
  int epochs = 20;
  int batch = 32;
  std::uint64_t seed = 1;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

/// SGD on the two-row objective: each example contributes a post-merge row
/// with its sign and a pre-merge row with the opposite sign.  Inverted
/// dropout is applied after the last hidden layer.  Throws on non-finite
/// loss.
TrainResult train_energy_model(EnergyModel& model, const std::vector<TrainingExample>& examples,
                               const TrainConfig& cfg);

/// Full-batch loss and its analytic gradient with dropout disabled; the
/// gradient layout matches EnergyModel::parameter().
double training_loss(const EnergyModel& model, const std::vector<TrainingExample>& examples,
                     LossKind loss);
std::vector<double> training_loss_gradient(const EnergyModel& model,
                                           const std::vector<TrainingExample>& examples,
                                           LossKind loss);

void write_examples(const std::string& path,
                    const std::vector<std::vector<TrainingExample>>& per_type,
                    const std::vector<DescriptorType>& types, int feature_dim);
std::vector<std::vector<TrainingExample>> read_examples(const std::string& path,
                                                        const std::vector<DescriptorType>& types,
                                                        int* feature_dim_out);

}  // namespace celis
