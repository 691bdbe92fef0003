#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "celis/descriptor.hpp"
#include "celis/synthetic.hpp"
#include "celis/training.hpp"
#include "celis/watershed.hpp"

namespace celis {

/// Descriptor-type request before pair sampling.
struct DescriptorTypeSpec {
  DescriptorKind kind = DescriptorKind::pairwise;
  int bbox = 9;
  int k = 512;
  int region = 24;
  int zone = 8;
  std::uint64_t seed = 0;
};

struct FeatureProviderSpec {
  std::string mode = "handcrafted";  // or "file_backed"
  std::string path;                  // feature field for file_backed
};

/// Schema-validated run configuration; unknown keys are rejected.
struct RunConfig {
  std::vector<DescriptorTypeSpec> descriptor_types;
  FeatureProviderSpec feature_provider;
  WatershedParams watershed;
  double tau = 0.0;
  std::vector<double> tau_sweep;
  std::uint64_t max_steps = 1000000;
  std::uint64_t seed = 42;
  // training
  std::size_t examples_per_type = 200000;
  LossKind loss = LossKind::log_loss;
  double learning_rate = 0.1;
  int epochs = 20;
  int batch = 32;
  int hidden = 512;
  double dropout_p = 0.5;
  bool include_final_state = true;
  int state_stride = 1;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  /// Samples the full descriptor types (with explicit pair lists).
  std::vector<DescriptorType> sample_types() const;
};

/// Parses a SceneSpec from strict JSON.
SceneSpec scene_spec_from_file(const std::string& path);
SceneSpec scene_spec_from_json_text(const std::string& text);

/// Worker cap from the CELIS_THREADS environment variable (default 1).
int thread_cap();

}  // namespace celis
