#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "celis/geometry.hpp"
#include "celis/volume.hpp"
#include "celis/volume_io.hpp"

namespace celis {

/// Fixed-length image feature vector per volume position.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual int dim() const = 0;
  /// Writes dim() values for position x; throws on out-of-volume positions.
  virtual void feature_at(Vec3i x, float* out) const = 0;

  std::vector<float> feature_at(Vec3i x) const {
    std::vector<float> f(dim());
    feature_at(x, f.data());
    return f;
  }
};

/// Multi-scale local affinity statistics: the mean of each affinity channel
/// over centered boxes of edges {3, 9, 17, 33} (clipped at volume borders)
/// plus the three center-voxel affinities; d = 15.
class HandcraftedFeatures : public FeatureProvider {
 public:
  explicit HandcraftedFeatures(const AffinityVolume& aff);
  int dim() const override { return 15; }
  void feature_at(Vec3i x, float* out) const override;

 private:
  double box_mean(int channel, Box3i box) const;
  VolumeShape shape_;
  std::vector<double> sat_;  // 3 channels of (nx+1)(ny+1)(nz+1) sums
  AffinityVolume aff_;
};

/// Features read from a precomputed dense field.
class FileBackedFeatures : public FeatureProvider {
 public:
  explicit FileBackedFeatures(FloatField field);
  int dim() const override { return field_.channels; }
  void feature_at(Vec3i x, float* out) const override;

 private:
  FloatField field_;
};

/// Local energy scorer: a small fully-connected network mapping descriptor
/// bits concatenated with an image feature vector to a cost in (0, 1).
/// Two rectified-linear hidden layers, a logistic output unit, and inverted
/// dropout after the last hidden layer during training.
class EnergyModel {
 public:
  EnergyModel() = default;
  EnergyModel(int k, int feature_dim, int hidden, double dropout_p);

  static EnergyModel random_init(int k, int feature_dim, int hidden, double dropout_p,
                                 std::uint64_t seed);

  int k() const { return k_; }
  int feature_dim() const { return d_; }
  int hidden() const { return h_; }
  int input_dim() const { return k_ + d_; }
  double dropout_p() const { return p_; }

  /// Deterministic inference forward pass (dropout disabled).
  double evaluate(const std::uint64_t* bits, const float* features) const;

  struct Row {
    const std::uint64_t* bits;
    const float* features;
  };
  std::vector<double> evaluate_batch(const std::vector<Row>& rows) const;

  // Parameter access for training and serialization.  Layout: weights are
  // row-major [out][in].
  std::vector<double>& w1() { return w1_; }
  std::vector<double>& b1() { return b1_; }
  std::vector<double>& w2() { return w2_; }
  std::vector<double>& b2() { return b2_; }
  std::vector<double>& w3() { return w3_; }
  double& b3() { return b3_; }
  const std::vector<double>& w1() const { return w1_; }
  const std::vector<double>& b1() const { return b1_; }
  const std::vector<double>& w2() const { return w2_; }
  const std::vector<double>& b2() const { return b2_; }
  const std::vector<double>& w3() const { return w3_; }
  double b3() const { return b3_; }
  std::size_t parameter_count() const;
  double& parameter(std::size_t i);

  /// Forward pass keeping hidden activations; `drop_mask` (when non-null)
  /// holds the inverted-dropout scale per unit of the last hidden layer.
  double forward(const std::uint64_t* bits, const float* features, const double* drop_mask,
                 std::vector<double>& a1, std::vector<double>& a2) const;

  /// Accumulates parameter gradients given gz = d(loss)/d(pre-logistic z).
  void backward(const std::uint64_t* bits, const float* features, const double* drop_mask,
                const std::vector<double>& a1, const std::vector<double>& a2, double gz,
                std::vector<double>& grad) const;

  void save(const std::string& path) const;
  static EnergyModel load(const std::string& path);

 private:
  int k_ = 0, d_ = 0, h_ = 0;
  double p_ = 0.5;
  std::vector<double> w1_, b1_, w2_, b2_, w3_;
  double b3_ = 0.0;
};

}  // namespace celis
