#include "celis/energy_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace celis {

HandcraftedFeatures::HandcraftedFeatures(const AffinityVolume& aff)
    : shape_(aff.shape()), aff_(aff) {
  // One summed-area table per channel for O(1) box means.
  std::size_t n1 = std::size_t(shape_.nx + 1) * (shape_.ny + 1) * (shape_.nz + 1);
  sat_.assign(3 * n1, 0.0);
  auto sat_at = [&](int c, int x, int y, int z) -> double& {
    return sat_[c * n1 + std::size_t(x) +
                std::size_t(shape_.nx + 1) * (y + std::size_t(shape_.ny + 1) * z)];
  };
  for (int c = 0; c < 3; ++c)
    for (int z = 1; z <= shape_.nz; ++z)
      for (int y = 1; y <= shape_.ny; ++y)
        for (int x = 1; x <= shape_.nx; ++x)
          sat_at(c, x, y, z) = aff.at(c, {x - 1, y - 1, z - 1}) + sat_at(c, x - 1, y, z) +
                               sat_at(c, x, y - 1, z) + sat_at(c, x, y, z - 1) -
                               sat_at(c, x - 1, y - 1, z) - sat_at(c, x - 1, y, z - 1) -
                               sat_at(c, x, y - 1, z - 1) + sat_at(c, x - 1, y - 1, z - 1);
}

double HandcraftedFeatures::box_mean(int channel, Box3i box) const {
  Box3i b = box.clipped(shape_.bounds());
  if (b.empty()) return 0.0;
  std::size_t n1 = std::size_t(shape_.nx + 1) * (shape_.ny + 1) * (shape_.nz + 1);
  auto at = [&](int x, int y, int z) -> double {
    return sat_[channel * n1 + std::size_t(x) +
                std::size_t(shape_.nx + 1) * (y + std::size_t(shape_.ny + 1) * z)];
  };
  double sum = at(b.hi.x, b.hi.y, b.hi.z) - at(b.lo.x, b.hi.y, b.hi.z) -
               at(b.hi.x, b.lo.y, b.hi.z) - at(b.hi.x, b.hi.y, b.lo.z) +
               at(b.lo.x, b.lo.y, b.hi.z) + at(b.lo.x, b.hi.y, b.lo.z) +
               at(b.hi.x, b.lo.y, b.lo.z) - at(b.lo.x, b.lo.y, b.lo.z);
  return sum / double(b.volume());
}

void HandcraftedFeatures::feature_at(Vec3i x, float* out) const {
  if (!shape_.inside(x)) throw std::out_of_range("feature position outside volume");
  static constexpr int kEdges[4] = {3, 9, 17, 33};
  int idx = 0;
  for (int e : kEdges) {
    int h = (e - 1) / 2;
    Box3i box{{x.x - h, x.y - h, x.z - h}, {x.x + h + 1, x.y + h + 1, x.z + h + 1}};
    for (int c = 0; c < 3; ++c) out[idx++] = float(box_mean(c, box));
  }
  for (int c = 0; c < 3; ++c) out[idx++] = aff_.at(c, x);
}

FileBackedFeatures::FileBackedFeatures(FloatField field) : field_(std::move(field)) {}

void FileBackedFeatures::feature_at(Vec3i x, float* out) const {
  if (!field_.shape.inside(x)) throw std::out_of_range("feature position outside volume");
  const float* src = field_.data.data() + std::size_t(field_.channels) * field_.shape.index(x);
  std::memcpy(out, src, sizeof(float) * field_.channels);
}

EnergyModel::EnergyModel(int k, int feature_dim, int hidden, double dropout_p)
    : k_(k), d_(feature_dim), h_(hidden), p_(dropout_p) {
  if (k < 0 || feature_dim < 0 || hidden < 1) throw std::invalid_argument("bad model dims");
  if (dropout_p < 0.0 || dropout_p >= 1.0) throw std::invalid_argument("bad dropout p");
  w1_.assign(std::size_t(h_) * input_dim(), 0.0);
  b1_.assign(h_, 0.0);
  w2_.assign(std::size_t(h_) * h_, 0.0);
  b2_.assign(h_, 0.0);
  w3_.assign(h_, 0.0);
  b3_ = 0.0;
}

EnergyModel EnergyModel::random_init(int k, int feature_dim, int hidden, double dropout_p,
                                     std::uint64_t seed) {
  EnergyModel m(k, feature_dim, hidden, dropout_p);
  Rng rng(seed);
  auto glorot = [&](std::vector<double>& w, int fan_in, int fan_out) {
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-bound, bound);
  };
  glorot(m.w1_, m.input_dim(), hidden);
  glorot(m.w2_, hidden, hidden);
  glorot(m.w3_, hidden, 1);
  return m;
}

std::size_t EnergyModel::parameter_count() const {
  return w1_.size() + b1_.size() + w2_.size() + b2_.size() + w3_.size() + 1;
}

double& EnergyModel::parameter(std::size_t i) {
  if (i < w1_.size()) return w1_[i];
  i -= w1_.size();
  if (i < b1_.size()) return b1_[i];
  i -= b1_.size();
  if (i < w2_.size()) return w2_[i];
  i -= w2_.size();
  if (i < b2_.size()) return b2_[i];
  i -= b2_.size();
  if (i < w3_.size()) return w3_[i];
  i -= w3_.size();
  return b3_;
}

namespace {
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace

double EnergyModel::forward(const std::uint64_t* bits, const float* features,
                            const double* drop_mask, std::vector<double>& a1,
                            std::vector<double>& a2) const {
  a1.assign(h_, 0.0);
  a2.assign(h_, 0.0);
  const int in = input_dim();
  for (int j = 0; j < h_; ++j) {
    const double* row = w1_.data() + std::size_t(j) * in;
    double z = b1_[j];
    for (int i = 0; i < k_; ++i)
      if (bits[i >> 6] >> (i & 63) & 1) z += row[i];
    for (int i = 0; i < d_; ++i) z += row[k_ + i] * features[i];
    a1[j] = z > 0 ? z : 0.0;
  }
  for (int j = 0; j < h_; ++j) {
    const double* row = w2_.data() + std::size_t(j) * h_;
    double z = b2_[j];
    for (int i = 0; i < h_; ++i) z += row[i] * a1[i];
    double a = z > 0 ? z : 0.0;
    a2[j] = drop_mask ? a * drop_mask[j] : a;
  }
  double z = b3_;
  for (int i = 0; i < h_; ++i) z += w3_[i] * a2[i];
  return logistic(z);
}

double EnergyModel::evaluate(const std::uint64_t* bits, const float* features) const {
  thread_local std::vector<double> a1, a2;
  return forward(bits, features, nullptr, a1, a2);
}

std::vector<double> EnergyModel::evaluate_batch(const std::vector<Row>& rows) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const Row& r : rows) out.push_back(evaluate(r.bits, r.features));
  return out;
}

void EnergyModel::backward(const std::uint64_t* bits, const float* features,
                           const double* drop_mask, const std::vector<double>& a1,
                           const std::vector<double>& a2, double gz3,
                           std::vector<double>& grad) const {
  // grad layout matches parameter(): w1, b1, w2, b2, w3, b3.
  const int in = input_dim();
  double* gw1 = grad.data();
  double* gb1 = gw1 + w1_.size();
  double* gw2 = gb1 + b1_.size();
  double* gb2 = gw2 + w2_.size();
  double* gw3 = gb2 + b2_.size();
  double* gb3 = gw3 + w3_.size();

  *gb3 += gz3;
  thread_local std::vector<double> ga2, ga1;
  ga2.assign(h_, 0.0);
  ga1.assign(h_, 0.0);
  for (int i = 0; i < h_; ++i) {
    gw3[i] += gz3 * a2[i];
    ga2[i] = gz3 * w3_[i];
  }
  for (int j = 0; j < h_; ++j) {
    double pre = drop_mask ? (drop_mask[j] > 0 ? a2[j] / drop_mask[j] : 0.0) : a2[j];
    double gz = (pre > 0 ? ga2[j] * (drop_mask ? drop_mask[j] : 1.0) : 0.0);
    if (gz == 0.0) continue;
    gb2[j] += gz;
    double* row = gw2 + std::size_t(j) * h_;
    const double* w2row = w2_.data() + std::size_t(j) * h_;
    for (int i = 0; i < h_; ++i) {
      row[i] += gz * a1[i];
      ga1[i] += gz * w2row[i];
    }
  }
  for (int j = 0; j < h_; ++j) {
    double gz = a1[j] > 0 ? ga1[j] : 0.0;
    if (gz == 0.0) continue;
    gb1[j] += gz;
    double* row = gw1 + std::size_t(j) * in;
    for (int i = 0; i < k_; ++i)
      if (bits[i >> 6] >> (i & 63) & 1) row[i] += gz;
    for (int i = 0; i < d_; ++i) row[k_ + i] += gz * features[i];
  }
}

void EnergyModel::save(const std::string& path) const {
  nlohmann::json header;
  header["k"] = k_;
  header["feature_dim"] = d_;
  header["hidden"] = h_;
  header["dropout_p"] = p_;
  header["layers"] = {{h_, input_dim()}, {h_, h_}, {1, h_}};
  std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model: " + path);
  const char magic[4] = {'C', 'E', 'L', 'M'};
  out.write(magic, 4);
  std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(htext.data(), std::streamsize(htext.size()));
  auto write_block = [&](const std::vector<double>& v) {
    std::vector<float> f(v.begin(), v.end());
    out.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size() * 4));
  };
  write_block(w1_);
  write_block(b1_);
  write_block(w2_);
  write_block(b2_);
  write_block(w3_);
  float b3f = float(b3_);
  out.write(reinterpret_cast<const char*>(&b3f), 4);
}

EnergyModel EnergyModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read model: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CELM", 4) != 0)
    throw std::runtime_error("not a model file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  in.read(htext.data(), std::streamsize(hlen));
  nlohmann::json header = nlohmann::json::parse(htext);
  EnergyModel m(header.at("k").get<int>(), header.at("feature_dim").get<int>(),
                header.at("hidden").get<int>(), header.at("dropout_p").get<double>());
  auto read_block = [&](std::vector<double>& v) {
    std::vector<float> f(v.size());
    in.read(reinterpret_cast<char*>(f.data()), std::streamsize(f.size() * 4));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f[i];
  };
  read_block(m.w1_);
  read_block(m.b1_);
  read_block(m.w2_);
  read_block(m.b2_);
  read_block(m.w3_);
  float b3f = 0;
  in.read(reinterpret_cast<char*>(&b3f), 4);
  m.b3_ = b3f;
  if (!in) throw std::runtime_error("truncated model file: " + path);
  return m;
}

}  // namespace celis
