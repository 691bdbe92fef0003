#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "celis/energy_model.hpp"
#include "testutil.hpp"

using namespace celis;

TEST_CASE("zero weights give exactly 0.5") {
  EnergyModel m(8, 3, 4, 0.5);
  std::uint64_t bits = 0xa5;
  float f[3] = {0.2f, 0.9f, 0.4f};
  CHECK(m.evaluate(&bits, f) == 0.5);
}

TEST_CASE("one-hidden-unit model matches hand arithmetic") {
  // k=1, d=1, h=1: z1 = w1_bit*b + w1_f*f + b1; a1 = relu; z2 = w2*a1 + b2;
  // a2 = relu; out = logistic(w3*a2 + b3)
  EnergyModel m(1, 1, 1, 0.0);
  m.w1() = {0.7, -0.3};
  m.b1() = {0.1};
  m.w2() = {1.3};
  m.b2() = {-0.05};
  m.w3() = {0.9};
  m.b3() = 0.2;
  std::uint64_t bits = 1;
  float f[1] = {0.5f};
  double z1 = 0.7 * 1 + (-0.3) * 0.5 + 0.1;
  double a1 = std::max(0.0, z1);
  double z2 = 1.3 * a1 - 0.05;
  double a2 = std::max(0.0, z2);
  double expect = 1.0 / (1.0 + std::exp(-(0.9 * a2 + 0.2)));
  CHECK(std::fabs(m.evaluate(&bits, f) - expect) < 1e-12);
}

TEST_CASE("batch evaluation equals single evaluations, order preserved") {
  EnergyModel m = EnergyModel::random_init(16, 4, 8, 0.5, 3);
  Rng rng(5);
  std::vector<std::uint64_t> bits(10);
  std::vector<std::vector<float>> feats(10, std::vector<float>(4));
  for (int i = 0; i < 10; ++i) {
    bits[i] = rng.next_u64() & 0xffff;
    for (float& v : feats[i]) v = float(rng.unit());
  }
  std::vector<EnergyModel::Row> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({&bits[i], feats[i].data()});
  std::vector<double> batch = m.evaluate_batch(rows);
  CHECK(m.evaluate_batch({}).empty());
  for (int i = 0; i < 10; ++i) CHECK(batch[i] == m.evaluate(&bits[i], feats[i].data()));
  // shuffled batch gives shuffled outputs
  std::vector<EnergyModel::Row> shuffled{rows[3], rows[0], rows[7]};
  std::vector<double> sb = m.evaluate_batch(shuffled);
  CHECK(sb[0] == batch[3]);
  CHECK(sb[1] == batch[0]);
  CHECK(sb[2] == batch[7]);
}

TEST_CASE("outputs stay strictly inside (0, 1)") {
  EnergyModel m = EnergyModel::random_init(32, 15, 16, 0.5, 9);
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    std::uint64_t bits = rng.next_u64();
    std::vector<float> f(15);
    for (float& v : f) v = float(rng.unit());
    double out = m.evaluate(&bits, f.data());
    CHECK(out > 0.0);
    CHECK(out < 1.0);
  }
}

TEST_CASE("handcrafted features: constant volume gives constant means") {
  AffinityVolume aff({10, 10, 10}, 0.37f);
  HandcraftedFeatures prov(aff);
  CHECK(prov.dim() == 15);
  std::vector<float> f(15);
  prov.feature_at({5, 5, 5}, f.data());
  for (int i = 0; i < 15; ++i) CHECK(std::fabs(f[i] - 0.37f) < 1e-5);
}

TEST_CASE("handcrafted features match naive box averaging, including clipped borders") {
  AffinityVolume aff({9, 9, 9});
  Rng rng(6);
  for (float& v : aff.data()) v = float(rng.unit());
  HandcraftedFeatures prov(aff);
  const int edges[4] = {3, 9, 17, 33};
  for (Vec3i x : {Vec3i{0, 0, 0}, Vec3i{4, 4, 4}, Vec3i{8, 8, 8}, Vec3i{2, 7, 1}}) {
    std::vector<float> f(15);
    prov.feature_at(x, f.data());
    int idx = 0;
    for (int e : edges) {
      int h = (e - 1) / 2;
      for (int c = 0; c < 3; ++c) {
        double sum = 0;
        int count = 0;
        for (int dz = -h; dz <= h; ++dz)
          for (int dy = -h; dy <= h; ++dy)
            for (int dx = -h; dx <= h; ++dx) {
              Vec3i p{x.x + dx, x.y + dy, x.z + dz};
              if (!aff.shape().inside(p)) continue;
              sum += aff.at(c, p);
              ++count;
            }
        CHECK(std::fabs(f[idx] - sum / count) < 1e-5);
        ++idx;
      }
    }
    for (int c = 0; c < 3; ++c) CHECK(f[12 + c] == aff.at(c, x));
  }
  CHECK_THROWS_AS(prov.feature_at({9, 0, 0}, std::vector<float>(15).data()), std::out_of_range);
}

TEST_CASE("file-backed features return stored vectors") {
  FloatField field;
  field.shape = {4, 4, 4};
  field.channels = 6;
  field.data.resize(field.shape.voxels() * 6);
  Rng rng(7);
  for (float& v : field.data) v = float(rng.unit());
  FileBackedFeatures prov(field);
  CHECK(prov.dim() == 6);
  std::vector<float> f(6);
  prov.feature_at({2, 1, 3}, f.data());
  for (int c = 0; c < 6; ++c) CHECK(f[c] == field.at(c, {2, 1, 3}));
}

TEST_CASE("model save/load round trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "celis_model_test";
  fs::create_directories(dir);
  EnergyModel m = EnergyModel::random_init(24, 5, 8, 0.5, 15);
  std::string path = (dir / "model.bin").string();
  m.save(path);
  EnergyModel back = EnergyModel::load(path);
  CHECK(back.k() == 24);
  CHECK(back.feature_dim() == 5);
  CHECK(back.hidden() == 8);
  // weights quantized to float32; outputs agree to float precision
  Rng rng(8);
  std::uint64_t bits = rng.next_u64() & ((1ull << 24) - 1);
  std::vector<float> f(5);
  for (float& v : f) v = float(rng.unit());
  CHECK(std::fabs(back.evaluate(&bits, f.data()) - m.evaluate(&bits, f.data())) < 1e-6);
  // reload is exact
  back.save((dir / "model2.bin").string());
  EnergyModel again = EnergyModel::load((dir / "model2.bin").string());
  CHECK(again.evaluate(&bits, f.data()) == back.evaluate(&bits, f.data()));
  fs::remove_all(dir);
}

TEST_CASE("dimension mismatches are rejected") {
  EnergyModel m = EnergyModel::random_init(8, 2, 4, 0.5, 1);
  CHECK_THROWS_AS(EnergyModel(-1, 2, 4, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(EnergyModel(8, 2, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(EnergyModel(8, 2, 4, 1.0), std::invalid_argument);
}
