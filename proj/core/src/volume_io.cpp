#include "celis/volume_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace celis {

namespace {

using nlohmann::json;

void write_sidecar(const std::string& path, const VolumeShape& s, const char* dtype, int channels) {
  json j;
  j["shape"] = {s.nx, s.ny, s.nz};
  j["dtype"] = dtype;
  j["channels"] = channels;
  j["voxel_size"] = {1.0, 1.0, 1.0};
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write sidecar: " + path + ".json");
  out << j.dump(2) << "\n";
}

json read_sidecar(const std::string& path, const char* expect_dtype) {
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("cannot read sidecar: " + path + ".json");
  json j = json::parse(in);
  if (j.at("dtype").get<std::string>() != expect_dtype)
    throw std::runtime_error("unexpected dtype in " + path + ".json");
  return j;
}

template <typename T>
void write_raw(const std::string& path, const std::vector<T>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size() * sizeof(T)));
}

template <typename T>
void read_raw(const std::string& path, std::vector<T>& data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read: " + path);
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(T)));
  if (std::size_t(in.gcount()) != data.size() * sizeof(T))
    throw std::runtime_error("short read: " + path);
}

VolumeShape shape_from(const json& j) {
  auto arr = j.at("shape");
  return {arr.at(0).get<int>(), arr.at(1).get<int>(), arr.at(2).get<int>()};
}

}  // namespace

void write_labels(const std::string& path, const LabelVolume& v) {
  write_raw(path, v.data());
  write_sidecar(path, v.shape(), "uint32", 1);
}

LabelVolume read_labels(const std::string& path) {
  json j = read_sidecar(path, "uint32");
  LabelVolume v(shape_from(j));
  read_raw(path, v.data());
  return v;
}

void write_affinities(const std::string& path, const AffinityVolume& v) {
  write_raw(path, v.data());
  write_sidecar(path, v.shape(), "float32", 3);
}

AffinityVolume read_affinities(const std::string& path) {
  json j = read_sidecar(path, "float32");
  if (j.at("channels").get<int>() != 3)
    throw std::runtime_error("affinity volume must have 3 channels: " + path);
  AffinityVolume v(shape_from(j));
  read_raw(path, v.data());
  return v;
}

void write_float_field(const std::string& path, const FloatField& f) {
  write_raw(path, f.data);
  write_sidecar(path, f.shape, "float32", f.channels);
}

FloatField read_float_field(const std::string& path) {
  json j = read_sidecar(path, "float32");
  FloatField f;
  f.shape = shape_from(j);
  f.channels = j.at("channels").get<int>();
  f.data.resize(f.shape.voxels() * f.channels);
  read_raw(path, f.data);
  return f;
}

}  // namespace celis
