#include "celis/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace celis {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  return json::parse(in);
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  reject_unknown(j,
                 {"descriptor_types", "feature_provider", "watershed", "tau", "tau_sweep",
                  "max_steps", "seed", "training"},
                 "config");
  RunConfig cfg;
  if (j.count("descriptor_types")) {
    for (const json& tj : j.at("descriptor_types")) {
      reject_unknown(tj, {"kind", "bbox", "k", "region", "zone", "seed"}, "descriptor_types[]");
      DescriptorTypeSpec spec;
      if (tj.count("kind")) spec.kind = descriptor_kind_from_string(tj.at("kind").get<std::string>());
      if (tj.count("bbox")) spec.bbox = tj.at("bbox").get<int>();
      if (tj.count("k")) spec.k = tj.at("k").get<int>();
      if (tj.count("region")) spec.region = tj.at("region").get<int>();
      if (tj.count("zone")) spec.zone = tj.at("zone").get<int>();
      if (tj.count("seed")) spec.seed = tj.at("seed").get<std::uint64_t>();
      cfg.descriptor_types.push_back(spec);
    }
  }
  if (j.count("feature_provider")) {
    const json& fj = j.at("feature_provider");
    reject_unknown(fj, {"mode", "path"}, "feature_provider");
    cfg.feature_provider.mode = fj.value("mode", std::string("handcrafted"));
    cfg.feature_provider.path = fj.value("path", std::string());
    if (cfg.feature_provider.mode != "handcrafted" && cfg.feature_provider.mode != "file_backed")
      throw std::invalid_argument("feature_provider.mode must be handcrafted or file_backed");
  }
  if (j.count("watershed")) {
    const json& wj = j.at("watershed");
    reject_unknown(wj, {"t_high", "t_low", "t_edge", "t_size"}, "watershed");
    cfg.watershed.t_high = wj.value("t_high", cfg.watershed.t_high);
    cfg.watershed.t_low = wj.value("t_low", cfg.watershed.t_low);
    cfg.watershed.t_edge = wj.value("t_edge", cfg.watershed.t_edge);
    cfg.watershed.t_size = wj.value("t_size", cfg.watershed.t_size);
  }
  if (j.count("tau")) cfg.tau = j.at("tau").get<double>();
  if (j.count("tau_sweep")) cfg.tau_sweep = j.at("tau_sweep").get<std::vector<double>>();
  if (j.count("max_steps")) cfg.max_steps = j.at("max_steps").get<std::uint64_t>();
  if (j.count("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.count("training")) {
    const json& tj = j.at("training");
    reject_unknown(tj,
                   {"examples_per_type", "loss", "learning_rate", "epochs", "batch", "hidden",
                    "dropout_p", "include_final_state", "state_stride"},
                   "training");
    cfg.examples_per_type = tj.value("examples_per_type", cfg.examples_per_type);
    if (tj.count("loss")) cfg.loss = loss_kind_from_string(tj.at("loss").get<std::string>());
    cfg.learning_rate = tj.value("learning_rate", cfg.learning_rate);
    cfg.epochs = tj.value("epochs", cfg.epochs);
    cfg.batch = tj.value("batch", cfg.batch);
    cfg.hidden = tj.value("hidden", cfg.hidden);
    cfg.dropout_p = tj.value("dropout_p", cfg.dropout_p);
    cfg.include_final_state = tj.value("include_final_state", cfg.include_final_state);
    cfg.state_stride = tj.value("state_stride", cfg.state_stride);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::vector<DescriptorType> RunConfig::sample_types() const {
  if (descriptor_types.empty()) throw std::invalid_argument("config has no descriptor_types");
  std::vector<DescriptorType> out;
  for (std::size_t i = 0; i < descriptor_types.size(); ++i) {
    const DescriptorTypeSpec& s = descriptor_types[i];
    std::uint64_t type_seed = s.seed != 0 ? s.seed : seed + i;
    out.push_back(
        sample_descriptor_type(int(i), type_seed, s.kind, s.bbox, s.k, s.region, s.zone));
  }
  return out;
}

SceneSpec scene_spec_from_json_text(const std::string& text) {
  json j = json::parse(text);
  reject_unknown(j,
                 {"shape", "objects", "tube_radius", "blob_radius", "noise_sigma", "split_rate",
                  "seed", "max_place_tries"},
                 "scene spec");
  SceneSpec spec;
  if (j.count("shape")) {
    auto arr = j.at("shape");
    spec.shape = {arr.at(0).get<int>(), arr.at(1).get<int>(), arr.at(2).get<int>()};
  }
  if (j.count("objects")) spec.object_count = j.at("objects").get<int>();
  if (j.count("tube_radius")) {
    spec.tube_radius_min = j.at("tube_radius").at(0).get<double>();
    spec.tube_radius_max = j.at("tube_radius").at(1).get<double>();
  }
  if (j.count("blob_radius")) {
    spec.blob_radius_min = j.at("blob_radius").at(0).get<double>();
    spec.blob_radius_max = j.at("blob_radius").at(1).get<double>();
  }
  if (j.count("noise_sigma")) spec.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.count("split_rate")) spec.split_rate = j.at("split_rate").get<double>();
  if (j.count("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.count("max_place_tries")) spec.max_place_tries = j.at("max_place_tries").get<int>();
  spec.validate();
  return spec;
}

SceneSpec scene_spec_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scene spec: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return scene_spec_from_json_text(text);
}

int thread_cap() {
  const char* env = std::getenv("CELIS_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

}  // namespace celis
