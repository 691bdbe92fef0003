// Command-line surface for the segmentation-agglomeration pipeline:
// scene synthesis, watershed oversegmentation, descriptor sampling, example
// extraction, energy-model training, agglomeration, evaluation, the oracle
// policy, merge-log replay, and pruning-counter reports.

#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "celis/incremental_engine.hpp"
#include "celis/metrics.hpp"
#include "celis/pipeline.hpp"
#include "celis/run_config.hpp"
#include "celis/synthetic.hpp"
#include "celis/training.hpp"
#include "celis/volume_io.hpp"
#include "celis/watershed.hpp"

namespace {

using namespace celis;

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << text;
}

std::vector<DescriptorType> load_types(const std::string& path) {
  return descriptor_types_from_json(read_text(path));
}

std::vector<EnergyModel> load_models(const std::vector<std::string>& paths) {
  std::vector<EnergyModel> models;
  for (const std::string& p : paths) models.push_back(EnergyModel::load(p));
  return models;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"segmentation agglomeration with learned shape-descriptor energies"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
  std::string synth_spec, synth_gt, synth_aff, synth_sv;
  synth->add_option("--spec", synth_spec, "scene spec JSON")->required();
  synth->add_option("--out-gt", synth_gt, "ground-truth labels output")->required();
  synth->add_option("--out-aff", synth_aff, "affinity output")->required();
  synth->add_option("--out-sv", synth_sv, "supervoxel labels output")->required();
  synth->callback([&] {
    SceneSpec spec = scene_spec_from_file(synth_spec);
    SceneData scene = generate_synthetic_scene(spec);
    write_labels(synth_gt, scene.ground_truth);
    write_affinities(synth_aff, scene.affinities);
    write_labels(synth_sv, scene.supervoxels);
  });

  // ---- oversegment ----
  auto* overseg = app.add_subcommand("oversegment", "affinity watershed oversegmentation");
  std::string ov_aff, ov_out;
  WatershedParams ov_params;
  overseg->add_option("--affinities", ov_aff)->required();
  overseg->add_option("--t-high", ov_params.t_high)->required();
  overseg->add_option("--t-low", ov_params.t_low)->required();
  overseg->add_option("--t-edge", ov_params.t_edge)->required();
  overseg->add_option("--t-size", ov_params.t_size)->required();
  overseg->add_option("--out", ov_out)->required();
  overseg->callback([&] {
    AffinityVolume aff = read_affinities(ov_aff);
    write_labels(ov_out, oversegment(aff, ov_params));
  });

  // ---- make-descriptors ----
  auto* mkdesc = app.add_subcommand("make-descriptors", "sample descriptor types from the config");
  std::string mk_config, mk_out;
  mkdesc->add_option("--config", mk_config)->required();
  mkdesc->add_option("--out", mk_out)->required();
  mkdesc->callback([&] {
    RunConfig cfg = RunConfig::from_file(mk_config);
    write_text(mk_out, descriptor_types_to_json(cfg.sample_types()));
  });

  // ---- extract-examples ----
  auto* extract = app.add_subcommand("extract-examples", "expert rollout and example extraction");
  std::string ex_gt, ex_sv, ex_aff, ex_types, ex_config, ex_out;
  extract->add_option("--gt", ex_gt)->required();
  extract->add_option("--sv", ex_sv)->required();
  extract->add_option("--affinities", ex_aff)->required();
  extract->add_option("--types", ex_types)->required();
  extract->add_option("--config", ex_config)->required();
  extract->add_option("--out", ex_out)->required();
  extract->callback([&] {
    RunConfig cfg = RunConfig::from_file(ex_config);
    LabelVolume gt = read_labels(ex_gt);
    LabelVolume sv = read_labels(ex_sv);
    AffinityVolume aff = read_affinities(ex_aff);
    std::vector<DescriptorType> types = load_types(ex_types);
    auto provider = make_feature_provider(cfg.feature_provider, &aff);
    ExtractionConfig ecfg;
    ecfg.samples_per_type = cfg.examples_per_type;
    ecfg.seed = cfg.seed;
    ecfg.include_final_state = cfg.include_final_state;
    ecfg.state_stride = cfg.state_stride;
    ExtractionResult res = extract_examples(sv, gt, types, *provider, ecfg);
    write_examples(ex_out, res.per_type, types, provider->dim());
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "train energy models from an example file");
  std::string tr_examples, tr_types, tr_config, tr_outdir, tr_curve;
  train->add_option("--examples", tr_examples)->required();
  train->add_option("--types", tr_types)->required();
  train->add_option("--config", tr_config)->required();
  train->add_option("--out-dir", tr_outdir, "directory for model_<id>.bin files")->required();
  train->add_option("--curve", tr_curve, "loss curve CSV");
  train->callback([&] {
    RunConfig cfg = RunConfig::from_file(tr_config);
    std::vector<DescriptorType> types = load_types(tr_types);
    int feature_dim = 0;
    auto per_type = read_examples(tr_examples, types, &feature_dim);
    std::ostringstream curve;
    curve << "type,epoch,loss\n";
    for (std::size_t ti = 0; ti < types.size(); ++ti) {
      balance_classes(per_type[ti]);
      EnergyModel model = EnergyModel::random_init(types[ti].k, feature_dim, cfg.hidden,
                                                   cfg.dropout_p, cfg.seed + 1000 + ti);
      TrainConfig tc;
      tc.loss = cfg.loss;
      tc.learning_rate = cfg.learning_rate;
      tc.epochs = cfg.epochs;
      tc.batch = cfg.batch;
      tc.seed = cfg.seed + 2000 + ti;
      TrainResult res = train_energy_model(model, per_type[ti], tc);
      for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
        curve << types[ti].id << "," << e << "," << res.epoch_loss[e] << "\n";
      model.save(tr_outdir + "/model_" + std::to_string(types[ti].id) + ".bin");
    }
    if (!tr_curve.empty()) write_text(tr_curve, curve.str());
  });

  // ---- agglomerate ----
  auto* agg = app.add_subcommand("agglomerate", "greedy energy minimization");
  std::string ag_sv, ag_aff, ag_types, ag_config, ag_models, ag_log, ag_labels, ag_counters;
  agg->add_option("--sv", ag_sv)->required();
  agg->add_option("--affinities", ag_aff)->required();
  agg->add_option("--types", ag_types)->required();
  agg->add_option("--config", ag_config)->required();
  agg->add_option("--model-dir", ag_models, "directory with model_<id>.bin files")->required();
  agg->add_option("--out-log", ag_log)->required();
  agg->add_option("--out-labels", ag_labels);
  agg->add_option("--out-counters", ag_counters);
  agg->callback([&] {
    RunConfig cfg = RunConfig::from_file(ag_config);
    LabelVolume sv = read_labels(ag_sv);
    AffinityVolume aff = read_affinities(ag_aff);
    std::vector<DescriptorType> types = load_types(ag_types);
    std::vector<std::string> model_paths;
    for (const DescriptorType& dt : types)
      model_paths.push_back(ag_models + "/model_" + std::to_string(dt.id) + ".bin");
    auto provider = make_feature_provider(cfg.feature_provider, &aff);
    AgglomerationEngine engine(sv, types, load_models(model_paths), *provider);
    std::vector<MergeLogEntry> log = engine.run(cfg.tau, cfg.max_steps);
    write_merge_log(ag_log, log);
    if (!ag_labels.empty()) write_labels(ag_labels, engine.current_segment_volume());
    if (!ag_counters.empty()) write_text(ag_counters, engine.counters().to_json() + "\n");
  });

  // ---- evaluate ----
  auto* eval = app.add_subcommand("evaluate", "segmentation metrics (or a threshold sweep)");
  std::string ev_seg, ev_truth, ev_log, ev_sv, ev_taus;
  eval->add_option("--seg", ev_seg, "segmentation labels");
  eval->add_option("--truth", ev_truth)->required();
  eval->add_option("--log", ev_log, "merge log for a threshold sweep");
  eval->add_option("--sv", ev_sv, "initial supervoxels for a threshold sweep");
  eval->add_option("--taus", ev_taus, "comma-separated threshold list");
  eval->callback([&] {
    LabelVolume truth = read_labels(ev_truth);
    if (!ev_log.empty()) {
      if (ev_sv.empty() || ev_taus.empty())
        throw CLI::ValidationError("evaluate", "--log requires --sv and --taus");
      LabelVolume sv = read_labels(ev_sv);
      std::vector<MergeLogEntry> log = read_merge_log(ev_log);
      std::vector<double> taus;
      std::stringstream ss(ev_taus);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item == "-inf")
          taus.push_back(-std::numeric_limits<double>::infinity());
        else if (item == "inf")
          taus.push_back(std::numeric_limits<double>::infinity());
        else
          taus.push_back(std::stod(item));
      }
      std::cout << sweep_to_json(threshold_sweep(sv, log, truth, taus)) << "\n";
    } else {
      if (ev_seg.empty()) throw CLI::ValidationError("evaluate", "--seg or --log required");
      LabelVolume seg = read_labels(ev_seg);
      std::cout << scores_to_json(score_segmentation(seg, truth)) << "\n";
    }
  });

  // ---- oracle ----
  auto* oracle = app.add_subcommand("oracle", "greedy VI-optimal agglomeration baseline");
  std::string or_sv, or_truth, or_log, or_labels;
  oracle->add_option("--sv", or_sv)->required();
  oracle->add_option("--truth", or_truth)->required();
  oracle->add_option("--out-log", or_log);
  oracle->add_option("--out-labels", or_labels);
  oracle->callback([&] {
    LabelVolume sv = read_labels(or_sv);
    LabelVolume truth = read_labels(or_truth);
    ExpertRollout rollout = expert_rollout(sv, truth);
    if (!or_log.empty()) {
      std::vector<MergeLogEntry> log;
      double err = rollout.initial_vi;
      for (std::size_t i = 0; i < rollout.steps.size(); ++i) {
        err += rollout.steps[i].delta_error;
        log.push_back({i, rollout.steps[i].canonical.first, rollout.steps[i].canonical.second,
                       rollout.steps[i].delta_error, err});
      }
      write_merge_log(or_log, log);
    }
    if (!or_labels.empty()) write_labels(or_labels, rollout.final_labels);
    nlohmann::json j;
    j["initial_vi"] = rollout.initial_vi;
    j["final_vi"] = rollout.final_vi;
    j["merges"] = rollout.steps.size();
    std::cout << j.dump() << "\n";
  });

  // ---- replay ----
  auto* replay = app.add_subcommand("replay", "rebuild labels from a merge log at a threshold");
  std::string rp_sv, rp_log, rp_out;
  double rp_tau = 0.0;
  bool rp_tau_neg_inf = false;
  replay->add_option("--sv", rp_sv)->required();
  replay->add_option("--log", rp_log)->required();
  replay->add_option("--tau", rp_tau);
  replay->add_flag("--tau-neg-inf", rp_tau_neg_inf, "replay nothing (initial segmentation)");
  replay->add_option("--out", rp_out)->required();
  replay->callback([&] {
    LabelVolume sv = read_labels(rp_sv);
    std::vector<MergeLogEntry> log = read_merge_log(rp_log);
    double tau = rp_tau_neg_inf ? -std::numeric_limits<double>::infinity() : rp_tau;
    write_labels(rp_out, replay_merge_log(sv, log, tau));
  });

  // ---- counters ----
  auto* counters = app.add_subcommand("counters", "pruning statistics report");
  std::string ct_in;
  counters->add_option("--in", ct_in, "counters JSON from agglomerate")->required();
  counters->callback([&] {
    nlohmann::json j = nlohmann::json::parse(read_text(ct_in));
    std::uint64_t computed = j.at("descriptors_computed").get<std::uint64_t>();
    std::uint64_t naive = j.at("naive_descriptor_terms").get<std::uint64_t>();
    std::uint64_t evals = j.at("model_evaluations").get<std::uint64_t>();
    nlohmann::json out;
    out["descriptors_computed"] = computed;
    out["model_evaluations"] = evals;
    out["naive_descriptor_terms"] = naive;
    out["descriptor_fraction_of_naive"] = naive ? double(computed) / double(naive) : 0.0;
    out["evaluations_per_descriptor"] = computed ? double(evals) / double(computed) : 0.0;
    out["pruned"] = j.at("pruned");
    out["steps"] = j.at("steps");
    std::cout << out.dump(2) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    nlohmann::json j;
    j["error"] = e.what();
    std::cerr << j.dump() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    nlohmann::json j;
    j["error"] = e.what();
    std::cerr << j.dump() << "\n";
    return 1;
  }
}
