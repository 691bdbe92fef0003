#include "celis/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "celis/shape_index.hpp"

namespace celis {

PrioritySampler::PrioritySampler(std::size_t capacity) : cap_(capacity) {
  if (capacity < 1) throw std::invalid_argument("sampler capacity must be >= 1");
}

void PrioritySampler::offer(TrainingExample ex, double abs_weight, double u) {
  if (u <= 0.0 || u > 1.0) throw std::invalid_argument("u must be in (0, 1]");
  ++seen_;
  Item item{abs_weight / u, abs_weight, seen_, std::move(ex)};
  auto less = [](const Item& a, const Item& b) {
    if (a.priority != b.priority) return a.priority > b.priority;  // min-heap
    return a.seq > b.seq;
  };
  heap_.push_back(std::move(item));
  std::push_heap(heap_.begin(), heap_.end(), less);
  if (heap_.size() > cap_ + 1) {
    std::pop_heap(heap_.begin(), heap_.end(), less);
    heap_.pop_back();
  }
}

std::vector<TrainingExample> PrioritySampler::take() {
  auto less = [](const Item& a, const Item& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.seq > b.seq;
  };
  double threshold = 0.0;
  if (seen_ > cap_ && heap_.size() == cap_ + 1) {
    std::pop_heap(heap_.begin(), heap_.end(), less);
    threshold = heap_.back().priority;  // the (m+1)-th largest priority
    heap_.pop_back();
  }
  // Deterministic output order: descending priority.
  std::sort(heap_.begin(), heap_.end(), [](const Item& a, const Item& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.seq < b.seq;
  });
  std::vector<TrainingExample> out;
  out.reserve(heap_.size());
  for (Item& it : heap_) {
    it.ex.weight = float(std::max(it.abs_weight, threshold));
    out.push_back(std::move(it.ex));
  }
  heap_.clear();
  return out;
}

void balance_classes(std::vector<TrainingExample>& sample) {
  double neg = 0.0, pos = 0.0;
  for (const TrainingExample& ex : sample) {
    if (ex.y < 0) neg += ex.weight;
    if (ex.y > 0) pos += ex.weight;
  }
  if (neg == 0.0 || pos == 0.0)
    throw std::runtime_error(
        "cannot balance classes: one sign class is empty; extract from more rollout states or "
        "scenes");
  double target = 0.5 * (neg + pos);
  double sneg = target / neg, spos = target / pos;
  for (TrainingExample& ex : sample) {
    if (ex.y < 0) ex.weight = float(ex.weight * sneg);
    if (ex.y > 0) ex.weight = float(ex.weight * spos);
  }
}

namespace {

struct EdgeChoice {
  SegPair pair{0, 0};
  double delta = 0.0;
  std::uint64_t contact = 0;
  SegPair canonical{0, 0};
  bool valid = false;
};

EdgeChoice best_edge(const RegionGraph& graph, const ContingencyTable& ct) {
  EdgeChoice best;
  for (const SegPair& e : graph.edge_list()) {
    double d = ct.delta_vi_merge(e.first, e.second);
    const RegionGraph::EdgeInfo& info = graph.edge(e.first, e.second);
    bool better;
    if (!best.valid) {
      better = true;
    } else if (d != best.delta) {
      better = d < best.delta;
    } else if (info.contact != best.contact) {
      better = info.contact > best.contact;
    } else {
      better = info.canonical < best.canonical;
    }
    if (better) best = {e, d, info.contact, info.canonical, true};
  }
  return best;
}

}  // namespace

ExpertRollout expert_rollout(const LabelVolume& sv, const LabelVolume& truth) {
  RegionGraph graph = build_region_graph(sv);
  ContingencyTable ct = ContingencyTable::from_volumes(sv, truth);
  ExpertRollout out;
  out.initial_vi = ct.variation_of_information();
  while (true) {
    EdgeChoice best = best_edge(graph, ct);
    if (!best.valid || !(best.delta < 0.0)) break;
    std::uint32_t a = best.pair.first, b = best.pair.second;
    std::uint32_t into = std::min(a, b);
    out.steps.push_back({best.canonical, best.delta});
    ct.merge_rows(a, b, into);
    graph.merge(a, b);
  }
  out.final_vi = ct.variation_of_information();
  const UnionFind& uf = graph.segments();
  out.final_labels = LabelVolume(sv.shape());
  for (std::size_t i = 0; i < sv.shape().voxels(); ++i)
    out.final_labels.at(i) = sv.at(i) == 0 ? 0 : uf.find(sv.at(i));
  return out;
}

ExtractionResult extract_examples(const LabelVolume& sv, const LabelVolume& truth,
                                  const std::vector<DescriptorType>& types,
                                  const FeatureProvider& provider, const ExtractionConfig& cfg) {
  if (cfg.state_stride < 1) throw std::invalid_argument("state_stride must be >= 1");
  RegionGraph graph = build_region_graph(sv);
  ContingencyTable ct = ContingencyTable::from_volumes(sv, truth);
  std::vector<TypeIndex> indexes = build_type_indexes(types, sv, graph.segments());

  std::size_t half = std::max<std::size_t>(1, cfg.samples_per_type / 2);
  std::vector<PrioritySampler> neg_samplers, pos_samplers;
  for (std::size_t i = 0; i < types.size(); ++i) {
    neg_samplers.emplace_back(half);
    pos_samplers.emplace_back(half);
  }

  ExtractionResult result;
  result.rollout.initial_vi = ct.variation_of_information();

  std::uint64_t post[kMaxDescriptorWords];
  std::vector<std::uint64_t> zmask;
  std::vector<std::uint32_t> incident;
  std::vector<float> feat(provider.dim());

  std::uint64_t t = 0;
  while (true) {
    EdgeChoice best = best_edge(graph, ct);
    bool stopping = !best.valid || !(best.delta < 0.0);
    bool extract_here = (t % std::uint64_t(cfg.state_stride) == 0) &&
                        (!stopping || cfg.include_final_state);
    if (extract_here) {
      for (const SegPair& e : graph.edge_list()) {
        double y = ct.delta_vi_merge(e.first, e.second);
        SegPair canon = graph.edge(e.first, e.second).canonical;
        for (std::size_t ti = 0; ti < indexes.size(); ++ti) {
          TypeIndex& T = indexes[ti];
          bool center_based = T.dt.kind == DescriptorKind::center_based;
          int words = T.dt.words();
          for (int cell = 0; cell < int(T.regions.size()); ++cell) {
            RegionState& rs = T.regions[cell];
            if (!rs.pair_active(e)) continue;
            zmask.assign(rs.zone_words(), 0);
            rs.active_zone_mask({{e.first, e.second}}, zmask.data());
            RegionState::Overlay ov = rs.make_overlay({{e.first, e.second}});
            if (center_based) rs.incident_components(e, incident);
            T.for_centers_in_zones(cell, zmask.data(), [&](Vec3i x, std::size_t lin) {
              if (center_based) {
                std::int32_t f = rs.fragment_at(x);
                if (f < 0 || !std::binary_search(incident.begin(), incident.end(),
                                                 rs.component_of(std::uint32_t(f))))
                  return;
              }
              rs.compute_bits(T.dt, x, &ov, post);
              const std::uint64_t* pre = T.bits_at(cell, lin);
              if (bits_equal(pre, post, words)) return;
              TrainingExample ex;
              ex.y = float(y);
              ex.bits_pre.assign(pre, pre + words);
              ex.bits_post.assign(post, post + words);
              provider.feature_at(x, feat.data());
              ex.features = feat;
              // The draw is a deterministic function of the item identity, so
              // enumeration order does not affect the sample.
              double u = hash_to_unit(
                  cfg.seed, (t << 16) | ti,
                  (std::uint64_t(canon.first) << 32) | canon.second,
                  (std::uint64_t(cell) << 40) | sv.shape().index(x));
              if (y < 0)
                neg_samplers[ti].offer(std::move(ex), -double(y), u);
              else
                pos_samplers[ti].offer(std::move(ex), double(y), u);
            });
          }
        }
      }
    }
    if (stopping) break;
    std::uint32_t a = best.pair.first, b = best.pair.second;
    std::uint32_t into = std::min(a, b);
    result.rollout.steps.push_back({best.canonical, best.delta});
    // Refresh descriptor caches, then apply the merge to every region.
    for (std::size_t ti = 0; ti < indexes.size(); ++ti) {
      TypeIndex& T = indexes[ti];
      bool center_based = T.dt.kind == DescriptorKind::center_based;
      int words = T.dt.words();
      for (int cell = 0; cell < int(T.regions.size()); ++cell) {
        RegionState& rs = T.regions[cell];
        if (rs.pair_active(best.pair)) {
          zmask.assign(rs.zone_words(), 0);
          rs.active_zone_mask({{a, b}}, zmask.data());
          RegionState::Overlay ov = rs.make_overlay({{a, b}});
          T.for_centers_in_zones(cell, zmask.data(), [&](Vec3i x, std::size_t lin) {
            if (center_based) {
              std::int32_t f = rs.fragment_at(x);
              if (f < 0) return;
              std::uint32_t seg =
                  rs.component_segment(rs.component_of(std::uint32_t(f)), graph.segments());
              if (seg != a && seg != b) return;
            }
            rs.compute_bits(T.dt, x, &ov, post);
            std::uint64_t* pre = T.bits_at(cell, lin);
            if (!bits_equal(pre, post, words)) std::memcpy(pre, post, std::size_t(words) * 8);
          });
        }
        rs.apply_merge(a, b, into);
      }
    }
    ct.merge_rows(a, b, into);
    graph.merge(a, b);
    ++t;
  }

  result.rollout.final_vi = ct.variation_of_information();
  const UnionFind& uf = graph.segments();
  result.rollout.final_labels = LabelVolume(sv.shape());
  for (std::size_t i = 0; i < sv.shape().voxels(); ++i)
    result.rollout.final_labels.at(i) = sv.at(i) == 0 ? 0 : uf.find(sv.at(i));

  for (std::size_t ti = 0; ti < types.size(); ++ti) {
    result.stream_counts.push_back(neg_samplers[ti].stream_count() +
                                   pos_samplers[ti].stream_count());
    std::vector<TrainingExample> sample = neg_samplers[ti].take();
    std::vector<TrainingExample> pos = pos_samplers[ti].take();
    sample.insert(sample.end(), std::make_move_iterator(pos.begin()),
                  std::make_move_iterator(pos.end()));
    result.per_type.push_back(std::move(sample));
  }
  return result;
}

void append_examples(std::vector<std::vector<TrainingExample>>& into,
                     const std::vector<std::vector<TrainingExample>>& from) {
  if (into.empty()) {
    into = from;
    return;
  }
  if (into.size() != from.size()) throw std::invalid_argument("type count mismatch");
  for (std::size_t i = 0; i < into.size(); ++i)
    into[i].insert(into[i].end(), from[i].begin(), from[i].end());
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "log") return LossKind::log_loss;
  if (s == "signed_linear") return LossKind::signed_linear;
  throw std::invalid_argument("unknown loss: " + s);
}

std::string to_string(LossKind k) {
  return k == LossKind::log_loss ? "log" : "signed_linear";
}

namespace {

struct RowRef {
  const TrainingExample* ex;
  bool post;  // post-merge row carries sign(y); pre-merge row the opposite
  int sign() const {
    int s = ex->y > 0 ? 1 : (ex->y < 0 ? -1 : 0);
    return post ? s : -s;
  }
  const std::uint64_t* bits() const { return post ? ex->bits_post.data() : ex->bits_pre.data(); }
};

double row_loss(double a, int sign, double w, LossKind kind) {
  if (kind == LossKind::signed_linear) return sign * w * a;
  double eps = 1e-12;
  double p = std::min(std::max(a, eps), 1.0 - eps);
  return sign > 0 ? -w * std::log(p) : -w * std::log(1.0 - p);
}

double row_gz(double a, int sign, double w, LossKind kind) {
  // gradient of the row loss with respect to the pre-logistic activation
  if (kind == LossKind::signed_linear) return sign * w * a * (1.0 - a);
  double label = sign > 0 ? 1.0 : 0.0;
  return w * (a - label);
}

std::vector<RowRef> expand_rows(const std::vector<TrainingExample>& examples) {
  std::vector<RowRef> rows;
  rows.reserve(examples.size() * 2);
  for (const TrainingExample& ex : examples) {
    if (ex.weight == 0.f || ex.y == 0.f) continue;
    rows.push_back({&ex, true});
    rows.push_back({&ex, false});
  }
  return rows;
}

}  // namespace

TrainResult train_energy_model(EnergyModel& model, const std::vector<TrainingExample>& examples,
                               const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch < 1 || cfg.learning_rate <= 0)
    throw std::invalid_argument("bad training config");
  std::vector<RowRef> rows = expand_rows(examples);
  if (rows.empty()) throw std::invalid_argument("no usable training rows");
  for (const TrainingExample& ex : examples) {
    if (!ex.bits_pre.empty() &&
        int(ex.bits_pre.size()) != (model.k() + 63) / 64)
      throw std::invalid_argument("example descriptor width does not match model");
    if (!ex.features.empty() && int(ex.features.size()) != model.feature_dim())
      throw std::invalid_argument("example feature dim does not match model");
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> grad(model.parameter_count());
  std::vector<double> a1, a2, mask(model.hidden());
  double p = model.dropout_p();
  TrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle with the library RNG for reproducibility.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = rng.below(i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch)) {
      std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t r = start; r < end; ++r) {
        const RowRef& row = rows[order[r]];
        for (int j = 0; j < model.hidden(); ++j)
          mask[j] = (p > 0 && rng.unit() < p) ? 0.0 : 1.0 / (1.0 - p);
        double a = model.forward(row.bits(), row.ex->features.data(), mask.data(), a1, a2);
        double w = row.ex->weight;
        epoch_loss += row_loss(a, row.sign(), w, cfg.loss);
        double gz = row_gz(a, row.sign(), w, cfg.loss);
        model.backward(row.bits(), row.ex->features.data(), mask.data(), a1, a2, gz, grad);
      }
      double scale = cfg.learning_rate / double(end - start);
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (grad[i] != 0.0) model.parameter(i) -= scale * grad[i];
    }
    epoch_loss /= double(rows.size());
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                               "; reduce the learning rate");
    result.epoch_loss.push_back(epoch_loss);
  }
  return result;
}

double training_loss(const EnergyModel& model, const std::vector<TrainingExample>& examples,
                     LossKind loss) {
  std::vector<RowRef> rows = expand_rows(examples);
  std::vector<double> a1, a2;
  double total = 0.0;
  for (const RowRef& row : rows) {
    double a = model.forward(row.bits(), row.ex->features.data(), nullptr, a1, a2);
    total += row_loss(a, row.sign(), row.ex->weight, loss);
  }
  return total;
}

std::vector<double> training_loss_gradient(const EnergyModel& model,
                                           const std::vector<TrainingExample>& examples,
                                           LossKind loss) {
  std::vector<RowRef> rows = expand_rows(examples);
  std::vector<double> grad(model.parameter_count(), 0.0);
  std::vector<double> a1, a2;
  for (const RowRef& row : rows) {
    double a = model.forward(row.bits(), row.ex->features.data(), nullptr, a1, a2);
    double gz = row_gz(a, row.sign(), row.ex->weight, loss);
    model.backward(row.bits(), row.ex->features.data(), nullptr, a1, a2, gz, grad);
  }
  return grad;
}

void write_examples(const std::string& path,
                    const std::vector<std::vector<TrainingExample>>& per_type,
                    const std::vector<DescriptorType>& types, int feature_dim) {
  if (per_type.size() != types.size()) throw std::invalid_argument("type count mismatch");
  nlohmann::json header;
  header["feature_dim"] = feature_dim;
  nlohmann::json tj = nlohmann::json::array();
  for (std::size_t i = 0; i < types.size(); ++i)
    tj.push_back({{"id", types[i].id}, {"k", types[i].k}, {"count", per_type[i].size()}});
  header["types"] = std::move(tj);
  std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write examples: " + path);
  const char magic[4] = {'C', 'E', 'L', 'X'};
  out.write(magic, 4);
  std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(htext.data(), std::streamsize(htext.size()));
  for (std::size_t ti = 0; ti < per_type.size(); ++ti) {
    int words = types[ti].words();
    for (const TrainingExample& ex : per_type[ti]) {
      out.write(reinterpret_cast<const char*>(&ex.y), 4);
      out.write(reinterpret_cast<const char*>(&ex.weight), 4);
      out.write(reinterpret_cast<const char*>(ex.bits_pre.data()), words * 8);
      out.write(reinterpret_cast<const char*>(ex.bits_post.data()), words * 8);
      out.write(reinterpret_cast<const char*>(ex.features.data()),
                std::streamsize(ex.features.size() * 4));
    }
  }
}

std::vector<std::vector<TrainingExample>> read_examples(const std::string& path,
                                                        const std::vector<DescriptorType>& types,
                                                        int* feature_dim_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read examples: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CELX", 4) != 0)
    throw std::runtime_error("not an example file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string htext(hlen, '\0');
  in.read(htext.data(), std::streamsize(hlen));
  nlohmann::json header = nlohmann::json::parse(htext);
  int feature_dim = header.at("feature_dim").get<int>();
  if (feature_dim_out) *feature_dim_out = feature_dim;
  auto tj = header.at("types");
  if (tj.size() != types.size()) throw std::runtime_error("example file type count mismatch");
  std::vector<std::vector<TrainingExample>> per_type(types.size());
  for (std::size_t ti = 0; ti < types.size(); ++ti) {
    if (tj[ti].at("k").get<int>() != types[ti].k)
      throw std::runtime_error("example file descriptor width mismatch");
    std::size_t count = tj[ti].at("count").get<std::size_t>();
    int words = types[ti].words();
    per_type[ti].resize(count);
    for (TrainingExample& ex : per_type[ti]) {
      in.read(reinterpret_cast<char*>(&ex.y), 4);
      in.read(reinterpret_cast<char*>(&ex.weight), 4);
      ex.bits_pre.resize(words);
      ex.bits_post.resize(words);
      in.read(reinterpret_cast<char*>(ex.bits_pre.data()), words * 8);
      in.read(reinterpret_cast<char*>(ex.bits_post.data()), words * 8);
      ex.features.resize(feature_dim);
      in.read(reinterpret_cast<char*>(ex.features.data()), std::streamsize(feature_dim * 4));
    }
    if (!in) throw std::runtime_error("truncated example file: " + path);
  }
  return per_type;
}

}  // namespace celis
