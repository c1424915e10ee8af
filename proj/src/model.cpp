#include "goat/model.hpp"

#include "goat/checkpoint.hpp"
#include "goat/errors.hpp"
#include "goat/feature_io.hpp"
#include "goat/random.hpp"

#include <cmath>
#include <numeric>

namespace goat {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}


}  // namespace

std::string_view to_string(Variant v) { return v == Variant::baseline ? "baseline" : "goat"; }

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "goat") return Variant::goat;
  throw InvalidArgument("unknown variant '" + std::string(name) + "' (expected baseline or goat)");
}

Json GoatConfig::to_json() const {
  return {{"variant", std::string(goat::to_string(variant))},
          {"group_dim", group_dim},
          {"value_dim", value_dim},
          {"layers", layers},
          {"heads", heads},
          {"hidden", hidden},
          {"graph",
           {{"distance_threshold", graph.distance_threshold},
            {"layers", graph.layers},
            {"activation", graph.activation == Activation::relu ? "relu" : "identity"}}}};
}

GoatConfig GoatConfig::from_json(const Json& j) {
  GoatConfig c;
  c.variant = parse_variant(j.value("variant", std::string("goat")));
  c.group_dim = j.value("group_dim", c.group_dim);
  c.value_dim = j.value("value_dim", c.value_dim);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("graph")) {
    const Json& g = j.at("graph");
    c.graph.distance_threshold = g.value("distance_threshold", c.graph.distance_threshold);
    c.graph.layers = g.value("layers", c.graph.layers);
    const std::string act = g.value("activation", std::string("relu"));
    if (act != "relu" && act != "identity") throw InvalidArgument("unknown activation '" + act + "'");
    c.graph.activation = act == "relu" ? Activation::relu : Activation::identity;
  }
  return c;
}

void GoatConfig::validate() const {
  if (group_dim == 0 || value_dim == 0 || hidden == 0) throw InvalidArgument("model dimensions must be >= 1");
  if (variant == Variant::goat) {
    if (heads == 0 || group_dim % heads != 0) throw InvalidArgument("group_dim must be divisible by heads");
    if (!(graph.distance_threshold > 0.0)) throw InvalidArgument("distance threshold must be > 0");
  }
}

GoatModel GoatModel::init(const GoatConfig& config, std::uint64_t seed) {
  config.validate();
  GoatModel m;
  m.config = config;
  auto rng = substream(seed, "init");
  if (config.variant == Variant::goat) {
    m.graph = GroupGraphParams::init(config.group_dim, config.graph, rng);
    if (config.value_dim != config.group_dim) {
      m.value_projection = gaussian(static_cast<Eigen::Index>(config.value_dim), static_cast<Eigen::Index>(config.group_dim),
                                    1.0 / std::sqrt(static_cast<double>(config.value_dim)), rng);
    }
    for (std::size_t l = 0; l < config.layers; ++l) m.layers.push_back(AttentionLayerParams::init(config.group_dim, rng));
  }
  const auto in = static_cast<Eigen::Index>(m.head_input_dim());
  const auto hidden = static_cast<Eigen::Index>(config.hidden);
  m.head_hidden_weight = gaussian(in, hidden, std::sqrt(2.0 / static_cast<double>(in)), rng);
  m.head_hidden_bias = Matrix::Zero(1, hidden);
  m.head_out_weight = gaussian(hidden, 1, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  m.head_out_bias = Matrix::Zero(1, 1);
  return m;
}

std::size_t GoatModel::head_input_dim() const {
  return config.variant == Variant::goat ? config.group_dim : config.value_dim;
}

ParameterPack GoatModel::parameters() {
  ParameterPack p;
  if (config.variant == Variant::goat) {
    p.add("graph.embed_query", graph.embed_query);
    p.add("graph.embed_key", graph.embed_key);
    for (std::size_t l = 0; l < graph.gcn.size(); ++l) p.add("graph.gcn" + std::to_string(l), graph.gcn[l]);
    if (value_projection) p.add("value_projection", *value_projection);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "attn" + std::to_string(l) + ".";
      p.add(prefix + "query", layers[l].query);
      p.add(prefix + "key", layers[l].key);
      p.add(prefix + "gamma", layers[l].norm.gamma);
      p.add(prefix + "beta", layers[l].norm.beta);
    }
  }
  p.add("head.hidden_weight", head_hidden_weight);
  p.add("head.hidden_bias", head_hidden_bias);
  p.add("head.out_weight", head_out_weight);
  p.add("head.out_bias", head_out_bias);
  return p;
}

ParameterPack GoatModel::state() {
  ParameterPack p = parameters();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "attn" + std::to_string(l) + ".";
    p.add(prefix + "running_mean", layers[l].norm.running_mean);
    p.add(prefix + "running_var", layers[l].norm.running_var);
  }
  return p;
}

ModelVars bind(Tape& tape, const GoatModel& model) {
  ModelVars v;
  if (model.config.variant == Variant::goat) {
    v.graph = bind(tape, model.graph);
    v.flat.push_back(v.graph->embed_query);
    v.flat.push_back(v.graph->embed_key);
    for (Var w : v.graph->gcn) v.flat.push_back(w);
    if (model.value_projection) {
      v.value_projection = tape.parameter(*model.value_projection);
      v.flat.push_back(*v.value_projection);
    }
    for (const AttentionLayerParams& layer : model.layers) {
      v.layers.push_back(bind(tape, layer));
      const AttentionLayerVars& lv = v.layers.back();
      v.flat.insert(v.flat.end(), {lv.query, lv.key, lv.gamma, lv.beta});
    }
  }
  v.head_hidden_weight = tape.parameter(model.head_hidden_weight);
  v.head_hidden_bias = tape.parameter(model.head_hidden_bias);
  v.head_out_weight = tape.parameter(model.head_out_weight);
  v.head_out_bias = tape.parameter(model.head_out_bias);
  v.flat.insert(v.flat.end(), {v.head_hidden_weight, v.head_hidden_bias, v.head_out_weight, v.head_out_bias});
  return v;
}

namespace {

Var head(Tape& tape, const ModelVars& vars, Var pooled) {
  const Var hidden = tape.relu(linear(tape, pooled, vars.head_hidden_weight, vars.head_hidden_bias));
  return tape.sigmoid(linear(tape, hidden, vars.head_out_weight, vars.head_out_bias));
}

void check_sample(const GoatModel& model, const VideoSample& s) {
  if (static_cast<std::size_t>(s.clip_features.cols()) != model.config.value_dim) {
    throw CheckpointError(s.id + ": clip feature width " + std::to_string(s.clip_features.cols()) +
                          " does not match model value_dim " + std::to_string(model.config.value_dim));
  }
  if (model.config.variant == Variant::goat) {
    if (!s.has_actors()) throw InvalidArgument(s.id + ": goat variant needs actor frames");
    if (static_cast<std::size_t>(s.actor_frames.front().features.cols()) != model.config.group_dim) {
      throw CheckpointError(s.id + ": actor feature width does not match model group_dim");
    }
  }
}

}  // namespace

BatchForward forward_batch(Tape& tape, const ModelVars& vars, GoatModel& model,
                           std::span<const VideoSample* const> samples, const ForwardOptions& options) {
  BatchForward out;
  for (const VideoSample* s : samples) check_sample(model, *s);
  if (model.config.variant == Variant::baseline) {
    for (const VideoSample* s : samples) {
      out.predictions.push_back(head(tape, vars, tape.mean_rows(tape.constant(s->clip_features))));
    }
    return out;
  }
  std::vector<Var> group, values;
  for (const VideoSample* s : samples) {
    group.push_back(group_embedding_sequence(tape, s->actor_frames, *vars.graph, model.config.graph));
    Var v = tape.constant(s->clip_features);
    if (vars.value_projection) v = tape.matmul(v, *vars.value_projection);
    values.push_back(v);
  }
  FuseVars fused = temporal_fuse(tape, group, values, vars.layers, model.layers, model.config.heads, options);
  for (Var f : fused.fused) out.predictions.push_back(head(tape, vars, tape.mean_rows(f)));
  out.head_weights = std::move(fused.head_weights);
  return out;
}

double batch_loss(GoatModel& model, std::span<const VideoSample* const> samples, const ScoreRange& range,
                  const ForwardOptions& options, Vector* grad) {
  if (samples.empty()) throw InvalidArgument("batch_loss: empty batch");
  Tape tape;
  const ModelVars vars = bind(tape, model);
  const BatchForward fwd = forward_batch(tape, vars, model, samples, options);
  Matrix targets(static_cast<Eigen::Index>(samples.size()), 1);
  for (std::size_t b = 0; b < samples.size(); ++b) targets(static_cast<Eigen::Index>(b), 0) = range.normalize(samples[b]->score);
  const Var preds = fwd.predictions.size() == 1 ? fwd.predictions.front() : tape.concat_rows(fwd.predictions);
  const Var loss = mse(tape, preds, tape.constant(targets));
  const double value = tape.value(loss)(0, 0);
  if (grad != nullptr) {
    tape.backward(loss);
    Eigen::Index total = 0;
    for (Var v : vars.flat) total += tape.value(v).size();
    grad->resize(total);
    Eigen::Index at = 0;
    for (Var v : vars.flat) {
      const Matrix& g = tape.grad(v);
      grad->segment(at, g.size()) = Eigen::Map<const Vector>(g.data(), g.size());
      at += g.size();
    }
  }
  return value;
}

double predict_score(GoatModel& model, const VideoSample& sample, const ForwardOptions& options) {
  Tape tape;
  const ModelVars vars = bind(tape, model);
  const VideoSample* one[] = {&sample};
  const BatchForward fwd = forward_batch(tape, vars, model, one, options);
  return tape.value(fwd.predictions.front())(0, 0);
}

FuseResult fuse_sample(GoatModel& model, const VideoSample& sample, const ForwardOptions& options) {
  if (model.config.variant != Variant::goat) throw InvalidArgument("baseline model has no attention trace");
  check_sample(model, sample);
  Tape tape;
  const ModelVars vars = bind(tape, model);
  const Var group = group_embedding_sequence(tape, sample.actor_frames, *vars.graph, model.config.graph);
  Var v = tape.constant(sample.clip_features);
  if (vars.value_projection) v = tape.matmul(v, *vars.value_projection);
  const FuseVars fused = temporal_fuse(tape, {group}, {v}, vars.layers, model.layers, model.config.heads, options);
  return {tape.value(fused.fused.front()), collect_trace(tape, fused.head_weights.front())};
}

std::vector<double> train_in_place(GoatModel& model, const std::vector<VideoSample>& train, const ScoreRange& range,
                                   const TrainConfig& tc) {
  if (train.empty()) throw InvalidArgument("training set is empty");
  if (!(tc.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  const std::size_t n = train.size();
  const std::size_t batch = tc.batch_size == 0 || tc.batch_size > n ? n : tc.batch_size;
  const ForwardOptions options{Mode::train, false, false};
  std::vector<const VideoSample*> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = &train[i];
  std::vector<double> history;
  history.reserve(tc.epochs);
  Vector grad;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (batch < n) {
      auto rng = substream(tc.seed, "train.shuffle", epoch);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    }
    double total = 0.0;
    for (const auto& [start, count] : batch_bounds(n, batch)) {
      const std::span<const VideoSample* const> chunk(order.data() + start, count);
      const double loss = batch_loss(model, chunk, range, options, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch), static_cast<int>(epoch));
      }
      total += loss * static_cast<double>(count);
      if (tc.learning_rate > 0.0) {
        ParameterPack params = model.parameters();
        params.assign(params.flatten() - tc.learning_rate * grad);
      }
    }
    history.push_back(total / static_cast<double>(n));
  }
  return history;
}

TrainResult train_model(const std::vector<VideoSample>& train, const ScoreRange& range, const GoatConfig& config,
                        const TrainConfig& tc) {
  TrainResult result{GoatModel::init(config, tc.seed), {}};
  result.loss_history = train_in_place(result.model, train, range, tc);
  return result;
}

std::string encode_checkpoint(GoatModel& model, const Json& metadata) {
  return encode_checkpoint_container({{"kind", "goat_model"}, {"config", model.config.to_json()}, {"metadata", metadata}},
                                     model.state());
}

GoatModel decode_checkpoint(std::string_view bytes, Json* metadata) {
  const CheckpointContainer container = decode_checkpoint_container(bytes);
  if (container.header.value("kind", std::string()) != "goat_model") throw CheckpointError("checkpoint: not a score model");
  GoatModel model;
  try {
    model = GoatModel::init(GoatConfig::from_json(container.header.at("config")), 0);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  ParameterPack st = model.state();
  restore_state(container, st);
  if (metadata != nullptr) *metadata = container.header.value("metadata", Json::object());
  return model;
}

void save_checkpoint(GoatModel& model, const std::filesystem::path& path, const Json& metadata) {
  write_file(path, encode_checkpoint(model, metadata));
}

GoatModel load_checkpoint(const std::filesystem::path& path, Json* metadata) {
  return decode_checkpoint(read_file(path), metadata);
}

}  // namespace goat
