#include "goat/formation.hpp"

#include "goat/checkpoint.hpp"
#include "goat/errors.hpp"
#include "goat/feature_io.hpp"
#include "goat/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace goat {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// About 1 inside [-0.5, 0.5], falling to 0.5 at the edges.
double box(double u) {
  constexpr double kSharpness = 12.0;
  return logistic(kSharpness * (0.5 + u)) * logistic(kSharpness * (0.5 - u));
}

}  // namespace

AnchorGrid::AnchorGrid(std::size_t side) : side_(side) {
  if (side < 2) throw InvalidArgument("anchor grid side must be >= 2");
}

Point2 AnchorGrid::anchor(std::size_t patch) const {
  const std::size_t row = patch / side_, col = patch % side_;
  return {(static_cast<double>(col) + 0.5) / static_cast<double>(side_),
          (static_cast<double>(row) + 0.5) / static_cast<double>(side_)};
}

std::size_t AnchorGrid::patch_of(const Point2& p) const {
  const auto cell = [&](double v) {
    const auto c = static_cast<std::ptrdiff_t>(std::floor(v * static_cast<double>(side_)));
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(side_) - 1));
  };
  return cell(p.y) * side_ + cell(p.x);
}

RowVector positional_encoding(const Point2& anchor, std::size_t dim, double scale) {
  if (dim == 0 || dim % 4 != 0) throw InvalidArgument("positional encoding width must be a positive multiple of 4");
  const std::size_t half = dim / 2;
  RowVector out(static_cast<Eigen::Index>(dim));
  const double coords[2] = {anchor.x * scale, anchor.y * scale};
  for (std::size_t axis = 0; axis < 2; ++axis) {
    for (std::size_t j = 0; j < half / 2; ++j) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(j) / static_cast<double>(half));
      const auto at = static_cast<Eigen::Index>(axis * half + 2 * j);
      out[at] = std::sin(coords[axis] * freq);
      out[at + 1] = std::cos(coords[axis] * freq);
    }
  }
  return out;
}

Matrix grid_positional_encoding(const AnchorGrid& grid, std::size_t dim) {
  Matrix out(static_cast<Eigen::Index>(grid.patch_count()), static_cast<Eigen::Index>(dim));
  for (std::size_t p = 0; p < grid.patch_count(); ++p) {
    // Coordinates in patch units so the fastest channel moves about one radian per patch.
    out.row(static_cast<Eigen::Index>(p)) = positional_encoding(grid.anchor(p), dim, static_cast<double>(grid.side()));
  }
  return out;
}

VertexTargets build_targets(const std::vector<Point2>& vertices, const AnchorGrid& grid) {
  const auto p = static_cast<Eigen::Index>(grid.patch_count());
  VertexTargets t{Vector::Zero(p), Matrix::Zero(p, 2)};
  for (const Point2& v : vertices) {
    const std::size_t patch = grid.patch_of(v);
    const auto idx = static_cast<Eigen::Index>(patch);
    if (t.presence[idx] != 0.0) throw InvalidArgument("two formation vertices share patch " + std::to_string(patch));
    const Point2 a = grid.anchor(patch);
    t.presence[idx] = 1.0;
    t.offsets(idx, 0) = std::clamp((v.x - a.x) / grid.patch_size(), -0.5, 0.5);
    t.offsets(idx, 1) = std::clamp((v.y - a.y) / grid.patch_size(), -0.5, 0.5);
  }
  return t;
}

FormationLoss formation_loss(const VertexPrediction& pred, const VertexTargets& targets, double lambda) {
  if (pred.confidences.size() != targets.presence.size() || pred.offsets.rows() != targets.offsets.rows()) {
    throw InvalidArgument("formation_loss: shape mismatch");
  }
  constexpr double kClamp = 1e-7;
  FormationLoss loss;
  for (Eigen::Index i = 0; i < pred.confidences.size(); ++i) {
    const double p = std::clamp(pred.confidences[i], kClamp, 1.0 - kClamp);
    const double t = targets.presence[i];
    loss.bce -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    if (t != 0.0) loss.mse += (pred.offsets.row(i) - targets.offsets.row(i)).squaredNorm();
  }
  loss.total = loss.bce + lambda * loss.mse;
  return loss;
}

std::vector<DetectedVertex> decode_vertices(const VertexPrediction& pred, const AnchorGrid& grid, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("decode threshold must lie in (0,1)");
  std::vector<DetectedVertex> out;
  for (Eigen::Index i = 0; i < pred.confidences.size(); ++i) {
    if (!(pred.confidences[i] > threshold)) continue;
    const Point2 a = grid.anchor(static_cast<std::size_t>(i));
    out.push_back({std::clamp(a.x + pred.offsets(i, 0) * grid.patch_size(), 0.0, 1.0),
                   std::clamp(a.y + pred.offsets(i, 1) * grid.patch_size(), 0.0, 1.0), pred.confidences[i]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DetectedVertex& a, const DetectedVertex& b) { return a.confidence > b.confidence; });
  return out;
}

namespace {

void finish_score(DetectionScore& s) {
  s.precision = s.predicted == 0 ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(s.predicted);
  s.recall = s.truth == 0 ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(s.truth);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
}

}  // namespace

DetectionScore evaluate_detection(const std::vector<Point2>& predicted, const std::vector<Point2>& truth, double radius) {
  if (!(radius > 0.0)) throw InvalidArgument("match radius must be > 0");
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double dist = distance(predicted[p], truth[t]);
      if (dist <= radius) pairs.emplace_back(dist, p, t);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> pred_used(predicted.size(), false), truth_used(truth.size(), false);
  DetectionScore s;
  s.predicted = predicted.size();
  s.truth = truth.size();
  double error = 0.0;
  for (const auto& [dist, p, t] : pairs) {
    if (pred_used[p] || truth_used[t]) continue;
    pred_used[p] = truth_used[t] = true;
    ++s.matched;
    error += dist;
  }
  s.mean_offset_error = s.matched == 0 ? 0.0 : error / static_cast<double>(s.matched);
  finish_score(s);
  return s;
}

DetectionScore aggregate_detection(std::span<const DetectionScore> per_image) {
  DetectionScore total;
  double error = 0.0;
  for (const DetectionScore& s : per_image) {
    total.matched += s.matched;
    total.predicted += s.predicted;
    total.truth += s.truth;
    error += s.mean_offset_error * static_cast<double>(s.matched);
  }
  total.mean_offset_error = total.matched == 0 ? 0.0 : error / static_cast<double>(total.matched);
  finish_score(total);
  return total;
}

double DetectorConfig::radius() const {
  return match_radius > 0.0 ? match_radius : std::sqrt(2.0) / static_cast<double>(grid_side);
}

Json DetectorConfig::to_json() const {
  return {{"grid_side", grid_side}, {"feature_dim", feature_dim}, {"heads", heads},         {"hidden", hidden},
          {"lambda", lambda},       {"threshold", threshold},     {"match_radius", match_radius}};
}

DetectorConfig DetectorConfig::from_json(const Json& j) {
  DetectorConfig c;
  c.grid_side = j.value("grid_side", c.grid_side);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.heads = j.value("heads", c.heads);
  c.hidden = j.value("hidden", c.hidden);
  c.lambda = j.value("lambda", c.lambda);
  c.threshold = j.value("threshold", c.threshold);
  c.match_radius = j.value("match_radius", c.match_radius);
  return c;
}

void DetectorConfig::validate() const {
  if (grid_side < 2) throw InvalidArgument("grid_side must be >= 2");
  if (feature_dim < 8 || feature_dim % 4 != 0) throw InvalidArgument("detector feature_dim must be a multiple of 4, >= 8");
  if (heads == 0 || feature_dim % heads != 0) throw InvalidArgument("detector feature_dim must be divisible by heads");
  if (hidden == 0) throw InvalidArgument("detector hidden width must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0,1)");
  if (lambda < 0.0) throw InvalidArgument("lambda must be >= 0");
}

DetectorModel DetectorModel::init(const DetectorConfig& config, std::uint64_t seed) {
  config.validate();
  auto rng = substream(seed, "detector.init");
  const auto d = static_cast<Eigen::Index>(config.feature_dim);
  const auto h = static_cast<Eigen::Index>(config.hidden);
  const double sd = std::sqrt(2.0 / static_cast<double>(d)), sh = 1.0 / std::sqrt(static_cast<double>(h));
  DetectorModel m;
  m.config = config;
  m.attention = AttentionLayerParams::init(config.feature_dim, rng);
  m.cls_hidden_weight = gaussian(d, h, sd, rng);
  m.cls_hidden_bias = Matrix::Zero(1, h);
  m.cls_out_weight = gaussian(h, 1, sh, rng);
  m.cls_out_bias = Matrix::Zero(1, 1);
  m.off_hidden_weight = gaussian(d, h, sd, rng);
  m.off_hidden_bias = Matrix::Zero(1, h);
  m.off_out_weight = gaussian(h, 2, sh, rng);
  m.off_out_bias = Matrix::Zero(1, 2);
  return m;
}

ParameterPack DetectorModel::parameters() {
  ParameterPack p;
  p.add("attn.query", attention.query);
  p.add("attn.key", attention.key);
  p.add("attn.gamma", attention.norm.gamma);
  p.add("attn.beta", attention.norm.beta);
  p.add("cls.hidden_weight", cls_hidden_weight);
  p.add("cls.hidden_bias", cls_hidden_bias);
  p.add("cls.out_weight", cls_out_weight);
  p.add("cls.out_bias", cls_out_bias);
  p.add("off.hidden_weight", off_hidden_weight);
  p.add("off.hidden_bias", off_hidden_bias);
  p.add("off.out_weight", off_out_weight);
  p.add("off.out_bias", off_out_bias);
  return p;
}

ParameterPack DetectorModel::state() {
  ParameterPack p = parameters();
  p.add("attn.running_mean", attention.norm.running_mean);
  p.add("attn.running_var", attention.norm.running_var);
  return p;
}

DetectorVars bind(Tape& tape, const DetectorModel& m) {
  DetectorVars v;
  v.attention = bind(tape, m.attention);
  v.cls_hidden_weight = tape.parameter(m.cls_hidden_weight);
  v.cls_hidden_bias = tape.parameter(m.cls_hidden_bias);
  v.cls_out_weight = tape.parameter(m.cls_out_weight);
  v.cls_out_bias = tape.parameter(m.cls_out_bias);
  v.off_hidden_weight = tape.parameter(m.off_hidden_weight);
  v.off_hidden_bias = tape.parameter(m.off_hidden_bias);
  v.off_out_weight = tape.parameter(m.off_out_weight);
  v.off_out_bias = tape.parameter(m.off_out_bias);
  v.flat = {v.attention.query,     v.attention.key,     v.attention.gamma, v.attention.beta,
            v.cls_hidden_weight,   v.cls_hidden_bias,   v.cls_out_weight,  v.cls_out_bias,
            v.off_hidden_weight,   v.off_hidden_bias,   v.off_out_weight,  v.off_out_bias};
  return v;
}

DetectorOutputVars detect_formation(Tape& tape, const DetectorVars& vars, DetectorModel& model, const AnchorGrid& grid,
                                    const Matrix& patch_features, const ForwardOptions& options) {
  if (static_cast<std::size_t>(patch_features.rows()) != grid.patch_count() ||
      static_cast<std::size_t>(patch_features.cols()) != model.config.feature_dim) {
    throw InvalidArgument("detect_formation: patch features must be " + std::to_string(grid.patch_count()) + " x " +
                          std::to_string(model.config.feature_dim));
  }
  if (!patch_features.allFinite()) throw InvalidArgument("detect_formation: patch features not finite");
  const Var x = tape.constant(patch_features + grid_positional_encoding(grid, model.config.feature_dim));
  const AttentionMix mix = attention_mix(tape, x, x, x, vars.attention, model.config.heads, options);
  const Var features = normalize_residuals(tape, {mix.residual}, vars.attention, model.attention.norm, options).front();
  const Var cls_hidden = tape.relu(linear(tape, features, vars.cls_hidden_weight, vars.cls_hidden_bias));
  const Var off_hidden = tape.relu(linear(tape, features, vars.off_hidden_weight, vars.off_hidden_bias));
  return {tape.sigmoid(linear(tape, cls_hidden, vars.cls_out_weight, vars.cls_out_bias)),
          linear(tape, off_hidden, vars.off_out_weight, vars.off_out_bias)};
}

VertexPrediction detect_formation(const Matrix& patch_features, const AnchorGrid& grid, DetectorModel& model,
                                  const ForwardOptions& options) {
  Tape tape;
  const DetectorVars vars = bind(tape, model);
  const DetectorOutputVars out = detect_formation(tape, vars, model, grid, patch_features, options);
  const Matrix& conf = tape.value(out.confidences);
  return {Eigen::Map<const Vector>(conf.data(), conf.size()), tape.value(out.offsets)};
}

Var formation_loss(Tape& tape, const DetectorOutputVars& out, const VertexTargets& targets, double lambda) {
  const Var bce = tape.bce_sum(out.confidences, tape.constant(Matrix(targets.presence)));
  Matrix mask(targets.presence.size(), 2);
  mask.col(0) = targets.presence;
  mask.col(1) = targets.presence;
  const Var diff = tape.hadamard(tape.sub(out.offsets, tape.constant(targets.offsets)), tape.constant(mask));
  const Var mse = tape.sum(tape.hadamard(diff, diff));
  return tape.add(bce, tape.scale(mse, lambda));
}

Matrix formation_patch_features(const std::vector<Point2>& actors, const AnchorGrid& grid, std::size_t feature_dim,
                                std::mt19937_64& rng, double noise) {
  if (feature_dim < 8) throw InvalidArgument("formation features need at least 8 channels");
  const auto p_count = static_cast<Eigen::Index>(grid.patch_count());
  Matrix out(p_count, static_cast<Eigen::Index>(feature_dim));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = noise * normal(rng);
  if (actors.empty()) return out;

  Point2 centroid;
  for (const Point2& a : actors) {
    centroid.x += a.x / static_cast<double>(actors.size());
    centroid.y += a.y / static_cast<double>(actors.size());
  }
  double spread = 0.0;
  for (const Point2& a : actors) spread = std::max(spread, distance(a, centroid));
  constexpr double kGain = 2.0;
  for (Eigen::Index p = 0; p < p_count; ++p) {
    const Point2 anchor = grid.anchor(static_cast<std::size_t>(p));
    double occupancy = 0.0, sum_dx = 0.0, sum_dy = 0.0;
    for (const Point2& a : actors) {
      const double dx = (a.x - anchor.x) / grid.patch_size(), dy = (a.y - anchor.y) / grid.patch_size();
      const double r2 = dx * dx + dy * dy;
      // Smooth box over the patch for the near field, wide Gaussian for context.
      const double near = box(dx) * box(dy);
      const double wide = std::exp(-r2 / (2.0 * 1.5 * 1.5));
      const double outward = spread > 0.0 ? distance(a, centroid) / spread : 0.0;
      occupancy += near;
      out(p, 0) += kGain * near;
      sum_dx += near * dx;
      sum_dy += near * dy;
      out(p, 3) += kGain * near * outward;
      out(p, 4) += kGain * wide;
      out(p, 5) += kGain * wide * outward;
      out(p, 6) += kGain * near * (1.0 - outward);
      out(p, 7) += kGain * wide * (1.0 - outward);
    }
    // Occupancy-weighted mean offset of the actors near this anchor.
    constexpr double kEmpty = 0.05;
    out(p, 1) += kGain * sum_dx / (occupancy + kEmpty);
    out(p, 2) += kGain * sum_dy / (occupancy + kEmpty);
  }
  return out;
}

std::vector<FormationImage> generate_formation_images(std::size_t count, const DetectorConfig& config,
                                                      std::uint64_t seed) {
  config.validate();
  const AnchorGrid grid(config.grid_side);
  std::vector<FormationImage> out;
  out.reserve(count);
  constexpr std::size_t kActors = 8;
  for (std::size_t k = 0; k < count; ++k) {
    auto rng = substream(seed, "formation.image", k);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    FormationImage img;
    for (;;) {
      const std::size_t vertex_count = 3 + static_cast<std::size_t>(rng() % (kActors - 2));
      const double radius = 0.25 + 0.15 * unit(rng);
      const Point2 center{0.5 + 0.1 * (unit(rng) - 0.5), 0.5 + 0.1 * (unit(rng) - 0.5)};
      const double rotation = 2.0 * std::numbers::pi * unit(rng);
      const double step = 2.0 * std::numbers::pi / static_cast<double>(vertex_count);
      img.actors.clear();
      for (std::size_t v = 0; v < vertex_count; ++v) {
        const double angle = rotation + step * (static_cast<double>(v) + 0.3 * (unit(rng) - 0.5));
        img.actors.push_back({center.x + radius * std::cos(angle), center.y + radius * std::sin(angle)});
      }
      // Interior actors stay inside the inscribed circle of the polygon.
      for (std::size_t a = vertex_count; a < kActors; ++a) {
        const double r = 0.45 * radius * std::sqrt(unit(rng));
        const double angle = 2.0 * std::numbers::pi * unit(rng);
        img.actors.push_back({center.x + r * std::cos(angle), center.y + r * std::sin(angle)});
      }
      bool ok = true;
      for (std::size_t i = 0; i < img.actors.size() && ok; ++i) {
        for (std::size_t j = i + 1; j < img.actors.size() && ok; ++j) {
          ok = distance(img.actors[i], img.actors[j]) >= 2.0 * grid.patch_size() &&
               grid.patch_of(img.actors[i]) != grid.patch_of(img.actors[j]);
        }
      }
      if (!ok) continue;
      const std::vector<std::size_t> hull = convex_hull(img.actors);
      img.vertices.clear();
      img.vertex_flags.assign(img.actors.size(), false);
      for (std::size_t idx : hull) {
        img.vertices.push_back(img.actors[idx]);
        img.vertex_flags[idx] = true;
      }
      if (img.vertices.size() >= 3) break;
    }
    img.patch_features = formation_patch_features(img.actors, grid, config.feature_dim, rng);
    out.push_back(std::move(img));
  }
  return out;
}

double detector_batch_loss(DetectorModel& model, std::span<const FormationImage* const> images,
                           const ForwardOptions& options, Vector* grad) {
  if (images.empty()) throw InvalidArgument("detector_batch_loss: empty batch");
  const AnchorGrid grid(model.config.grid_side);
  Tape tape;
  const DetectorVars vars = bind(tape, model);
  std::vector<Var> losses;
  for (const FormationImage* img : images) {
    const DetectorOutputVars out = detect_formation(tape, vars, model, grid, img->patch_features, options);
    losses.push_back(formation_loss(tape, out, build_targets(img->vertices, grid), model.config.lambda));
  }
  const Var total = tape.scale(tape.sum(tape.concat_rows(losses)), 1.0 / static_cast<double>(images.size()));
  const double value = tape.value(total)(0, 0);
  if (grad != nullptr) {
    tape.backward(total);
    grad->resize(model.parameters().size());
    Eigen::Index at = 0;
    for (Var v : vars.flat) {
      const Matrix& g = tape.grad(v);
      grad->segment(at, g.size()) = Eigen::Map<const Vector>(g.data(), g.size());
      at += g.size();
    }
  }
  return value;
}

DetectorTrainResult train_detector(const std::vector<FormationImage>& images, const DetectorConfig& config,
                                   const TrainConfig& tc) {
  if (images.empty()) throw InvalidArgument("detector training set is empty");
  if (!(tc.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  DetectorTrainResult result{DetectorModel::init(config, tc.seed), {}};
  const std::size_t n = images.size();
  std::vector<const FormationImage*> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = &images[i];
  const ForwardOptions options{Mode::train, false, false};
  const bool shuffle = tc.batch_size != 0 && tc.batch_size < n;
  Vector grad;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (shuffle) {
      auto rng = substream(tc.seed, "detector.shuffle", epoch);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    }
    double total = 0.0;
    for (const auto& [start, count] : batch_bounds(n, tc.batch_size)) {
      const std::span<const FormationImage* const> chunk(order.data() + start, count);
      const double loss = detector_batch_loss(result.model, chunk, options, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw DivergenceError("detector training diverged at epoch " + std::to_string(epoch), static_cast<int>(epoch));
      }
      total += loss * static_cast<double>(count);
      if (tc.learning_rate > 0.0) {
        ParameterPack params = result.model.parameters();
        params.assign(params.flatten() - tc.learning_rate * grad);
      }
    }
    result.loss_history.push_back(total / static_cast<double>(n));
  }
  return result;
}

void save_detector(DetectorModel& model, const std::filesystem::path& path, const Json& metadata) {
  write_file(path, encode_checkpoint_container(
                       {{"kind", "formation_detector"}, {"config", model.config.to_json()}, {"metadata", metadata}},
                       model.state()));
}

DetectorModel load_detector(const std::filesystem::path& path, Json* metadata) {
  const std::string bytes = read_file(path);
  const CheckpointContainer c = decode_checkpoint_container(bytes);
  if (c.header.value("kind", std::string()) != "formation_detector") throw CheckpointError("checkpoint: not a detector");
  DetectorModel model;
  try {
    model = DetectorModel::init(DetectorConfig::from_json(c.header.at("config")), 0);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("detector config: ") + e.what());
  }
  ParameterPack st = model.state();
  restore_state(c, st);
  if (metadata != nullptr) *metadata = c.header.value("metadata", Json::object());
  return model;
}

}  // namespace goat
