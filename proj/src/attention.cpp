#include "goat/attention.hpp"

#include "goat/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace goat {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

AttentionLayerParams AttentionLayerParams::init(std::size_t width, std::mt19937_64& rng) {
  const auto d = static_cast<Eigen::Index>(width);
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  return {gaussian(d, d, s, rng), gaussian(d, d, s, rng), BatchNormState<double>(d)};
}

RowVector AttentionTrace::salience() const {
  if (layers.empty()) return {};
  return layers.back().colwise().mean();
}

AttentionLayerVars bind(Tape& tape, const AttentionLayerParams& params) {
  return {tape.parameter(params.query), tape.parameter(params.key), tape.parameter(Matrix(params.norm.gamma)),
          tape.parameter(Matrix(params.norm.beta))};
}

AttentionMix attention_mix(Tape& tape, Var query, Var key, Var value, const AttentionLayerVars& vars,
                           std::size_t heads, const ForwardOptions& options) {
  const Eigen::Index t = tape.value(value).rows();
  const Eigen::Index width = tape.value(vars.query).cols();
  if (tape.value(query).rows() != t || tape.value(key).rows() != t) throw InvalidArgument("attention: T mismatch");
  if (tape.value(value).cols() != width) throw InvalidArgument("attention: value width != query width");
  if (heads == 0 || width % static_cast<Eigen::Index>(heads) != 0) {
    throw InvalidArgument("attention: width must be divisible by the head count");
  }
  if (options.mode == Mode::train && t < 2 && !options.bypass_batch_norm) {
    throw InvalidArgument("attention: train mode needs T >= 2");
  }
  AttentionMix out;
  out.query = tape.matmul(query, vars.query);
  out.key = tape.matmul(key, vars.key);
  const Eigen::Index head_width = width / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_width));
  std::vector<Var> mixed;
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index start = static_cast<Eigen::Index>(h) * head_width;
    Var weights;
    if (options.identity_attention) {
      weights = tape.constant(Matrix::Identity(t, t));
    } else {
      const Var qh = tape.slice_cols(out.query, start, head_width);
      const Var kh = tape.slice_cols(out.key, start, head_width);
      weights = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), scale));
    }
    out.head_weights.push_back(weights);
    mixed.push_back(tape.matmul(weights, tape.slice_cols(value, start, head_width)));
  }
  out.residual = tape.add(heads == 1 ? mixed.front() : tape.concat_cols(mixed), value);
  return out;
}

std::vector<Var> normalize_residuals(Tape& tape, const std::vector<Var>& residuals, const AttentionLayerVars& vars,
                                     BatchNormState<double>& state, const ForwardOptions& options) {
  if (options.bypass_batch_norm) {
    std::vector<Var> out;
    for (Var r : residuals) out.push_back(tape.add_row(tape.mul_row(r, vars.gamma), vars.beta));
    return out;
  }
  const Var stacked = residuals.size() == 1 ? residuals.front() : tape.concat_rows(residuals);
  const Var normed = tape.batch_norm(stacked, vars.gamma, vars.beta, state, options.mode);
  if (residuals.size() == 1) return {normed};
  std::vector<Var> out;
  Eigen::Index at = 0;
  for (Var r : residuals) {
    const Eigen::Index rows = tape.value(r).rows();
    out.push_back(tape.slice_rows(normed, at, rows));
    at += rows;
  }
  return out;
}

AttentionLayerOutput attention_layer(const Matrix& query, const Matrix& key, const Matrix& value,
                                     AttentionLayerParams& params, std::size_t heads, const ForwardOptions& options) {
  Tape tape;
  const AttentionLayerVars vars = bind(tape, params);
  const AttentionMix mix =
      attention_mix(tape, tape.constant(query), tape.constant(key), tape.constant(value), vars, heads, options);
  const Var v = normalize_residuals(tape, {mix.residual}, vars, params.norm, options).front();
  AttentionLayerOutput out{tape.value(mix.query), tape.value(mix.key), tape.value(v), {}, {}};
  for (Var w : mix.head_weights) out.head_weights.push_back(tape.value(w));
  out.weights = Matrix::Zero(value.rows(), value.rows());
  for (const Matrix& w : out.head_weights) out.weights += w;
  out.weights /= static_cast<double>(heads);
  return out;
}

FuseVars temporal_fuse(Tape& tape, const std::vector<Var>& group, const std::vector<Var>& values,
                       const std::vector<AttentionLayerVars>& layer_vars, std::vector<AttentionLayerParams>& layers,
                       std::size_t heads, const ForwardOptions& options) {
  if (group.size() != values.size()) throw InvalidArgument("temporal_fuse: batch size mismatch");
  if (layer_vars.size() != layers.size()) throw InvalidArgument("temporal_fuse: layer count mismatch");
  for (std::size_t b = 0; b < group.size(); ++b) {
    if (tape.value(group[b]).rows() != tape.value(values[b]).rows()) {
      throw InvalidArgument("temporal_fuse: group and clip sequences differ in T");
    }
  }
  FuseVars out;
  out.head_weights.resize(group.size());
  std::vector<Var> q = group, k = group, v = values;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<Var> residuals;
    for (std::size_t b = 0; b < v.size(); ++b) {
      AttentionMix mix = attention_mix(tape, q[b], k[b], v[b], layer_vars[l], heads, options);
      q[b] = mix.query;
      k[b] = mix.key;
      residuals.push_back(mix.residual);
      out.head_weights[b].push_back(std::move(mix.head_weights));
    }
    v = normalize_residuals(tape, residuals, layer_vars[l], layers[l].norm, options);
  }
  out.fused = std::move(v);
  return out;
}

AttentionTrace collect_trace(const Tape& tape, const std::vector<std::vector<Var>>& head_weights) {
  AttentionTrace trace;
  for (const auto& layer : head_weights) {
    std::vector<Matrix> heads;
    Matrix mean;
    for (Var w : layer) {
      heads.push_back(tape.value(w));
      if (mean.size() == 0) {
        mean = heads.back();
      } else {
        mean += heads.back();
      }
    }
    mean /= static_cast<double>(layer.size());
    trace.heads.push_back(std::move(heads));
    trace.layers.push_back(std::move(mean));
  }
  return trace;
}

void export_attention(const AttentionTrace& trace, const std::filesystem::path& path,
                      const std::vector<std::string>& metadata, const std::vector<bool>& element_mask) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const std::string& line : metadata) out << "# " << line << "\n";
  const RowVector salience = trace.salience();
  if (!element_mask.empty() && element_mask.size() != static_cast<std::size_t>(salience.size())) {
    throw InvalidArgument("export_attention: element mask length != T");
  }
  out << (element_mask.empty() ? "kind,clip,salience\n" : "kind,clip,salience,element\n");
  for (Eigen::Index i = 0; i < salience.size(); ++i) {
    out << "salience," << i << "," << format17(salience[i]);
    if (!element_mask.empty()) out << "," << (element_mask[static_cast<std::size_t>(i)] ? 1 : 0);
    out << "\n";
  }
  out << "kind,layer,row,col,weight\n";
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const Matrix& w = trace.layers[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        out << "weight," << l << "," << r << "," << c << "," << format17(w(r, c)) << "\n";
      }
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ParsedAttention parse_attention_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  ParsedAttention parsed;
  std::vector<std::vector<std::array<double, 3>>> cells;  // per layer: row, col, value
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("kind,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f[0] == "salience" && f.size() >= 3) {
      parsed.salience.push_back(std::stod(f[2]));
      if (f.size() >= 4) parsed.element_mask.push_back(f[3] == "1");
    } else if (f[0] == "weight" && f.size() == 5) {
      const auto layer = std::stoul(f[1]);
      if (cells.size() <= layer) cells.resize(layer + 1);
      cells[layer].push_back({std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    } else {
      throw InvalidArgument("attention csv: malformed line '" + line + "'");
    }
  }
  const auto t = static_cast<Eigen::Index>(parsed.salience.size());
  for (const auto& layer : cells) {
    Matrix m = Matrix::Zero(t, t);
    for (const auto& c : layer) m(static_cast<Eigen::Index>(c[0]), static_cast<Eigen::Index>(c[1])) = c[2];
    parsed.layers.push_back(std::move(m));
  }
  return parsed;
}

}  // namespace goat
