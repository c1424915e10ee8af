#include "goat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace goat {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> truth, std::span<const double> predicted) {
  using Code = MetricError::Code;
  if (truth.size() != predicted.size()) throw MetricError(Code::length_mismatch, "spearman: length mismatch");
  if (truth.size() < 2) throw MetricError(Code::too_few_samples, "spearman: need at least 2 samples");
  const std::vector<double> a = average_ranks(truth), b = average_ranks(predicted);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - mean) * (b[i] - mean);
    va += (a[i] - mean) * (a[i] - mean);
    vb += (b[i] - mean) * (b[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) throw MetricError(Code::zero_rank_variance, "spearman: all values tied");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

double relative_l2(std::span<const double> truth, std::span<const double> predicted, double y_min, double y_max) {
  using Code = MetricError::Code;
  if (truth.size() != predicted.size()) throw MetricError(Code::length_mismatch, "relative_l2: length mismatch");
  if (truth.empty()) throw MetricError(Code::too_few_samples, "relative_l2: no samples");
  if (!(y_max > y_min)) throw MetricError(Code::degenerate_range, "relative_l2: y_max must exceed y_min");
  const double range = y_max - y_min;
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = std::abs(truth[i] - predicted[i]) / range;
    total += r * r;
  }
  return total / static_cast<double>(truth.size());
}

SegmentList segments_of(const LabelSequence& labels) {
  SegmentList out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!out.empty() && out.back().label == labels[i]) {
      out.back().end = i + 1;
    } else {
      out.push_back({labels[i], i, i + 1});
    }
  }
  return out;
}

SegmentList canonicalize(const SegmentList& segments) {
  if (segments.empty()) throw MetricError(MetricError::Code::invalid_segments, "segment list is empty");
  SegmentList out;
  std::size_t expected = 0;
  for (const Segment& s : segments) {
    if (s.start != expected || s.end <= s.start) {
      throw MetricError(MetricError::Code::invalid_segments, "segments must be nonempty and contiguous from frame 0");
    }
    expected = s.end;
    if (!out.empty() && out.back().label == s.label) {
      out.back().end = s.end;
    } else {
      out.push_back(s);
    }
  }
  return out;
}

double frame_accuracy(const LabelSequence& truth, const LabelSequence& predicted) {
  using Code = MetricError::Code;
  if (truth.size() != predicted.size()) throw MetricError(Code::length_mismatch, "frame_accuracy: length mismatch");
  if (truth.empty()) throw MetricError(Code::too_few_samples, "frame_accuracy: empty sequence");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::size_t levenshtein(std::span<const ActionLabel> a, std::span<const ActionLabel> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {
std::vector<ActionLabel> labels_of(const SegmentList& s) {
  std::vector<ActionLabel> out;
  out.reserve(s.size());
  for (const Segment& seg : s) out.push_back(seg.label);
  return out;
}
}  // namespace

double segmental_edit_score(const SegmentList& truth, const SegmentList& predicted) {
  const auto a = labels_of(canonicalize(truth)), b = labels_of(canonicalize(predicted));
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 100.0;
  return 100.0 * (1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest));
}

double temporal_iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
  const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
  const double uni = static_cast<double>(std::max(a.end, b.end) - std::min(a.start, b.start));
  return uni > 0.0 ? inter / uni : 0.0;
}

double f1_at_k(const SegmentList& truth, const SegmentList& predicted, double k) {
  const SegmentList gt = canonicalize(truth), pred = canonicalize(predicted);
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (pred[p].label != gt[g].label) continue;
      const double iou = temporal_iou(pred[p], gt[g]);
      if (iou >= k) pairs.emplace_back(iou, p, g);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    return std::make_pair(std::get<1>(x), std::get<2>(x)) < std::make_pair(std::get<1>(y), std::get<2>(y));
  });
  std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
  std::size_t tp = 0;
  for (const auto& [iou, p, g] : pairs) {
    if (pred_used[p] || gt_used[g]) continue;
    pred_used[p] = gt_used[g] = true;
    ++tp;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(tp) / static_cast<double>(gt.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

SegmentationScores segmentation_scores(const LabelSequence& truth, const LabelSequence& predicted) {
  const SegmentList gt = segments_of(truth), pred = segments_of(predicted);
  return {frame_accuracy(truth, predicted), segmental_edit_score(gt, pred), f1_at_k(gt, pred, 0.10),
          f1_at_k(gt, pred, 0.25), f1_at_k(gt, pred, 0.50)};
}

SegmentationScores segmentation_scores(const std::vector<LabelSequence>& truth,
                                       const std::vector<LabelSequence>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw MetricError(MetricError::Code::length_mismatch, "segmentation: video counts differ or are zero");
  }
  SegmentationScores mean;
  std::size_t hits_frames = 0, total_frames = 0;
  for (std::size_t v = 0; v < truth.size(); ++v) {
    const SegmentationScores s = segmentation_scores(truth[v], predicted[v]);
    for (std::size_t f = 0; f < truth[v].size(); ++f) hits_frames += truth[v][f] == predicted[v][f] ? 1 : 0;
    total_frames += truth[v].size();
    mean.edit += s.edit;
    mean.f1_10 += s.f1_10;
    mean.f1_25 += s.f1_25;
    mean.f1_50 += s.f1_50;
  }
  const double n = static_cast<double>(truth.size());
  mean.accuracy = 100.0 * static_cast<double>(hits_frames) / static_cast<double>(total_frames);
  mean.edit /= n;
  mean.f1_10 /= n;
  mean.f1_25 /= n;
  mean.f1_50 /= n;
  return mean;
}

Json MetricReport::to_json() const {
  Json j = {{"rho", rho}, {"r_l2_x100", r_l2_x100}};
  if (segmentation) {
    j["acc"] = segmentation->accuracy;
    j["edit"] = segmentation->edit;
    j["f1"] = {{"10", segmentation->f1_10}, {"25", segmentation->f1_25}, {"50", segmentation->f1_50}};
  } else {
    j["acc"] = nullptr;
    j["edit"] = nullptr;
    j["f1"] = {{"10", nullptr}, {"25", nullptr}, {"50", nullptr}};
  }
  return j;
}

}  // namespace goat
