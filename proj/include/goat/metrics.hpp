#pragma once

#include "goat/dataset.hpp"
#include "goat/errors.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace goat {

class MetricError : public InvalidArgument {
 public:
  enum class Code { too_few_samples, length_mismatch, zero_rank_variance, degenerate_range, invalid_segments };
  MetricError(Code code, const std::string& what) : InvalidArgument(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// 1-based ranks; tied values share the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman's rho as the Pearson correlation of average ranks.
double spearman(std::span<const double> truth, std::span<const double> predicted);

// (1/K) sum ((|y - y_hat|) / (y_max - y_min))^2. Callers print it x100.
double relative_l2(std::span<const double> truth, std::span<const double> predicted, double y_min, double y_max);

using LabelSequence = std::vector<ActionLabel>;

struct Segment {
  ActionLabel label = ActionLabel::none;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const Segment&) const = default;
};
using SegmentList = std::vector<Segment>;

// Maximal runs of equal labels.
SegmentList segments_of(const LabelSequence& labels);
// Merges neighbours with equal labels. Throws MetricError unless the
// segments are nonempty and tile [0, end) contiguously from 0.
SegmentList canonicalize(const SegmentList& segments);

// 100 * matching frames / frames.
double frame_accuracy(const LabelSequence& truth, const LabelSequence& predicted);

std::size_t levenshtein(std::span<const ActionLabel> a, std::span<const ActionLabel> b);

// 100 * (1 - edit(gt labels, pred labels) / max(|gt|, |pred|)) on canonical segments.
double segmental_edit_score(const SegmentList& truth, const SegmentList& predicted);

double temporal_iou(const Segment& a, const Segment& b);

// Segmental F1 at IoU threshold k (inclusive). Same-label (pred, gt) pairs
// with IoU >= k are matched one-to-one, highest IoU first.
double f1_at_k(const SegmentList& truth, const SegmentList& predicted, double k);

struct SegmentationScores {
  double accuracy = 0.0;
  double edit = 0.0;
  double f1_10 = 0.0;
  double f1_25 = 0.0;
  double f1_50 = 0.0;
};

SegmentationScores segmentation_scores(const LabelSequence& truth, const LabelSequence& predicted);

// Mean of per-video segmentation scores; accuracy is pooled over frames.
SegmentationScores segmentation_scores(const std::vector<LabelSequence>& truth,
                                       const std::vector<LabelSequence>& predicted);

struct MetricReport {
  double rho = 0.0;
  double r_l2_x100 = 0.0;
  std::optional<SegmentationScores> segmentation;

  Json to_json() const;
};

}  // namespace goat
