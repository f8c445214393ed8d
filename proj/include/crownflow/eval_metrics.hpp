#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "crownflow/raster.hpp"

namespace crownflow {

/// Pairwise IoU; row i is gt_ids[i], column j is pred_ids[j] (ids ascending).
struct IouMatrix {
  std::vector<Label> gt_ids;
  std::vector<Label> pred_ids;
  Eigen::MatrixXd iou;
};

struct MatchPair {
  Label gt_id = 0;
  Label pred_id = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // in matching order
  std::vector<Label> unmatched_gt;
  std::vector<Label> unmatched_pred;
};

struct ScoredPrediction {
  LabelMap labels;
  std::map<Label, double> scores;  // confidence per instance id
};

struct Summary {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_iou = 0.0;
  double ap50 = 0.0;
  Index n_gt = 0;
  Index n_pred = 0;
  Index n_matched = 0;
};

/// One pass over the pixels builds the joint histogram of (gt, pred) ids.
IouMatrix iou_matrix(const LabelMap& gt, const LabelMap& pred);

/// Confidence per predicted instance as its mean probability. Without a
/// probability map every instance scores 1.
ScoredPrediction score_by_probability(const LabelMap& pred,
                                      const std::optional<ProbabilityMap>& prob = std::nullopt);

/// Greedy matching on a precomputed IoU matrix: predictions in descending
/// score (ties: ascending id) each take the unmatched GT with the highest
/// IoU >= tau (ties: lowest GT id).
MatchResult match_greedy(const IouMatrix& m, const std::map<Label, double>& scores, double tau);

MatchResult match_at_iou(const LabelMap& gt, const ScoredPrediction& sp, double tau);

/// 101-point interpolated average precision at IoU 0.5.
double average_precision_50(const LabelMap& gt, const ScoredPrediction& sp);

Summary summary(const LabelMap& gt, const ScoredPrediction& sp, double tau = 0.5);

}  // namespace crownflow
