#include "crownflow/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace crownflow {

namespace {

std::vector<Label> ids_of(const LabelMap& l, std::unordered_map<Label, Index>& row_of,
                          std::vector<Index>& area) {
  std::map<Label, Index> counts;
  for (Index i = 0; i < l.size(); ++i) {
    if (l.data()[i] != 0) ++counts[l.data()[i]];
  }
  std::vector<Label> ids;
  for (const auto& [id, n] : counts) {
    row_of[id] = static_cast<Index>(ids.size());
    ids.push_back(id);
    area.push_back(n);
  }
  return ids;
}

void validate_tau(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error("eval.tau", "tau must lie in (0, 1]");
}

std::vector<Label> score_order(const std::vector<Label>& pred_ids,
                               const std::map<Label, double>& scores) {
  std::vector<Label> order = pred_ids;
  auto score = [&](Label id) {
    auto it = scores.find(id);
    if (it == scores.end()) {
      throw Error("eval.score", "no score for predicted instance " + std::to_string(id));
    }
    return it->second;
  };
  for (Label id : order) {
    if (!std::isfinite(score(id))) {
      throw Error("eval.score", "non-finite score for predicted instance " + std::to_string(id));
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Label a, Label b) { return score(a) > score(b); });
  return order;
}

}  // namespace

IouMatrix iou_matrix(const LabelMap& gt, const LabelMap& pred) {
  require_same_dims(dims_of(gt), dims_of(pred), "iou_matrix");
  IouMatrix m;
  std::unordered_map<Label, Index> gt_row;
  std::unordered_map<Label, Index> pred_col;
  std::vector<Index> gt_area;
  std::vector<Index> pred_area;
  m.gt_ids = ids_of(gt, gt_row, gt_area);
  m.pred_ids = ids_of(pred, pred_col, pred_area);

  std::unordered_map<std::uint32_t, Index> joint;
  for (Index i = 0; i < gt.size(); ++i) {
    const Label g = gt.data()[i];
    const Label p = pred.data()[i];
    if (g != 0 && p != 0) ++joint[(static_cast<std::uint32_t>(g) << 16) | p];
  }
  m.iou = Eigen::MatrixXd::Zero(static_cast<Index>(m.gt_ids.size()),
                                static_cast<Index>(m.pred_ids.size()));
  for (const auto& [key, inter] : joint) {
    const Index r = gt_row.at(static_cast<Label>(key >> 16));
    const Index c = pred_col.at(static_cast<Label>(key & 0xFFFF));
    const Index uni = gt_area[r] + pred_area[c] - inter;
    m.iou(r, c) = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return m;
}

ScoredPrediction score_by_probability(const LabelMap& pred,
                                      const std::optional<ProbabilityMap>& prob) {
  ScoredPrediction sp{pred, {}};
  if (prob) require_same_dims(dims_of(pred), dims_of(*prob), "score_by_probability");
  std::map<Label, std::pair<double, Index>> acc;
  for (Index i = 0; i < pred.size(); ++i) {
    const Label v = pred.data()[i];
    if (v == 0) continue;
    auto& a = acc[v];
    a.first += prob ? static_cast<double>(prob->data()[i]) : 1.0;
    ++a.second;
  }
  for (const auto& [id, a] : acc) sp.scores[id] = a.first / static_cast<double>(a.second);
  return sp;
}

MatchResult match_greedy(const IouMatrix& m, const std::map<Label, double>& scores, double tau) {
  validate_tau(tau);
  MatchResult r;
  std::vector<bool> gt_taken(m.gt_ids.size(), false);
  for (Label pid : score_order(m.pred_ids, scores)) {
    const auto col = static_cast<Index>(
        std::lower_bound(m.pred_ids.begin(), m.pred_ids.end(), pid) - m.pred_ids.begin());
    Index best = -1;
    double best_iou = -1.0;
    for (Index row = 0; row < static_cast<Index>(m.gt_ids.size()); ++row) {
      if (gt_taken[row]) continue;
      const double v = m.iou(row, col);
      if (v >= tau && v > best_iou) {  // strict '>' keeps the lowest gt id on ties
        best = row;
        best_iou = v;
      }
    }
    if (best < 0) {
      r.unmatched_pred.push_back(pid);
      continue;
    }
    gt_taken[best] = true;
    r.pairs.push_back({m.gt_ids[best], pid, best_iou});
  }
  for (std::size_t row = 0; row < m.gt_ids.size(); ++row) {
    if (!gt_taken[row]) r.unmatched_gt.push_back(m.gt_ids[row]);
  }
  std::sort(r.unmatched_pred.begin(), r.unmatched_pred.end());
  return r;
}

MatchResult match_at_iou(const LabelMap& gt, const ScoredPrediction& sp, double tau) {
  return match_greedy(iou_matrix(gt, sp.labels), sp.scores, tau);
}

double average_precision_50(const LabelMap& gt, const ScoredPrediction& sp) {
  const IouMatrix m = iou_matrix(gt, sp.labels);
  const auto n_gt = static_cast<double>(m.gt_ids.size());
  if (m.gt_ids.empty()) return m.pred_ids.empty() ? 1.0 : 0.0;
  if (m.pred_ids.empty()) return 0.0;

  const MatchResult match = match_greedy(m, sp.scores, 0.5);
  std::map<Label, bool> is_tp;
  for (const auto& p : match.pairs) is_tp[p.pred_id] = true;

  std::vector<double> precision;
  std::vector<double> recall;
  double tp = 0.0;
  double seen = 0.0;
  for (Label pid : score_order(m.pred_ids, sp.scores)) {
    seen += 1.0;
    if (is_tp.contains(pid)) tp += 1.0;
    precision.push_back(tp / seen);
    recall.push_back(tp / n_gt);
  }
  // Precision envelope: best precision at any recall >= the current one.
  for (std::size_t i = precision.size() - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    // Recall is non-decreasing along the ranking.
    const auto it = std::lower_bound(recall.begin(), recall.end(), r - 1e-12);
    if (it != recall.end()) total += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return total / 101.0;
}

Summary summary(const LabelMap& gt, const ScoredPrediction& sp, double tau) {
  validate_tau(tau);
  const MatchResult match = match_at_iou(gt, sp, tau);
  Summary s;
  s.n_matched = static_cast<Index>(match.pairs.size());
  s.n_gt = s.n_matched + static_cast<Index>(match.unmatched_gt.size());
  s.n_pred = s.n_matched + static_cast<Index>(match.unmatched_pred.size());
  s.precision = s.n_pred > 0 ? static_cast<double>(s.n_matched) / static_cast<double>(s.n_pred) : 0.0;
  s.recall = s.n_gt > 0 ? static_cast<double>(s.n_matched) / static_cast<double>(s.n_gt) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  double iou_sum = 0.0;
  for (const auto& p : match.pairs) iou_sum += p.iou;
  s.mean_iou = s.n_matched > 0 ? iou_sum / static_cast<double>(s.n_matched) : 0.0;
  s.ap50 = average_precision_50(gt, sp);
  return s;
}

}  // namespace crownflow
