#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "igs/common.hpp"

namespace igs {

enum class Matching {
  BestOverlap,  // per GT instance, best IoU over all predictions (reuse allowed)
  OneToOne,     // maximum-total-IoU assignment
};

struct InstanceMetrics {
  double miou = 0.0;
  double macc25 = 0.0;
  std::vector<double> per_instance_iou;  // GT instances in ascending id order
  std::vector<std::uint32_t> gt_ids;
};

namespace detail {

// Rectangular assignment maximising total weight; returns row -> column
// (or -1). Classic potentials-based Hungarian method on cost = -weight.
inline std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& w) {
  const std::size_t rows = w.size();
  const std::size_t cols = rows ? w[0].size() : 0;
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  const bool transpose = rows > cols;
  const std::size_t n = transpose ? cols : rows, m = transpose ? rows : cols;
  auto cost = [&](std::size_t i, std::size_t j) { return transpose ? -w[j][i] : -w[i][j]; };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> result(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transpose)
      result[j - 1] = static_cast<int>(p[j] - 1);
    else
      result[p[j] - 1] = static_cast<int>(j - 1);
  }
  return result;
}

}  // namespace detail

// Points whose GT label equals `unlabeled` are excluded entirely.
inline InstanceMetrics instance_metrics(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt,
                                        Matching matching = Matching::BestOverlap,
                                        std::uint32_t unlabeled = kNoLabel) {
  require(pred.size() == gt.size(), ErrorKind::Usage, "prediction and ground truth lengths differ");
  std::map<std::uint32_t, std::size_t> gt_index, pred_index;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == unlabeled) continue;
    gt_index.emplace(gt[i], 0);
    pred_index.emplace(pred[i], 0);
  }
  InstanceMetrics out;
  if (gt_index.empty()) return out;
  std::size_t k = 0;
  for (auto& [id, idx] : gt_index) {
    idx = k++;
    out.gt_ids.push_back(id);
  }
  k = 0;
  for (auto& [id, idx] : pred_index) idx = k++;
  const std::size_t G = gt_index.size(), P = pred_index.size();
  std::vector<std::size_t> gsize(G, 0), psize(P, 0);
  std::vector<std::vector<std::size_t>> inter(G, std::vector<std::size_t>(P, 0));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == unlabeled) continue;
    const std::size_t g = gt_index[gt[i]], p = pred_index[pred[i]];
    ++gsize[g];
    ++psize[p];
    ++inter[g][p];
  }
  std::vector<std::vector<double>> iou(G, std::vector<double>(P, 0.0));
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t p = 0; p < P; ++p)
      if (inter[g][p])
        iou[g][p] = static_cast<double>(inter[g][p]) / static_cast<double>(gsize[g] + psize[p] - inter[g][p]);

  out.per_instance_iou.assign(G, 0.0);
  if (matching == Matching::BestOverlap) {
    for (std::size_t g = 0; g < G; ++g) out.per_instance_iou[g] = *std::max_element(iou[g].begin(), iou[g].end());
  } else {
    const auto assign = detail::max_weight_assignment(iou);
    for (std::size_t g = 0; g < G; ++g) out.per_instance_iou[g] = assign[g] >= 0 ? iou[g][assign[g]] : 0.0;
  }
  double sum = 0.0, hits = 0.0;
  for (double v : out.per_instance_iou) {
    sum += v;
    hits += v >= 0.25 ? 1.0 : 0.0;
  }
  out.miou = sum / static_cast<double>(G);
  out.macc25 = hits / static_cast<double>(G);
  return out;
}

struct SemanticMetrics {
  std::vector<std::optional<double>> per_class_iou;  // nullopt: class absent from GT
  std::vector<std::optional<double>> per_class_acc;
  double miou = 0.0;
  double macc = 0.0;
  std::size_t classes_present = 0;
};

// IoU = TP / (TP + FP + FN) and recall TP / (TP + FN), averaged over classes
// present in the ground truth. GT points labelled kNoLabel are ignored; a
// prediction of kNoLabel (or any id >= C) counts as a miss.
inline SemanticMetrics semantic_metrics(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gt,
                                        std::size_t class_count) {
  require(pred.size() == gt.size(), ErrorKind::Usage, "prediction and ground truth lengths differ");
  std::vector<std::size_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kNoLabel) continue;
    require(gt[i] < class_count, ErrorKind::Usage, "ground-truth class out of range");
    if (pred[i] == gt[i]) {
      ++tp[gt[i]];
    } else {
      ++fn[gt[i]];
      if (pred[i] < class_count) ++fp[pred[i]];
    }
  }
  SemanticMetrics out;
  out.per_class_iou.assign(class_count, std::nullopt);
  out.per_class_acc.assign(class_count, std::nullopt);
  double si = 0.0, sa = 0.0;
  for (std::size_t c = 0; c < class_count; ++c) {
    if (tp[c] + fn[c] == 0) continue;
    const double iou = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c] + fn[c]);
    const double acc = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
    out.per_class_iou[c] = iou;
    out.per_class_acc[c] = acc;
    si += iou;
    sa += acc;
    ++out.classes_present;
  }
  if (out.classes_present) {
    out.miou = si / static_cast<double>(out.classes_present);
    out.macc = sa / static_cast<double>(out.classes_present);
  }
  return out;
}

struct MetricsReport {
  InstanceMetrics instance;
  std::optional<SemanticMetrics> semantic;
  std::size_t gt_instances = 0;
  std::size_t gt_classes = 0;
  std::size_t predicted_instances = 0;
};

}  // namespace igs
