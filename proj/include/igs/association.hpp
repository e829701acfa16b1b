#pragma once

// 2D mask / 3D instance association and embedding queries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "igs/common.hpp"
#include "igs/losses.hpp"
#include "igs/renderer.hpp"

namespace igs {

inline constexpr double kVisibilityAlpha = 0.05;
inline constexpr std::uint32_t kNoClass = 0xFFFFFFFFu;

// count x dim table of embedding vectors.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<double> data;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t count, std::size_t d) : dim(d), data(count * d, 0.0) {}
  std::size_t count() const { return dim ? data.size() / dim : 0; }
  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

inline double l2norm(std::span<const double> v) {
  double acc = 0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// Per pixel, the instance with the largest summed alpha * T; kNoLabel where
// total alpha < kVisibilityAlpha. `splat_instance` maps splat -> instance id.
inline std::vector<std::uint32_t> instance_id_map(const RenderOutput& rendered,
                                                  std::span<const std::uint32_t> splat_instance,
                                                  std::size_t instance_count) {
  require(rendered.retained, ErrorKind::Usage, "instance_id_map needs contributor lists");
  require(splat_instance.size() == rendered.splat_count, ErrorKind::Usage, "instance labels do not match splat count");
  const std::size_t P = rendered.alpha.pixel_count();
  std::vector<std::uint32_t> ids(P, kNoLabel);
  std::vector<double> acc(instance_count, 0.0);
  std::vector<std::uint32_t> touched;
  for (std::size_t p = 0; p < P; ++p) {
    if (rendered.alpha.data[p] < kVisibilityAlpha) continue;
    touched.clear();
    for (const Contributor& c : rendered.pixel_contributors(p)) {
      const std::uint32_t inst = splat_instance[rendered.projected[c.slot].index];
      if (inst >= instance_count) continue;
      if (acc[inst] == 0.0) touched.push_back(inst);
      acc[inst] += c.alpha * c.transmittance;
    }
    double best = 0.0;
    std::uint32_t arg = kNoLabel;
    for (std::uint32_t k : touched) {
      if (acc[k] > best || (acc[k] == best && k < arg)) {
        best = acc[k];
        arg = k;
      }
    }
    ids[p] = arg;
    for (std::uint32_t k : touched) acc[k] = 0.0;
  }
  return ids;
}

inline std::vector<std::uint32_t> render_instance_id_map(const SplatSet& splats,
                                                         std::span<const std::uint32_t> splat_instance,
                                                         std::size_t instance_count, const Camera& camera) {
  RenderOptions ro;
  ro.features = false;
  return instance_id_map(render(splats, camera, ro), splat_instance, instance_count);
}

// Instance embedding = normalise( sum over views and masks of
// IoU(instance footprint, mask) * mask embedding ). Masks of view v use rows
// [offset_v, offset_v + m_v) of `mask_embeddings`, in view order.
inline EmbeddingTable associate_embeddings(std::span<const std::vector<std::uint32_t>> id_maps, const MaskStack& masks,
                                           const EmbeddingTable& mask_embeddings, std::size_t instance_count) {
  require(id_maps.size() == masks.size(), ErrorKind::Usage, "id map count does not match mask views");
  std::size_t total_masks = 0;
  for (const MaskView& mv : masks) total_masks += mv.mask_count;
  require(mask_embeddings.count() == total_masks, ErrorKind::Usage, "mask embedding count does not match masks");
  EmbeddingTable out(instance_count, mask_embeddings.dim);
  std::vector<double> total_weight(instance_count, 0.0);

  std::size_t offset = 0;
  for (std::size_t v = 0; v < masks.size(); ++v) {
    const MaskView& mv = masks[v];
    const auto& ids = id_maps[v];
    require(ids.size() == mv.pixel_count(), ErrorKind::Usage, "id map and mask dimensions differ");
    const std::size_t m = mv.mask_count;
    std::vector<std::size_t> inter(instance_count * m, 0), inst_area(instance_count, 0), mask_area(m, 0);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::uint32_t k = ids[p], i = mv.ids[p];
      if (k != kNoLabel && k < instance_count) ++inst_area[k];
      if (i != kNoMask) ++mask_area[i];
      if (k != kNoLabel && k < instance_count && i != kNoMask) ++inter[k * m + i];
    }
    for (std::size_t k = 0; k < instance_count; ++k) {
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t in = inter[k * m + i];
        if (in == 0) continue;
        const double iou = static_cast<double>(in) / static_cast<double>(inst_area[k] + mask_area[i] - in);
        const auto e = mask_embeddings.row(offset + i);
        auto dst = out.row(k);
        for (std::size_t d = 0; d < out.dim; ++d) dst[d] += iou * e[d];
        total_weight[k] += iou;
      }
    }
    offset += m;
  }
  for (std::size_t k = 0; k < instance_count; ++k) {
    auto r = out.row(k);
    const double n = l2norm(r);
    if (total_weight[k] <= 0.0 || n == 0.0) {
      std::fill(r.begin(), r.end(), 0.0);
      continue;
    }
    for (double& x : r) x /= n;
  }
  return out;
}

// Cosine similarity per instance; zero-vector instances score -1.
inline std::vector<double> score_query(std::span<const double> query, const EmbeddingTable& instances) {
  require(query.size() == instances.dim, ErrorKind::Usage, "query dimension does not match instance embeddings");
  const double qn = l2norm(query);
  require(qn > 0.0, ErrorKind::Usage, "query embedding is the zero vector");
  std::vector<double> scores(instances.count(), -1.0);
  for (std::size_t k = 0; k < instances.count(); ++k) {
    const auto e = instances.row(k);
    const double en = l2norm(e);
    if (en == 0.0) continue;
    double d = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) d += query[j] * e[j];
    scores[k] = d / (qn * en);
  }
  return scores;
}

struct SemanticAssignment {
  std::vector<std::uint32_t> instance_class;  // per instance, kNoClass if unassociated
  std::vector<std::uint32_t> point_class;     // per point
};

// Argmax class per instance (ties -> lower class id), inherited by its points.
inline SemanticAssignment semantic_assign(const EmbeddingTable& text, const EmbeddingTable& instances,
                                          std::span<const std::uint32_t> instance_labels) {
  require(text.count() >= 1, ErrorKind::Usage, "semantic_assign needs at least one class");
  require(text.dim == instances.dim, ErrorKind::Usage, "text and instance embedding dimensions differ");
  SemanticAssignment out;
  out.instance_class.assign(instances.count(), kNoClass);
  std::vector<double> tn(text.count());
  for (std::size_t c = 0; c < text.count(); ++c) tn[c] = l2norm(text.row(c));
  for (std::size_t k = 0; k < instances.count(); ++k) {
    const auto e = instances.row(k);
    const double en = l2norm(e);
    if (en == 0.0) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < text.count(); ++c) {
      if (tn[c] == 0.0) continue;
      double d = 0.0;
      const auto t = text.row(c);
      for (std::size_t j = 0; j < e.size(); ++j) d += t[j] * e[j];
      const double sim = d / (tn[c] * en);
      if (sim > best) {
        best = sim;
        out.instance_class[k] = static_cast<std::uint32_t>(c);
      }
    }
  }
  out.point_class.resize(instance_labels.size());
  for (std::size_t i = 0; i < instance_labels.size(); ++i) {
    const std::uint32_t k = instance_labels[i];
    out.point_class[i] = k < out.instance_class.size() ? out.instance_class[k] : kNoClass;
  }
  return out;
}

}  // namespace igs
