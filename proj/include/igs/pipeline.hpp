#pragma once

// In-memory glue between the modules: synthetic scene -> training views ->
// trained model -> instances -> embeddings -> metrics.

#include <cstdint>
#include <span>
#include <vector>

#include "igs/association.hpp"
#include "igs/evaluation.hpp"
#include "igs/instantiation.hpp"
#include "igs/parallel.hpp"
#include "igs/scene_model.hpp"
#include "igs/synthdata.hpp"
#include "igs/trainer.hpp"

namespace igs {

inline std::vector<TrainingView> make_training_views(const Scene& scene) {
  std::vector<TrainingView> views(scene.cameras.size());
  parallel_for(0, views.size(), [&](std::size_t v) {
    GtView gt = render_gt(scene, scene.cameras[v]);
    views[v].camera = scene.cameras[v];
    views[v].target = std::move(gt.color);
    views[v].masks = std::move(gt.masks);
  });
  return views;
}

inline MaskStack masks_of(std::span<const TrainingView> views) {
  MaskStack out;
  out.reserve(views.size());
  for (const TrainingView& v : views) out.push_back(v.masks);
  return out;
}

inline void replace_masks(std::vector<TrainingView>& views, const MaskStack& masks) {
  require(views.size() == masks.size(), ErrorKind::Usage, "mask stack does not match the views");
  for (std::size_t v = 0; v < views.size(); ++v) views[v].masks = masks[v];
}

inline Model init_model(std::span<const Vec3> points, const ModelConfig& config, std::uint64_t seed) {
  Model m;
  m.anchors = init_anchors(points, config, seed);
  m.decoder = init_decoder(points, config, seed);
  return m;
}

// Decoded splats as the point set that gets segmented.
struct SplatPoints {
  SplatSet splats;
  std::vector<Vec3> positions;
  Matrix features;
};

inline SplatPoints splat_points(const Model& model) {
  SplatPoints sp;
  sp.splats = decode_gaussians(model.anchors, model.decoder);
  sp.positions = sp.splats.centers;
  sp.features = Matrix::from_rows<kFeatureDim>(sp.splats.features);
  return sp;
}

// Children inherit the ground truth of their parent anchor.
inline std::vector<std::uint32_t> splat_ground_truth(const SplatSet& splats, std::span<const std::uint32_t> anchor_gt) {
  std::vector<std::uint32_t> out(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    require(splats.parent[i] < anchor_gt.size(), ErrorKind::Data, "anchor count does not match the point cloud");
    out[i] = anchor_gt[splats.parent[i]];
  }
  return out;
}

inline std::vector<std::vector<std::uint32_t>> instance_id_maps(const SplatSet& splats, const InstanceResult& inst,
                                                                std::span<const Camera> cameras) {
  std::vector<std::vector<std::uint32_t>> maps(cameras.size());
  for (std::size_t v = 0; v < cameras.size(); ++v)
    maps[v] = render_instance_id_map(splats, inst.labels, inst.instance_count, cameras[v]);
  return maps;
}

// Fraction of GT instances whose points' majority predicted class equals
// their GT class.
inline double instance_class_recovery(std::span<const std::uint32_t> point_class, std::span<const std::uint32_t> gt_instance,
                                      std::span<const std::uint32_t> gt_class, std::size_t class_count) {
  std::map<std::uint32_t, std::pair<std::uint32_t, std::vector<std::size_t>>> votes;
  for (std::size_t i = 0; i < gt_instance.size(); ++i) {
    auto& [cls, hist] = votes[gt_instance[i]];
    cls = gt_class[i];
    if (hist.empty()) hist.assign(class_count + 1, 0);
    ++hist[point_class[i] < class_count ? point_class[i] : class_count];
  }
  if (votes.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& [id, v] : votes) {
    const auto& hist = v.second;
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
    ok += best == v.first ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(votes.size());
}

}  // namespace igs
