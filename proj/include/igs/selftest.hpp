#pragma once

// Fast invariant suite behind `igs selftest`. Each check is small enough to
// finish in well under a second; the full property tests live in tests/.

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "igs/formats.hpp"
#include "igs/gradcheck.hpp"
#include "igs/instantiation.hpp"
#include "igs/renderer.hpp"
#include "igs/union_find.hpp"

namespace igs {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline SelftestResult selftest_gradients() {
  GradCheckReport rep;
  for (std::uint64_t s = 0; s < 3; ++s) {
    rep.merge(check_render_gradients(s));
    rep.merge(check_smooth_gradient(s, SmoothNormalization::MaskedPixels));
    rep.merge(check_contrast_gradient(s));
    rep.merge(check_decode_gradients(s));
  }
  return {"analytic gradients vs central differences", rep.max_rel_error <= 1e-4,
          "max rel err " + std::to_string(rep.max_rel_error) + " over " + std::to_string(rep.checked)};
}

inline SelftestResult selftest_contrast_value() {
  std::vector<Feature> means(2, Feature{});
  means[1][0] = 0.5;  // squared distance 0.25
  const double v = loss_contrast_truncated(means, 0.4).value;
  return {"truncated contrast, two masks at distance^2 0.25", v == 4.0, "value " + std::to_string(v)};
}

inline SelftestResult selftest_compositing() {
  SplatSet s;
  s.centers = {{0, 0, 2}, {0, 0, 3}};
  s.colors = {{1, 0, 0}, {0, 1, 0}};
  s.opacities = {0.5, 0.5};
  s.scales = {1.0, 1.0};
  s.features = {Feature{}, Feature{}};
  s.parent = {0, 1};
  Camera c;
  c.fx = c.fy = 10;
  c.width = c.height = 1;
  const RenderOutput o = render(s, c);
  const bool ok = std::abs(o.color.data[0] - 0.5) < 1e-12 && std::abs(o.color.data[1] - 0.25) < 1e-12;
  return {"front-to-back compositing", ok, ""};
}

inline SelftestResult selftest_fps() {
  Matrix X(4, 1);
  X(0, 0) = 0;
  X(1, 0) = 1;
  X(2, 0) = 2;
  X(3, 0) = 10;
  const auto idx = farthest_point_sample(X, 3, 0);
  return {"farthest point sampling order", idx == std::vector<std::uint32_t>{0, 3, 2}, ""};
}

inline SelftestResult selftest_components() {
  // chain A-B (0.05), B-C (0.5): gamma 0.1 merges only A and B
  ConnectivityGraph g;
  g.node_count = 3;
  g.edges = {{0, 1, 0.05}, {1, 2, 0.5}};
  Matrix f(3, kFeatureDim);
  const std::vector<std::uint32_t> labels{0, 1, 2};
  const InstanceResult r = aggregate_components(g, 0.1, labels, f);
  const bool ok = r.instance_count == 2 && r.labels[0] == r.labels[1] && r.labels[1] != r.labels[2];
  return {"connectivity aggregation", ok, "m = " + std::to_string(r.instance_count)};
}

inline SelftestResult selftest_kmeans() {
  Rng rng(3);
  Matrix X(200, 4);
  for (double& v : X.data) v = rng.uniform();
  const auto seeds = farthest_point_sample(X, 10, 0);
  const ClusterState st = kmeans_cluster(X, seeds, {});
  bool ok = true;
  for (std::size_t i = 1; i < st.objective_history.size(); ++i)
    ok = ok && st.objective_history[i] <= st.objective_history[i - 1];
  return {"k-means objective non-increasing", ok, std::to_string(st.iterations) + " iterations"};
}

inline SelftestResult selftest_formats() {
  Model m;
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.anchors = init_anchors(pts, {}, 1);
  m.decoder = init_decoder(pts, {}, 1);
  const std::string a = encode_checkpoint(m);
  const std::string b = encode_checkpoint(decode_checkpoint(a));
  MaskView mv;
  mv.width = 2;
  mv.height = 1;
  mv.mask_count = 1;
  mv.ids = {0, kNoMask};
  const bool masks_ok = decode_masks(encode_masks(mv)).ids == mv.ids;
  return {"checkpoint and mask round trip", a == b && masks_ok, ""};
}

}  // namespace detail

inline std::vector<SelftestResult> run_selftest() {
  using Fn = SelftestResult (*)();
  const Fn checks[] = {detail::selftest_gradients, detail::selftest_contrast_value, detail::selftest_compositing,
                       detail::selftest_fps,       detail::selftest_components,     detail::selftest_kmeans,
                       detail::selftest_formats};
  std::vector<SelftestResult> out;
  for (Fn f : checks) {
    try {
      out.push_back(f());
    } catch (const std::exception& e) {
      out.push_back({"(exception)", false, e.what()});
    }
  }
  return out;
}

}  // namespace igs
