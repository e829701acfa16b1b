#pragma once

// Central finite-difference checks of the analytic backward passes on small
// random problems. Configurations are resampled until they sit clear of the
// non-smooth points (footprint edges, depth swaps, ReLU kinks, the contrast
// truncation threshold, |x| = 0 in the L1 loss), so differences are valid.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "igs/common.hpp"
#include "igs/losses.hpp"
#include "igs/renderer.hpp"
#include "igs/scene_model.hpp"

namespace igs {

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;

  void add(double analytic, double numeric, const std::string& what) {
    const double e = relative_error(analytic, numeric);
    ++checked;
    if (e > max_rel_error) {
      max_rel_error = e;
      worst = what;
    }
  }
  void merge(const GradCheckReport& o) {
    checked += o.checked;
    if (o.max_rel_error > max_rel_error) {
      max_rel_error = o.max_rel_error;
      worst = o.worst;
    }
  }
};

// d f / d x[i] by central differences; x[i] is restored afterwards.
inline double central_difference(double& x, const std::function<double()>& f, double h) {
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * h);
}

inline double weighted_sum(std::span<const double> w, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * x[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Renderer

struct RenderCheckScene {
  SplatSet splats;
  Camera camera;
};

// Identity camera looking down +z. Depths are spread at least 0.05 apart,
// opacities stay below the clamp, and no pixel lies within 2% (in d^2 / r^2)
// of any footprint edge.
inline RenderCheckScene random_render_scene(Rng& rng, std::size_t n, int size) {
  RenderCheckScene sc;
  sc.camera.width = sc.camera.height = size;
  sc.camera.fx = sc.camera.fy = static_cast<double>(size);
  sc.camera.cx = sc.camera.cy = 0.5 * (size - 1);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    SplatSet& s = sc.splats;
    s = SplatSet{};
    std::vector<double> depths;
    while (depths.size() < n) {
      const double z = rng.uniform(2.0, 4.0);
      bool ok = true;
      for (double d : depths) ok = ok && std::abs(d - z) >= 0.05;
      if (ok) depths.push_back(z);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double z = depths[i];
      s.centers.push_back({rng.uniform(-0.3, 0.3) * z, rng.uniform(-0.3, 0.3) * z, z});
      s.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      s.opacities.push_back(rng.uniform(0.2, 0.9));
      s.scales.push_back(rng.uniform(0.1, 0.3));
      Feature f;
      for (double& v : f) v = rng.uniform(-1.0, 1.0);
      s.features.push_back(f);
      s.parent.push_back(static_cast<std::uint32_t>(i));
    }
    bool clear = true;
    for (const ProjectedSplat& p : project_splats(s, sc.camera)) {
      for (int y = 0; y < size && clear; ++y)
        for (int x = 0; x < size && clear; ++x) {
          const double q = ((x - p.u) * (x - p.u) + (y - p.v) * (y - p.v)) / (p.radius * p.radius);
          clear = std::abs(q - 1.0) > 0.02;
        }
    }
    if (clear) return sc;
  }
  fail(ErrorKind::Numeric, "could not sample a stable gradient-check scene");
}

inline GradCheckReport check_render_gradients(std::uint64_t seed, std::size_t n = 8, int size = 8, double h = 1e-4) {
  Rng rng(seed);
  RenderCheckScene sc = random_render_scene(rng, n, size);
  const std::size_t P = static_cast<std::size_t>(size) * size;
  std::vector<double> wc(P * 3), wf(P * kFeatureDim);
  for (double& w : wc) w = rng.uniform(-1.0, 1.0);
  for (double& w : wf) w = rng.uniform(-1.0, 1.0);

  SplatSet& s = sc.splats;
  auto loss = [&]() {
    const RenderOutput o = render(s, sc.camera);
    return weighted_sum(wc, o.color.data) + weighted_sum(wf, o.feature.data);
  };
  const RenderOutput out = render(s, sc.camera);
  const SplatGradients g = render_backward(out, wc, wf);

  GradCheckReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string tag = "splat " + std::to_string(i);
    for (int d = 0; d < 3; ++d) {
      rep.add(g.centers[i][d], central_difference(s.centers[i][d], loss, h), tag + " center");
      rep.add(g.colors[i][d], central_difference(s.colors[i][d], loss, h), tag + " color");
    }
    rep.add(g.opacities[i], central_difference(s.opacities[i], loss, h), tag + " opacity");
    rep.add(g.scales[i], central_difference(s.scales[i], loss, h), tag + " scale");
    for (std::size_t k = 0; k < kFeatureDim; ++k)
      rep.add(g.features[i][k], central_difference(s.features[i][k], loss, h), tag + " feature");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Losses

inline MaskView random_mask(Rng& rng, int size, std::uint32_t count) {
  MaskView m;
  m.width = m.height = size;
  m.mask_count = count;
  m.ids.resize(m.pixel_count());
  for (auto& id : m.ids) {
    const std::size_t r = rng.index(count + 1);
    id = r == count ? kNoMask : static_cast<std::uint32_t>(r);
  }
  return m;
}

inline GradCheckReport check_rgb_gradient(std::uint64_t seed, int size = 8, double h = 1e-4) {
  Rng rng(seed);
  Image a(size, size, 3), b(size, size, 3);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    do {
      a.data[i] = rng.uniform();
      b.data[i] = rng.uniform();
    } while (std::abs(a.data[i] - b.data[i]) < 1e-2);
  }
  const LossValue lv = loss_rgb(a, b);
  GradCheckReport rep;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    rep.add(lv.grad[i], central_difference(a.data[i], [&] { return loss_rgb(a, b).value; }, h), "rgb");
  return rep;
}

inline GradCheckReport check_smooth_gradient(std::uint64_t seed, SmoothNormalization norm, int size = 8,
                                             double h = 1e-4) {
  Rng rng(seed);
  Image f(size, size, kFeatureDim);
  for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
  const MaskView mask = random_mask(rng, size, 3);
  const LossValue lv = loss_smooth(f, mask, norm);
  GradCheckReport rep;
  for (std::size_t i = 0; i < f.data.size(); ++i)
    rep.add(lv.grad[i], central_difference(f.data[i], [&] { return loss_smooth(f, mask, norm).value; }, h),
            "smooth");
  return rep;
}

// Means are resampled until every pair's squared distance is at least 1e-2
// away from tau, so the indicator does not flip under the perturbation.
inline GradCheckReport check_contrast_gradient(std::uint64_t seed, std::size_t m = 5, double tau = kDefaultTau,
                                               double h = 1e-4) {
  Rng rng(seed);
  std::vector<Feature> means(m);
  for (bool ok = false; !ok;) {
    for (Feature& f : means)
      for (double& v : f) v = rng.uniform(0.0, 0.5);
    ok = true;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) {
        const double d2 = squared_distance(means[i], means[j]);
        ok = ok && std::abs(d2 - tau) > 1e-2 && d2 > 1e-2;
      }
  }
  const ContrastResult cr = loss_contrast_truncated(means, tau);
  GradCheckReport rep;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < kFeatureDim; ++k)
      rep.add(cr.grad[i][k],
              central_difference(means[i][k], [&] { return loss_contrast_truncated(means, tau).value; }, h),
              "contrast");
  return rep;
}

// Smoothness plus contrast chained through the mask means.
inline GradCheckReport check_feature_loss_gradient(std::uint64_t seed, int size = 8, double h = 1e-4) {
  Rng rng(seed);
  Image f(size, size, kFeatureDim);
  MaskView mask;
  const double tau = 1e3;  // keeps every pair inside the truncation
  mask = random_mask(rng, size, 3);
  for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
  auto total = [&] {
    const FeatureLossReport r = feature_losses(f, mask, 1.0, 0.1, tau);
    return r.smooth + 0.1 * r.contrast;
  };
  const FeatureLossReport r = feature_losses(f, mask, 1.0, 0.1, tau);
  GradCheckReport rep;
  for (std::size_t i = 0; i < f.data.size(); ++i) rep.add(r.grad[i], central_difference(f.data[i], total, h), "feature loss");
  return rep;
}

// ---------------------------------------------------------------------------
// Decoder

inline GradCheckReport check_decode_gradients(std::uint64_t seed, std::size_t anchors = 3, std::size_t de = 6,
                                              std::size_t hidden = 8, double h = 1e-4) {
  Rng rng(seed);
  Model m;
  ModelConfig cfg;
  cfg.embedding_dim = de;
  cfg.hidden_width = hidden;
  for (int attempt = 0;; ++attempt) {
    require(attempt < 1000, ErrorKind::Numeric, "could not sample a kink-free decoder");
    std::vector<Vec3> pts;
    for (std::size_t k = 0; k < anchors; ++k) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    m.anchors = init_anchors(pts, cfg, rng.next_u64());
    for (double& e : m.anchors.embeddings) e = rng.uniform(-1.0, 1.0);
    m.decoder = init_decoder(pts, cfg, rng.next_u64());
    for (MlpHead& hd : m.decoder.heads) {
      for (double& b : hd.b1) b = rng.uniform(-0.5, 0.5);
      for (double& b : hd.b2) b = rng.uniform(-0.5, 0.5);
    }
    bool clear = true;
    std::vector<double> pre(hidden);
    for (std::size_t k = 0; k < anchors && clear; ++k)
      for (const MlpHead& hd : m.decoder.heads) {
        std::vector<double> y(hd.out);
        hd.forward(m.anchors.embedding(k), pre, y);
        for (double z : pre) clear = clear && std::abs(z) > 1e-2;
      }
    if (clear) break;
  }
  const std::size_t n = anchors * kChildrenPerAnchor;
  SplatGradients w(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) {
      w.centers[i][d] = rng.uniform(-1.0, 1.0);
      w.colors[i][d] = rng.uniform(-1.0, 1.0);
    }
    w.opacities[i] = rng.uniform(-1.0, 1.0);
    w.scales[i] = rng.uniform(-1.0, 1.0);
    for (double& v : w.features[i]) v = rng.uniform(-1.0, 1.0);
  }
  auto loss = [&] {
    const SplatSet s = decode_gaussians(m.anchors, m.decoder);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += dot(w.centers[i], s.centers[i]) + dot(w.colors[i], s.colors[i]);
      acc += w.opacities[i] * s.opacities[i] + w.scales[i] * s.scales[i];
      for (std::size_t k = 0; k < kFeatureDim; ++k) acc += w.features[i][k] * s.features[i][k];
    }
    return acc;
  };
  ModelGradients g(m.anchors, m.decoder);
  decode_backward(m.anchors, m.decoder, w, g);

  GradCheckReport rep;
  for (std::size_t k = 0; k < anchors; ++k) {
    for (int d = 0; d < 3; ++d) rep.add(g.positions[k][d], central_difference(m.anchors.positions[k][d], loss, h), "position");
    for (std::size_t d = 0; d < kFeatureDim; ++d)
      rep.add(g.features[k][d], central_difference(m.anchors.features[k][d], loss, h), "feature");
  }
  for (std::size_t i = 0; i < m.anchors.embeddings.size(); ++i)
    rep.add(g.embeddings[i], central_difference(m.anchors.embeddings[i], loss, h), "embedding");
  static constexpr const char* kHeadNames[] = {"offset", "color", "opacity", "log-scale"};
  for (std::size_t hd = 0; hd < kHeadCount; ++hd) {
    MlpHead& p = m.decoder.heads[hd];
    const MlpHead& gh = g.decoder.heads[hd];
    const std::string tag = kHeadNames[hd];
    for (std::size_t i = 0; i < p.w1.size(); ++i) rep.add(gh.w1[i], central_difference(p.w1[i], loss, h), tag + " w1");
    for (std::size_t i = 0; i < p.b1.size(); ++i) rep.add(gh.b1[i], central_difference(p.b1[i], loss, h), tag + " b1");
    for (std::size_t i = 0; i < p.w2.size(); ++i) rep.add(gh.w2[i], central_difference(p.w2[i], loss, h), tag + " w2");
    for (std::size_t i = 0; i < p.b2.size(); ++i) rep.add(gh.b2[i], central_difference(p.b2[i], loss, h), tag + " b2");
  }
  return rep;
}

}  // namespace igs
