#pragma once

// Differentiable pinhole splatting of isotropic splats. Colors and 6-dim
// instance features are composited front to back with the same weights.
//
// Conventions:
//   * pixel (x, y) is sampled at integer coordinates (x, y);
//   * pixel radius r = 3 * scale * fx / depth, Gaussian std = r / 3, and a
//     splat contributes to pixels with squared distance <= r^2;
//   * alpha = min(0.99, opacity * exp(-4.5 * d^2 / r^2));
//   * background is 0 for color and features.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "igs/common.hpp"
#include "igs/parallel.hpp"
#include "igs/scene_model.hpp"

namespace igs {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kMaxAlpha = 0.99;

struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  std::array<double, 9> R{1, 0, 0, 0, 1, 0, 0, 0, 1};  // world -> camera, row-major
  Vec3 t{0, 0, 0};

  Vec3 to_camera(const Vec3& p) const {
    return {R[0] * p[0] + R[1] * p[1] + R[2] * p[2] + t[0], R[3] * p[0] + R[4] * p[1] + R[5] * p[2] + t[1],
            R[6] * p[0] + R[7] * p[1] + R[8] * p[2] + t[2]};
  }
  Vec3 rotate_transpose(const Vec3& g) const {
    return {R[0] * g[0] + R[3] * g[1] + R[6] * g[2], R[1] * g[0] + R[4] * g[1] + R[7] * g[2],
            R[2] * g[0] + R[5] * g[1] + R[8] * g[2]};
  }
  Vec3 position() const { return -1.0 * rotate_transpose(t); }

  void validate() const {
    require(fx > 0 && fy > 0, ErrorKind::Data, "camera focal lengths must be positive");
    require(width > 0 && height > 0, ErrorKind::Data, "camera image size must be positive");
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double d = 0;
        for (int k = 0; k < 3; ++k) d += R[3 * i + k] * R[3 * j + k];
        require(std::abs(d - (i == j ? 1.0 : 0.0)) <= 1e-5, ErrorKind::Data, "camera rotation is not orthonormal");
      }
  }
};

struct ProjectedSplat {
  std::uint32_t index = 0;
  double u = 0, v = 0;
  double depth = 0;
  double radius = 0;  // pixels
  Vec3 camera_point{};
};

// Near-plane culling, then ascending depth with ties broken by splat index.
inline std::vector<ProjectedSplat> project_splats(const SplatSet& splats, const Camera& camera) {
  std::vector<ProjectedSplat> out;
  out.reserve(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Vec3 pc = camera.to_camera(splats.centers[i]);
    if (!(pc[2] > kNearPlane)) continue;
    ProjectedSplat p;
    p.index = static_cast<std::uint32_t>(i);
    p.camera_point = pc;
    p.depth = pc[2];
    p.u = camera.fx * pc[0] / pc[2] + camera.cx;
    p.v = camera.fy * pc[1] / pc[2] + camera.cy;
    p.radius = 3.0 * splats.scales[i] * camera.fx / pc[2];
    out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });
  return out;
}

struct Contributor {
  std::uint32_t slot = 0;  // index into RenderOutput::projected
  double alpha = 0;
  double transmittance = 0;
};

struct RenderOptions {
  bool features = true;
  bool retain_contributors = true;
};

struct RenderOutput {
  Camera camera;
  Image color;    // H x W x 3
  Image feature;  // H x W x 6 (empty when not requested)
  Image alpha;    // H x W x 1
  std::vector<ProjectedSplat> projected;
  std::vector<double> opacity;   // per projected slot
  std::vector<Vec3> colors;      // per projected slot
  std::vector<Feature> features; // per projected slot
  std::vector<std::size_t> offsets;  // pixel_count + 1, CSR into contributors
  std::vector<Contributor> contributors;
  bool retained = false;
  std::size_t splat_count = 0;

  std::span<const Contributor> pixel_contributors(std::size_t p) const {
    return {contributors.data() + offsets[p], offsets[p + 1] - offsets[p]};
  }
};

namespace detail {

struct Footprint {
  int x0, x1, y0, y1;
};

inline bool footprint(const ProjectedSplat& p, int width, int height, Footprint& fp) {
  if (!(p.radius > 0)) return false;
  fp.x0 = std::max(0, static_cast<int>(std::ceil(p.u - p.radius)));
  fp.x1 = std::min(width - 1, static_cast<int>(std::floor(p.u + p.radius)));
  fp.y0 = std::max(0, static_cast<int>(std::ceil(p.v - p.radius)));
  fp.y1 = std::min(height - 1, static_cast<int>(std::floor(p.v + p.radius)));
  return fp.x0 <= fp.x1 && fp.y0 <= fp.y1;
}

template <typename Fn>
void for_each_covered(const ProjectedSplat& p, int width, int height, Fn&& fn) {
  Footprint fp;
  if (!footprint(p, width, height, fp)) return;
  const double r2 = p.radius * p.radius;
  for (int y = fp.y0; y <= fp.y1; ++y) {
    const double dy = y - p.v;
    for (int x = fp.x0; x <= fp.x1; ++x) {
      const double dx = x - p.u;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= r2) fn(static_cast<std::size_t>(y) * width + x, d2);
    }
  }
}

inline double kernel_alpha(double opacity, double d2, double radius) {
  return std::min(kMaxAlpha, opacity * std::exp(-4.5 * d2 / (radius * radius)));
}

}  // namespace detail

inline RenderOutput render(const SplatSet& splats, const Camera& camera, const RenderOptions& options = {}) {
  camera.validate();
  const int W = camera.width, H = camera.height;
  const std::size_t P = static_cast<std::size_t>(W) * H;
  RenderOutput out;
  out.camera = camera;
  out.splat_count = splats.size();
  out.color = Image(W, H, 3);
  out.alpha = Image(W, H, 1);
  if (options.features) out.feature = Image(W, H, static_cast<int>(kFeatureDim));
  out.projected = project_splats(splats, camera);

  const auto& proj = out.projected;
  out.opacity.resize(proj.size());
  out.colors.resize(proj.size());
  out.features.resize(proj.size());
  for (std::size_t j = 0; j < proj.size(); ++j) {
    out.opacity[j] = splats.opacities[proj[j].index];
    out.colors[j] = splats.colors[proj[j].index];
    out.features[j] = splats.features[proj[j].index];
  }

  // Two passes build per-pixel contributor lists already in depth order.
  out.offsets.assign(P + 1, 0);
  for (const auto& p : proj) detail::for_each_covered(p, W, H, [&](std::size_t px, double) { ++out.offsets[px + 1]; });
  for (std::size_t p = 0; p < P; ++p) out.offsets[p + 1] += out.offsets[p];
  out.contributors.resize(out.offsets[P]);
  {
    std::vector<std::size_t> cursor(out.offsets.begin(), out.offsets.end() - 1);
    for (std::size_t j = 0; j < proj.size(); ++j) {
      const auto& p = proj[j];
      detail::for_each_covered(p, W, H, [&](std::size_t px, double d2) {
        Contributor& c = out.contributors[cursor[px]++];
        c.slot = static_cast<std::uint32_t>(j);
        c.alpha = detail::kernel_alpha(out.opacity[j], d2, p.radius);
      });
    }
  }

  parallel_for(0, static_cast<std::size_t>(H), [&](std::size_t y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t px = y * W + x;
      double T = 1.0;
      double acc_a = 0.0;
      std::array<double, 3> acc_c{};
      Feature acc_f{};
      for (std::size_t e = out.offsets[px]; e < out.offsets[px + 1]; ++e) {
        Contributor& c = out.contributors[e];
        c.transmittance = T;
        const double w = c.alpha * T;
        const Vec3& col = out.colors[c.slot];
        for (int k = 0; k < 3; ++k) acc_c[k] += w * col[k];
        if (options.features) {
          const Feature& f = out.features[c.slot];
          for (std::size_t k = 0; k < kFeatureDim; ++k) acc_f[k] += w * f[k];
        }
        acc_a += w;
        T *= 1.0 - c.alpha;
      }
      for (int k = 0; k < 3; ++k) out.color.data[px * 3 + k] = acc_c[k];
      if (options.features)
        for (std::size_t k = 0; k < kFeatureDim; ++k) out.feature.data[px * kFeatureDim + k] = acc_f[k];
      out.alpha.data[px] = acc_a;
    }
  });

  out.retained = options.retain_contributors;
  if (!out.retained) {
    out.contributors.clear();
    out.contributors.shrink_to_fit();
    out.offsets.clear();
  }
  return out;
}

// Gradients with respect to every splat attribute, depth order held fixed.
// Empty grad spans are treated as zero images. Accumulation runs in
// pixel-major order, so results are reproducible.
inline SplatGradients render_backward(const RenderOutput& out, std::span<const double> grad_color,
                                      std::span<const double> grad_feature) {
  require(out.retained, ErrorKind::Usage, "render output has no contributor lists; render with retain_contributors");
  const int W = out.camera.width, H = out.camera.height;
  const std::size_t P = static_cast<std::size_t>(W) * H;
  const bool use_c = !grad_color.empty();
  const bool use_f = !grad_feature.empty();
  require(!use_c || grad_color.size() == P * 3, ErrorKind::Usage, "color gradient image has wrong size");
  require(!use_f || grad_feature.size() == P * kFeatureDim, ErrorKind::Usage, "feature gradient image has wrong size");
  require(!use_f || !out.feature.data.empty(), ErrorKind::Usage, "feature gradient given but features were not rendered");

  SplatGradients g(out.splat_count);
  const std::size_t S = out.projected.size();
  std::vector<double> gu(S, 0.0), gv(S, 0.0), gr(S, 0.0);

  for (std::size_t px = 0; px < P; ++px) {
    const auto list = out.pixel_contributors(px);
    if (list.empty()) continue;
    const double* gc = use_c ? grad_color.data() + px * 3 : nullptr;
    const double* gf = use_f ? grad_feature.data() + px * kFeatureDim : nullptr;
    bool nonzero = false;
    if (gc)
      for (int k = 0; k < 3; ++k) nonzero |= gc[k] != 0.0;
    if (gf)
      for (std::size_t k = 0; k < kFeatureDim; ++k) nonzero |= gf[k] != 0.0;
    if (!nonzero) continue;

    const int x = static_cast<int>(px % W), y = static_cast<int>(px / W);
    std::array<double, 3> after_c{};
    Feature after_f{};
    for (std::size_t e = list.size(); e-- > 0;) {
      const Contributor& c = list[e];
      const ProjectedSplat& p = out.projected[c.slot];
      const std::uint32_t idx = p.index;
      const double w = c.alpha * c.transmittance;
      double dalpha = 0.0;
      if (gc) {
        const Vec3& col = out.colors[c.slot];
        for (int k = 0; k < 3; ++k) {
          g.colors[idx][k] += w * gc[k];
          dalpha += gc[k] * (c.transmittance * col[k] - after_c[k] / (1.0 - c.alpha));
          after_c[k] += w * col[k];
        }
      }
      if (gf) {
        const Feature& f = out.features[c.slot];
        for (std::size_t k = 0; k < kFeatureDim; ++k) {
          g.features[idx][k] += w * gf[k];
          dalpha += gf[k] * (c.transmittance * f[k] - after_f[k] / (1.0 - c.alpha));
          after_f[k] += w * f[k];
        }
      }
      if (dalpha == 0.0) continue;
      const double dx = x - p.u, dy = y - p.v;
      const double d2 = dx * dx + dy * dy;
      const double r2 = p.radius * p.radius;
      const double G = std::exp(-4.5 * d2 / r2);
      if (out.opacity[c.slot] * G >= kMaxAlpha) continue;  // clamped: flat
      g.opacities[idx] += dalpha * G;
      const double a = c.alpha;
      // d alpha / d u = alpha * 9 (x - u) / r^2, d alpha / d r = alpha * 9 d^2 / r^3
      gu[c.slot] += dalpha * a * 9.0 * dx / r2;
      gv[c.slot] += dalpha * a * 9.0 * dy / r2;
      gr[c.slot] += dalpha * a * 9.0 * d2 / (r2 * p.radius);
    }
  }

  const Camera& cam = out.camera;
  for (std::size_t j = 0; j < S; ++j) {
    if (gu[j] == 0.0 && gv[j] == 0.0 && gr[j] == 0.0) continue;
    const ProjectedSplat& p = out.projected[j];
    const double z = p.depth;
    const Vec3 gpc{gu[j] * cam.fx / z, gv[j] * cam.fy / z,
                   -(gu[j] * (p.u - cam.cx) + gv[j] * (p.v - cam.cy) + gr[j] * p.radius) / z};
    const Vec3 gw = cam.rotate_transpose(gpc);
    for (int k = 0; k < 3; ++k) g.centers[p.index][k] += gw[k];
    g.scales[p.index] += gr[j] * 3.0 * cam.fx / z;
  }
  return g;
}

}  // namespace igs
