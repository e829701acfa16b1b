#pragma once

// Procedural desk-scale scenes with ground truth: box and sphere objects
// resting on the z = 0 plane, an orbit of cameras, point z-buffer renders of
// GT color and instance masks, mask corruption and synthetic class embeddings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "igs/association.hpp"
#include "igs/common.hpp"
#include "igs/losses.hpp"
#include "igs/renderer.hpp"
#include "igs/union_find.hpp"

namespace igs {

enum class Primitive { Box, Sphere };

struct ObjectSpec {
  Primitive type = Primitive::Sphere;
  Vec3 center{};
  Vec3 half_extent{0.2, 0.2, 0.2};  // sphere: radius in [0]
  Vec3 color{0.5, 0.5, 0.5};
  std::uint32_t class_id = 0;

  double bounding_radius() const { return type == Primitive::Sphere ? half_extent[0] : norm(half_extent); }
  double surface_area() const {
    if (type == Primitive::Sphere) return 4.0 * std::numbers::pi * half_extent[0] * half_extent[0];
    const Vec3& h = half_extent;
    return 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]);
  }
};

struct SceneSpec {
  std::size_t object_count = 8;
  std::size_t class_count = 5;
  std::size_t points_per_object = 250;
  std::size_t camera_count = 20;
  double orbit_radius = 3.0;
  int image_width = 64;
  int image_height = 64;
  double fov_deg = 50.0;
  double area_half_width = 1.3;
  double min_size = 0.18;
  double max_size = 0.3;
  double min_gap = 0.25;
  std::uint64_t seed = 0;
  std::vector<ObjectSpec> objects;  // explicit layout; sampled when empty

  void validate() const {
    require(objects.empty() ? object_count >= 1 : true, ErrorKind::Config, "scene needs at least one object");
    require(class_count >= 1, ErrorKind::Config, "scene needs at least one class");
    require(points_per_object >= 1, ErrorKind::Config, "points_per_object must be positive");
    require(image_width > 0 && image_height > 0, ErrorKind::Config, "image size must be positive");
    require(fov_deg > 0 && fov_deg < 180, ErrorKind::Config, "fov_deg must be in (0, 180)");
    require(min_size > 0 && max_size >= min_size, ErrorKind::Config, "object size range is invalid");
  }
};

struct Scene {
  std::vector<ObjectSpec> objects;
  std::vector<double> spacing;  // per object, sqrt(area / points)
  std::vector<Vec3> points;
  std::vector<Vec3> colors;
  std::vector<std::uint32_t> instance;
  std::vector<std::uint32_t> classes;
  std::vector<Camera> cameras;
  std::size_t class_count = 1;
};

namespace detail {

inline Vec3 hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3 rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

inline Vec3 sample_surface(const ObjectSpec& o, Rng& rng) {
  if (o.type == Primitive::Sphere) {
    Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    while (norm(d) < 1e-12) d = {rng.normal(), rng.normal(), rng.normal()};
    return o.center + o.half_extent[0] * normalized(d);
  }
  const Vec3& h = o.half_extent;
  const std::array<double, 3> face_area{h[1] * h[2], h[0] * h[2], h[0] * h[1]};
  const double total = face_area[0] + face_area[1] + face_area[2];
  double pick = rng.uniform() * total;
  int axis = 0;
  while (axis < 2 && pick >= face_area[axis]) pick -= face_area[axis++];
  Vec3 p{rng.uniform(-h[0], h[0]), rng.uniform(-h[1], h[1]), rng.uniform(-h[2], h[2])};
  p[axis] = rng.bernoulli(0.5) ? h[axis] : -h[axis];
  return o.center + p;
}

// OpenCV-style look-at: x right, y down, z forward.
inline Camera look_at(const Vec3& eye, const Vec3& target, int width, int height, double fov_deg) {
  const Vec3 f = normalized(target - eye);
  Vec3 x = cross(f, Vec3{0, 0, 1});
  if (norm(x) < 1e-9) x = cross(f, Vec3{0, 1, 0});
  x = normalized(x);
  const Vec3 y = cross(f, x);
  Camera c;
  c.width = width;
  c.height = height;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  c.cx = 0.5 * (width - 1);
  c.cy = 0.5 * (height - 1);
  c.R = {x[0], x[1], x[2], y[0], y[1], y[2], f[0], f[1], f[2]};
  const Vec3 t = -1.0 * Vec3{dot(x, eye), dot(y, eye), dot(f, eye)};
  c.t = t;
  return c;
}

}  // namespace detail

inline std::vector<ObjectSpec> place_objects(const SceneSpec& spec, Rng& rng) {
  std::vector<ObjectSpec> objs;
  for (std::size_t k = 0; k < spec.object_count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      ObjectSpec o;
      o.type = rng.bernoulli(0.5) ? Primitive::Box : Primitive::Sphere;
      const double size = rng.uniform(spec.min_size, spec.max_size);
      if (o.type == Primitive::Sphere) {
        o.half_extent = {size, size, size};
      } else {
        o.half_extent = {size * rng.uniform(0.6, 1.0), size * rng.uniform(0.6, 1.0), size * rng.uniform(0.6, 1.0)};
      }
      const double br = o.bounding_radius();
      const double lim = spec.area_half_width - br;
      if (lim <= 0) continue;
      o.center = {rng.uniform(-lim, lim), rng.uniform(-lim, lim),
                  o.type == Primitive::Sphere ? size : o.half_extent[2]};
      placed = true;
      for (const ObjectSpec& other : objs) {
        if (norm(o.center - other.center) < br + other.bounding_radius() + spec.min_gap) {
          placed = false;
          break;
        }
      }
      if (placed) {
        const double hue = (static_cast<double>(k) + 0.3 * rng.uniform()) / static_cast<double>(spec.object_count);
        o.color = detail::hsv_to_rgb(hue, 0.75, 0.9);
        o.class_id = static_cast<std::uint32_t>(k % spec.class_count);
        objs.push_back(o);
      }
    }
    require(placed, ErrorKind::Config, "scene too crowded");
  }
  return objs;
}

inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scene scene;
  scene.class_count = spec.class_count;
  scene.objects = spec.objects.empty() ? place_objects(spec, rng) : spec.objects;
  for (const ObjectSpec& o : scene.objects)
    require(o.class_id < spec.class_count, ErrorKind::Config, "object class id out of range");

  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const ObjectSpec& o = scene.objects[k];
    scene.spacing.push_back(std::sqrt(o.surface_area() / static_cast<double>(spec.points_per_object)));
    for (std::size_t i = 0; i < spec.points_per_object; ++i) {
      const Vec3 p = detail::sample_surface(o, rng);
      // horizontal stripes give each object some texture
      const double shade = 0.85 + 0.15 * std::cos(2.0 * std::numbers::pi * p[2] / 0.15);
      scene.points.push_back(p);
      scene.colors.push_back(shade * o.color);
      scene.instance.push_back(static_cast<std::uint32_t>(k));
      scene.classes.push_back(o.class_id);
    }
  }

  Vec3 target{};
  for (const ObjectSpec& o : scene.objects) target = target + o.center;
  target = (1.0 / static_cast<double>(scene.objects.size())) * target;
  const double az0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t v = 0; v < spec.camera_count; ++v) {
    const double t = static_cast<double>(v) / static_cast<double>(spec.camera_count);
    const double az = az0 + 2.0 * std::numbers::pi * t;
    // elevation sweeps between -20 and +60 degrees so undersides get seen
    const double el = (20.0 + 40.0 * std::sin(2.0 * std::numbers::pi * 3.0 * t)) * std::numbers::pi / 180.0;
    const Vec3 eye = target + spec.orbit_radius * Vec3{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                                       std::sin(el)};
    scene.cameras.push_back(detail::look_at(eye, target, spec.image_width, spec.image_height, spec.fov_deg));
  }
  return scene;
}

struct GtView {
  Image color;                         // H x W x 3, background 0
  MaskView masks;                      // one id per visible object, ascending object id
  std::vector<std::uint32_t> nearest;  // per pixel: winning point index or kNoLabel
};

// Point z-buffer: every point is a disk of radius 2 x its object's spacing.
inline GtView render_gt(const Scene& scene, const Camera& camera) {
  camera.validate();
  const int W = camera.width, H = camera.height;
  const std::size_t P = static_cast<std::size_t>(W) * H;
  std::vector<double> zbuf(P, std::numeric_limits<double>::infinity());
  GtView out;
  out.nearest.assign(P, kNoLabel);
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const Vec3 pc = camera.to_camera(scene.points[i]);
    if (!(pc[2] > kNearPlane)) continue;
    const double u = camera.fx * pc[0] / pc[2] + camera.cx;
    const double v = camera.fy * pc[1] / pc[2] + camera.cy;
    const double rp = 2.0 * scene.spacing[scene.instance[i]] * camera.fx / pc[2];
    const int x0 = std::max(0, static_cast<int>(std::ceil(u - rp)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(u + rp)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(v - rp)));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(v + rp)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - u, dy = y - v;
        if (dx * dx + dy * dy > rp * rp) continue;
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        if (pc[2] < zbuf[p]) {
          zbuf[p] = pc[2];
          out.nearest[p] = static_cast<std::uint32_t>(i);
        }
      }
  }
  out.color = Image(W, H, 3);
  std::map<std::uint32_t, std::uint32_t> object_to_mask;
  for (std::size_t p = 0; p < P; ++p)
    if (out.nearest[p] != kNoLabel) object_to_mask.emplace(scene.instance[out.nearest[p]], 0);
  std::uint32_t next = 0;
  for (auto& [obj, id] : object_to_mask) {
    id = next++;
    out.masks.mask_object.push_back(obj);
  }
  out.masks.width = W;
  out.masks.height = H;
  out.masks.mask_count = next;
  out.masks.ids.assign(P, kNoMask);
  for (std::size_t p = 0; p < P; ++p) {
    const std::uint32_t i = out.nearest[p];
    if (i == kNoLabel) continue;
    out.masks.ids[p] = object_to_mask[scene.instance[i]];
    for (int c = 0; c < 3; ++c) out.color.data[p * 3 + c] = scene.colors[i][c];
  }
  return out;
}

struct CorruptionSpec {
  double p_drop = 0.0;
  double p_split = 0.0;
  double p_merge = 0.0;
};

// Emulates unreliable 2D segmentation on one view: drop (pixels -> sentinel),
// split along a random line through the centroid, merge 4-adjacent masks.
inline MaskView corrupt_mask_view(const MaskView& in, const CorruptionSpec& cs, Rng& rng) {
  in.validate();
  const std::uint32_t m = in.mask_count;
  const std::size_t P = in.pixel_count();
  const bool has_obj = in.mask_object.size() == m;
  std::vector<std::uint32_t> ids = in.ids;
  std::vector<std::uint32_t> owner(m);  // source object per working id
  for (std::uint32_t i = 0; i < m; ++i) owner[i] = has_obj ? in.mask_object[i] : kNoLabel;

  std::vector<char> alive(m, 1);
  for (std::uint32_t i = 0; i < m; ++i)
    if (rng.bernoulli(cs.p_drop)) alive[i] = 0;
  for (auto& id : ids)
    if (id != kNoMask && !alive[id]) id = kNoMask;

  std::uint32_t count = m;
  for (std::uint32_t i = 0; i < m; ++i) {
    if (!alive[i] || !rng.bernoulli(cs.p_split)) continue;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    double cx = 0, cy = 0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < P; ++p)
      if (ids[p] == i) {
        cx += static_cast<double>(p % in.width);
        cy += static_cast<double>(p / in.width);
        ++n;
      }
    if (n < 2) continue;
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    std::vector<std::size_t> side;
    for (std::size_t p = 0; p < P; ++p) {
      if (ids[p] != i) continue;
      const double s = (static_cast<double>(p % in.width) - cx) * std::cos(theta) +
                       (static_cast<double>(p / in.width) - cy) * std::sin(theta);
      if (s > 0) side.push_back(p);
    }
    if (side.empty() || side.size() == n) continue;
    for (std::size_t p : side) ids[p] = count;
    owner.push_back(owner[i]);
    alive.push_back(1);
    ++count;
  }

  UnionFind uf(count);
  if (cs.p_merge > 0) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> adj;
    for (std::size_t p = 0; p < P; ++p) {
      const std::uint32_t a = ids[p];
      if (a == kNoMask) continue;
      const std::size_t x = p % in.width;
      if (x + 1 < static_cast<std::size_t>(in.width) && ids[p + 1] != kNoMask && ids[p + 1] != a)
        adj.emplace_back(std::min(a, ids[p + 1]), std::max(a, ids[p + 1]));
      if (p + in.width < P && ids[p + in.width] != kNoMask && ids[p + in.width] != a)
        adj.emplace_back(std::min(a, ids[p + in.width]), std::max(a, ids[p + in.width]));
    }
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    for (auto [a, b] : adj)
      if (rng.bernoulli(cs.p_merge)) uf.unite(a, b);
  }

  // Compact: surviving groups keep ascending order of their smallest id.
  std::vector<std::uint32_t> group_min(count, kNoLabel);
  for (std::uint32_t i = 0; i < count; ++i)
    if (alive[i]) {
      const std::uint32_t r = uf.find(i);
      group_min[r] = std::min(group_min[r], i);
    }
  std::vector<std::uint32_t> remap(count, kNoMask);
  MaskView out;
  out.width = in.width;
  out.height = in.height;
  std::uint32_t next = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!alive[i]) continue;
    const std::uint32_t r = uf.find(i);
    if (group_min[r] != i) continue;
    remap[r] = next++;
    if (has_obj) out.mask_object.push_back(owner[i]);
  }
  out.mask_count = next;
  out.ids.resize(P);
  for (std::size_t p = 0; p < P; ++p) out.ids[p] = ids[p] == kNoMask ? kNoMask : remap[uf.find(ids[p])];
  return out;
}

inline MaskStack corrupt_masks(const MaskStack& masks, const CorruptionSpec& cs, std::uint64_t seed) {
  for (double p : {cs.p_drop, cs.p_split, cs.p_merge})
    require(p >= 0.0 && p <= 1.0, ErrorKind::Config, "corruption probabilities must lie in [0, 1]");
  Rng rng(seed);
  MaskStack out;
  out.reserve(masks.size());
  for (const MaskView& mv : masks) out.push_back(corrupt_mask_view(mv, cs, rng));
  return out;
}

// Normalised one-hot prototypes in the first C dimensions.
inline EmbeddingTable class_prototypes(std::size_t class_count, std::size_t dim) {
  require(dim >= class_count, ErrorKind::Usage, "embedding dimension must be at least the class count");
  EmbeddingTable t(class_count, dim);
  for (std::size_t c = 0; c < class_count; ++c) t.row(c)[c] = 1.0;
  return t;
}

// One row per entry of `classes`: prototype + N(0, sigma^2) noise, normalised.
inline EmbeddingTable generate_embeddings(std::span<const std::uint32_t> classes, std::size_t class_count,
                                          std::size_t dim, double sigma, std::uint64_t seed) {
  require(dim >= class_count, ErrorKind::Usage, "embedding dimension must be at least the class count");
  Rng rng(seed);
  EmbeddingTable t(classes.size(), dim);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    require(classes[i] < class_count, ErrorKind::Usage, "class id out of range");
    auto r = t.row(i);
    r[classes[i]] = 1.0;
    if (sigma > 0)
      for (double& x : r) x += sigma * rng.normal();
    const double n = l2norm(r);
    if (n > 0)
      for (double& x : r) x /= n;
  }
  return t;
}

// Class of every mask in (view, mask) order, via the mask -> object mapping.
inline std::vector<std::uint32_t> mask_classes(const MaskStack& masks, const Scene& scene) {
  std::vector<std::uint32_t> out;
  for (const MaskView& mv : masks) {
    require(mv.mask_object.size() == mv.mask_count, ErrorKind::Usage, "mask view lacks an object mapping");
    for (std::uint32_t obj : mv.mask_object) out.push_back(scene.objects.at(obj).class_id);
  }
  return out;
}

}  // namespace igs
