#pragma once

// Run-directory layout shared by the CLI subcommands.
//
//   scene.json                 manifest (object list, view files, class count)
//   points.igpc                scene points with GT instance / class
//   cameras/view_NNN.json      camera per view
//   images/view_NNN.f32        target color, 3 planes of H x W
//   images/view_NNN.png        same, 8-bit, for inspection
//   masks/view_NNN.igmk        2D masks per view
//   embeddings/masks.igem      one row per mask, (view, mask id) order
//   embeddings/classes.igem    one row per class (query vocabulary)
//   embeddings/classes.json    class names
//   checkpoint.igck, loss.csv  from train
//   instances.iglb             per-splat instance labels, from instantiate
//   instance_embeddings.igem   from associate
//   query.json, semantic.iglb  from query
//   metrics.json               from eval
//   instances.ply              from export-ply

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "igs/formats.hpp"
#include "igs/synthdata.hpp"
#include "igs/trainer.hpp"

namespace igs {

inline std::string view_stem(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03zu", v);
  return buf;
}

struct ViewFiles {
  std::string camera;
  std::string image;
  std::string png;
  std::string masks;
};

inline ViewFiles view_files(std::size_t v) {
  const std::string s = view_stem(v);
  return {"cameras/" + s + ".json", "images/" + s + ".f32", "images/" + s + ".png", "masks/" + s + ".igmk"};
}

struct SceneManifest {
  std::size_t class_count = 1;
  int width = 0;
  int height = 0;
  std::vector<ViewFiles> views;
  std::vector<std::string> class_names;
};

inline const char* primitive_name(Primitive p) { return p == Primitive::Box ? "box" : "sphere"; }

inline std::vector<std::string> default_class_names(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < count; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

inline std::string scene_manifest_json(const Scene& scene, const SceneManifest& m) {
  nlohmann::ordered_json j;
  j["version"] = kFormatVersion;
  j["points"] = "points.igpc";
  j["class_count"] = m.class_count;
  j["width"] = m.width;
  j["height"] = m.height;
  j["class_names"] = m.class_names;
  auto& objs = j["objects"] = nlohmann::ordered_json::array();
  for (const ObjectSpec& o : scene.objects) {
    nlohmann::ordered_json oj;
    oj["type"] = primitive_name(o.type);
    oj["center"] = std::vector<double>(o.center.begin(), o.center.end());
    oj["half_extent"] = std::vector<double>(o.half_extent.begin(), o.half_extent.end());
    oj["color"] = std::vector<double>(o.color.begin(), o.color.end());
    oj["class_id"] = o.class_id;
    objs.push_back(oj);
  }
  auto& views = j["views"] = nlohmann::ordered_json::array();
  for (const ViewFiles& v : m.views)
    views.push_back({{"camera", v.camera}, {"image", v.image}, {"png", v.png}, {"masks", v.masks}});
  return j.dump(2) + "\n";
}

inline SceneManifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / "scene.json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Data, path.string() + ": " + e.what());
  }
  try {
    SceneManifest m;
    m.class_count = j.at("class_count").get<std::size_t>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& v : j.at("views"))
      m.views.push_back({v.at("camera").get<std::string>(), v.at("image").get<std::string>(),
                         v.at("png").get<std::string>(), v.at("masks").get<std::string>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, path.string() + ": " + e.what());
  }
}

inline PointCloud scene_point_cloud(const Scene& scene) {
  return {scene.points, scene.colors, scene.instance, scene.classes};
}

inline PointCloud load_point_cloud(const fs::path& dir) {
  const fs::path p = dir / "points.igpc";
  return decode_points(read_file(p), p.string());
}

inline MaskView load_masks(const fs::path& path) { return decode_masks(read_file(path), path.string()); }
inline EmbeddingTable load_embeddings(const fs::path& path) { return decode_embeddings(read_file(path), path.string()); }
inline LabelFile load_labels(const fs::path& path) { return decode_labels(read_file(path), path.string()); }

inline std::vector<Camera> load_cameras(const fs::path& dir, const SceneManifest& m) {
  std::vector<Camera> cams;
  for (const ViewFiles& v : m.views) cams.push_back(load_camera(dir / v.camera));
  return cams;
}

inline MaskStack load_mask_stack(const fs::path& dir, const SceneManifest& m) {
  MaskStack masks;
  for (const ViewFiles& v : m.views) masks.push_back(load_masks(dir / v.masks));
  return masks;
}

inline std::vector<TrainingView> load_training_views(const fs::path& dir, const SceneManifest& m) {
  std::vector<TrainingView> views;
  for (const ViewFiles& f : m.views) {
    TrainingView v;
    v.camera = load_camera(dir / f.camera);
    v.target = decode_planar_f32(read_file(dir / f.image), v.camera.width, v.camera.height, 3, (dir / f.image).string());
    v.masks = load_masks(dir / f.masks);
    require(v.masks.width == v.camera.width && v.masks.height == v.camera.height, ErrorKind::Data,
            (dir / f.masks).string() + ": mask size does not match the camera");
    views.push_back(std::move(v));
  }
  return views;
}

inline std::vector<std::string> load_class_names(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path)).get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, path.string() + ": " + e.what());
  }
}

inline std::string loss_csv_header() { return "step,phase,l_rgb,l_smooth,l_contrast\n"; }

inline std::string loss_csv_row(const LossReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%llu,%s,%.9g,%.9g,%.9g\n", static_cast<unsigned long long>(r.step),
                phase_name(r.phase), r.l_rgb, r.l_smooth, r.l_contrast);
  return buf;
}

}  // namespace igs
