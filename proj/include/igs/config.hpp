#pragma once

// Run configuration loaded from JSON. Every section is optional; unknown keys
// anywhere are rejected with the offending path.

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

#include "igs/common.hpp"
#include "igs/instantiation.hpp"
#include "igs/scene_model.hpp"
#include "igs/synthdata.hpp"
#include "igs/trainer.hpp"

namespace igs {

struct EmbeddingSpec {
  std::size_t dim = 32;
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

struct QueryPaths {
  std::string text_embeddings;  // IGEM, one row per class; default <run>/embeddings/classes.igem
  std::string class_names;      // JSON array of strings; default <run>/embeddings/classes.json
  std::string mask_embeddings;  // IGEM in (view, mask) order; default <run>/embeddings/masks.igem
  std::size_t top_k = 3;
};

struct RunConfig {
  SceneSpec scene;
  CorruptionSpec corruption;
  std::uint64_t corruption_seed = 0;
  EmbeddingSpec embeddings;
  ModelConfig model;
  bool train_positions = true;
  std::uint64_t model_seed = 0;
  Schedule train = Schedule::with_total(1000);
  std::uint64_t log_every = 100;
  InstantiateOptions instantiate;
  QueryPaths query;
  std::filesystem::path output = "run";
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  require(j.is_object(), ErrorKind::Config, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (std::string_view a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::Config, "unknown config key: " + where + "." + key);
  }
}

template <class T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, "config key " + where + "." + key + " has the wrong type");
  }
}

inline void read_scene(const json& j, RunConfig& c) {
  check_keys(j, "scene", {"objects", "classes", "points_per_object", "cameras", "orbit_radius", "width", "height",
                          "fov_deg", "area_half_width", "min_size", "max_size", "min_gap", "seed", "corruption",
                          "embeddings"});
  SceneSpec& s = c.scene;
  read(j, "scene", "objects", s.object_count);
  read(j, "scene", "classes", s.class_count);
  read(j, "scene", "points_per_object", s.points_per_object);
  read(j, "scene", "cameras", s.camera_count);
  read(j, "scene", "orbit_radius", s.orbit_radius);
  read(j, "scene", "width", s.image_width);
  read(j, "scene", "height", s.image_height);
  read(j, "scene", "fov_deg", s.fov_deg);
  read(j, "scene", "area_half_width", s.area_half_width);
  read(j, "scene", "min_size", s.min_size);
  read(j, "scene", "max_size", s.max_size);
  read(j, "scene", "min_gap", s.min_gap);
  read(j, "scene", "seed", s.seed);
  if (j.contains("corruption")) {
    const json& k = j["corruption"];
    check_keys(k, "scene.corruption", {"p_drop", "p_split", "p_merge", "seed"});
    read(k, "scene.corruption", "p_drop", c.corruption.p_drop);
    read(k, "scene.corruption", "p_split", c.corruption.p_split);
    read(k, "scene.corruption", "p_merge", c.corruption.p_merge);
    read(k, "scene.corruption", "seed", c.corruption_seed);
  }
  if (j.contains("embeddings")) {
    const json& k = j["embeddings"];
    check_keys(k, "scene.embeddings", {"dim", "sigma", "seed"});
    read(k, "scene.embeddings", "dim", c.embeddings.dim);
    read(k, "scene.embeddings", "sigma", c.embeddings.sigma);
    read(k, "scene.embeddings", "seed", c.embeddings.seed);
  }
}

inline void read_model(const json& j, RunConfig& c) {
  check_keys(j, "model", {"embedding_dim", "hidden_width", "offset_range", "base_scale", "feature_init_halfwidth",
                          "train_positions", "seed"});
  read(j, "model", "embedding_dim", c.model.embedding_dim);
  read(j, "model", "hidden_width", c.model.hidden_width);
  read(j, "model", "offset_range", c.model.offset_range);
  read(j, "model", "base_scale", c.model.base_scale);
  read(j, "model", "feature_init_halfwidth", c.model.feature_init_halfwidth);
  read(j, "model", "train_positions", c.train_positions);
  read(j, "model", "seed", c.model_seed);
}

inline void read_train(const json& j, RunConfig& c) {
  check_keys(j, "train", {"total_steps", "t1", "t2", "mode", "lambda_s", "lambda_c", "tau", "smooth_normalization",
                          "learning_rates", "seed", "log_every"});
  Schedule& s = c.train;
  std::uint64_t total = s.total_steps;
  read(j, "train", "total_steps", total);
  if (total != s.total_steps) {
    const Schedule fresh = Schedule::with_total(total);
    s.total_steps = fresh.total_steps;
    s.t1 = fresh.t1;
    s.t2 = fresh.t2;
  }
  read(j, "train", "t1", s.t1);
  read(j, "train", "t2", s.t2);
  if (j.contains("mode")) {
    std::string mode;
    read(j, "train", "mode", mode);
    if (mode == "progressive")
      s.mode = TrainingMode::Progressive;
    else if (mode == "frozen_appearance")
      s.mode = TrainingMode::FrozenAppearance;
    else
      fail(ErrorKind::Config, "train.mode must be \"progressive\" or \"frozen_appearance\"");
  }
  read(j, "train", "lambda_s", s.lambda_s);
  read(j, "train", "lambda_c", s.lambda_c);
  read(j, "train", "tau", s.tau);
  if (j.contains("smooth_normalization")) {
    std::string n;
    read(j, "train", "smooth_normalization", n);
    if (n == "none")
      s.smooth_norm = SmoothNormalization::None;
    else if (n == "masked_pixels")
      s.smooth_norm = SmoothNormalization::MaskedPixels;
    else if (n == "per_mask")
      s.smooth_norm = SmoothNormalization::PerMask;
    else
      fail(ErrorKind::Config, "train.smooth_normalization must be none, masked_pixels or per_mask");
  }
  if (j.contains("learning_rates")) {
    const json& k = j["learning_rates"];
    check_keys(k, "train.learning_rates", {"feature", "decoder", "embedding", "position"});
    read(k, "train.learning_rates", "feature", s.lr.feature);
    read(k, "train.learning_rates", "decoder", s.lr.decoder);
    read(k, "train.learning_rates", "embedding", s.lr.embedding);
    read(k, "train.learning_rates", "position", s.lr.position);
  }
  read(j, "train", "seed", s.seed);
  read(j, "train", "log_every", c.log_every);
}

inline void read_instantiate(const json& j, RunConfig& c) {
  check_keys(j, "instantiate",
             {"samples", "voxel_size", "gamma", "lambda_pos", "seed", "adjacency", "max_iters", "tol"});
  InstantiateOptions& o = c.instantiate;
  read(j, "instantiate", "samples", o.samples);
  read(j, "instantiate", "voxel_size", o.voxel_size);
  read(j, "instantiate", "gamma", o.gamma);
  read(j, "instantiate", "lambda_pos", o.lambda_pos);
  read(j, "instantiate", "seed", o.seed);
  read(j, "instantiate", "max_iters", o.kmeans.max_iters);
  read(j, "instantiate", "tol", o.kmeans.tol);
  if (j.contains("adjacency")) {
    std::string a;
    read(j, "instantiate", "adjacency", a);
    if (a == "voxel")
      o.adjacency = Adjacency::Voxel;
    else if (a == "all")
      o.adjacency = Adjacency::All;
    else
      fail(ErrorKind::Config, "instantiate.adjacency must be \"voxel\" or \"all\"");
  }
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  c.scene.validate();
  c.train.validate();
  for (double p : {c.corruption.p_drop, c.corruption.p_split, c.corruption.p_merge})
    require(p >= 0.0 && p <= 1.0, ErrorKind::Config, "corruption probabilities must lie in [0, 1]");
  require(c.embeddings.dim >= c.scene.class_count, ErrorKind::Config,
          "scene.embeddings.dim must be at least scene.classes");
  require(c.embeddings.sigma >= 0, ErrorKind::Config, "scene.embeddings.sigma must be >= 0");
  require(c.model.embedding_dim >= 1 && c.model.hidden_width >= 1, ErrorKind::Config,
          "model dimensions must be positive");
  require(c.instantiate.samples >= 1, ErrorKind::Config, "instantiate.samples must be positive");
  require(c.instantiate.voxel_size > 0, ErrorKind::Config, "instantiate.voxel_size must be positive");
  require(c.instantiate.gamma > 0, ErrorKind::Config, "instantiate.gamma must be positive");
  require(c.instantiate.lambda_pos >= 0, ErrorKind::Config, "instantiate.lambda_pos must be >= 0");
  require(c.query.top_k >= 1, ErrorKind::Config, "query.top_k must be positive");
}

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::check_keys;
  check_keys(j, "config", {"scene", "model", "train", "instantiate", "query", "output"});
  RunConfig c;
  if (j.contains("scene")) detail::read_scene(j["scene"], c);
  if (j.contains("model")) detail::read_model(j["model"], c);
  if (j.contains("train")) detail::read_train(j["train"], c);
  if (j.contains("instantiate")) detail::read_instantiate(j["instantiate"], c);
  if (j.contains("query")) {
    const auto& q = j["query"];
    check_keys(q, "query", {"text_embeddings", "class_names", "mask_embeddings", "top_k"});
    detail::read(q, "query", "text_embeddings", c.query.text_embeddings);
    detail::read(q, "query", "class_names", c.query.class_names);
    detail::read(q, "query", "mask_embeddings", c.query.mask_embeddings);
    detail::read(q, "query", "top_k", c.query.top_k);
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    check_keys(o, "output", {"directory"});
    std::string dir = c.output.string();
    detail::read(o, "output", "directory", dir);
    c.output = dir;
  }
  validate(c);
  return c;
}

inline RunConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Config, std::string("malformed config: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace igs
