#pragma once

// `igs` command line: one subcommand per pipeline stage, all reading and
// writing a run directory (see dataset.hpp for its layout).
//
// Exit codes: 0 success, 1 selftest failure, 2 usage or config error,
// 3 I/O or malformed input file, 4 numerical abort.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "igs/association.hpp"
#include "igs/config.hpp"
#include "igs/dataset.hpp"
#include "igs/evaluation.hpp"
#include "igs/formats.hpp"
#include "igs/instantiation.hpp"
#include "igs/parallel.hpp"
#include "igs/pipeline.hpp"
#include "igs/selftest.hpp"

namespace igs {

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage:
    case ErrorKind::Config: return 2;
    case ErrorKind::Io:
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
  }
  return 1;
}

namespace cli {

struct Common {
  std::string config_path;
  std::string out_dir;
};

inline RunConfig load_run_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? parse_config(std::string_view("{}"))
                                        : parse_config(std::string_view(read_file(c.config_path)));
  if (!c.out_dir.empty()) cfg.output = c.out_dir;
  return cfg;
}

inline fs::path or_default(const std::string& configured, const fs::path& fallback) {
  return configured.empty() ? fallback : fs::path(configured);
}

inline void cmd_generate(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.output;
  const Scene scene = generate_scene(cfg.scene);
  std::vector<TrainingView> views = make_training_views(scene);
  MaskStack masks = masks_of(views);
  const bool corrupt = cfg.corruption.p_drop > 0 || cfg.corruption.p_split > 0 || cfg.corruption.p_merge > 0;
  if (corrupt) masks = corrupt_masks(masks, cfg.corruption, cfg.corruption_seed);
  const std::vector<std::uint32_t> classes = mask_classes(masks, scene);
  const EmbeddingTable mask_emb =
      generate_embeddings(classes, scene.class_count, cfg.embeddings.dim, cfg.embeddings.sigma, cfg.embeddings.seed);
  const EmbeddingTable text = class_prototypes(scene.class_count, cfg.embeddings.dim);

  SceneManifest m;
  m.class_count = scene.class_count;
  m.width = cfg.scene.image_width;
  m.height = cfg.scene.image_height;
  m.class_names = default_class_names(scene.class_count);
  write_file_atomic(dir / "points.igpc", encode_points(scene_point_cloud(scene)));
  for (std::size_t v = 0; v < views.size(); ++v) {
    const ViewFiles f = view_files(v);
    write_file_atomic(dir / f.camera, camera_to_string(views[v].camera));
    write_file_atomic(dir / f.image, encode_planar_f32(views[v].target));
    write_file_atomic(dir / f.png, encode_png(views[v].target));
    write_file_atomic(dir / f.masks, encode_masks(masks[v]));
    m.views.push_back(f);
  }
  write_file_atomic(dir / "embeddings/masks.igem", encode_embeddings(mask_emb));
  write_file_atomic(dir / "embeddings/classes.igem", encode_embeddings(text));
  write_file_atomic(dir / "embeddings/classes.json", nlohmann::json(m.class_names).dump() + "\n");
  write_file_atomic(dir / "scene.json", scene_manifest_json(scene, m));
  out << "generated " << scene.objects.size() << " objects, " << scene.points.size() << " points, " << views.size()
      << " views in " << dir.string() << "\n";
}

inline void cmd_train(RunConfig cfg, std::optional<std::uint64_t> steps, std::ostream& out, std::ostream& err) {
  const fs::path dir = cfg.output;
  if (steps) {
    const Schedule fresh = Schedule::with_total(*steps);
    cfg.train.total_steps = fresh.total_steps;
    cfg.train.t1 = fresh.t1;
    cfg.train.t2 = fresh.t2;
    cfg.train.validate();
  }
  const SceneManifest manifest = load_manifest(dir);
  const PointCloud pc = load_point_cloud(dir);
  const std::vector<TrainingView> views = load_training_views(dir, manifest);
  Model model = init_model(pc.positions, cfg.model, cfg.model_seed);
  model.anchors.train_positions = cfg.train_positions;

  std::string csv = loss_csv_header();
  const std::uint64_t every = cfg.log_every;
  train_model(model, views, cfg.train, [&](const LossReport& r) {
    csv += loss_csv_row(r);
    if (every && (r.step % every == 0 || r.step + 1 == cfg.train.total_steps))
      err << "step " << r.step << "/" << cfg.train.total_steps << " " << phase_name(r.phase) << " rgb " << r.l_rgb
          << " smooth " << r.l_smooth << " contrast " << r.l_contrast << "\n";
  });
  write_file_atomic(dir / "checkpoint.igck", encode_checkpoint(model));
  write_file_atomic(dir / "loss.csv", csv);
  out << "trained " << cfg.train.total_steps << " steps on " << views.size() << " views, " << model.anchors.size()
      << " anchors\n";
}

inline Model load_run_checkpoint(const fs::path& dir) { return load_checkpoint(dir / "checkpoint.igck"); }

inline void cmd_instantiate(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.output;
  const Model model = load_run_checkpoint(dir);
  const SplatPoints sp = splat_points(model);
  const InstanceResult res = instantiate(sp.positions, sp.features, cfg.instantiate);
  write_file_atomic(dir / "instances.iglb", encode_labels(res.labels, static_cast<std::uint32_t>(res.instance_count)));
  EmbeddingTable f(res.instance_count, kFeatureDim);
  f.data = res.features.data;
  write_file_atomic(dir / "instance_features.igem", encode_embeddings(f));
  out << "instances: " << res.instance_count << " (from " << sp.positions.size() << " splats, s = "
      << cfg.instantiate.samples << ", r = " << cfg.instantiate.voxel_size << ", gamma = " << cfg.instantiate.gamma
      << ")\n";
}

inline InstanceResult load_instances(const fs::path& dir, std::size_t splat_count) {
  const LabelFile lf = load_labels(dir / "instances.iglb");
  require(lf.labels.size() == splat_count, ErrorKind::Data, "instances.iglb does not match the checkpoint's splat count");
  InstanceResult r;
  r.instance_count = lf.count;
  r.labels = lf.labels;
  for (std::uint32_t l : r.labels) require(l < lf.count, ErrorKind::Data, "instance label out of range");
  return r;
}

inline void cmd_associate(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.output;
  const SceneManifest manifest = load_manifest(dir);
  const Model model = load_run_checkpoint(dir);
  const SplatPoints sp = splat_points(model);
  const InstanceResult inst = load_instances(dir, sp.splats.size());
  const std::vector<Camera> cams = load_cameras(dir, manifest);
  const MaskStack masks = load_mask_stack(dir, manifest);
  const EmbeddingTable mask_emb = load_embeddings(or_default(cfg.query.mask_embeddings, dir / "embeddings/masks.igem"));
  const auto maps = instance_id_maps(sp.splats, inst, cams);
  const EmbeddingTable emb = associate_embeddings(maps, masks, mask_emb, inst.instance_count);
  write_file_atomic(dir / "instance_embeddings.igem", encode_embeddings(emb));
  std::size_t seen = 0;
  for (std::size_t k = 0; k < emb.count(); ++k) seen += l2norm(emb.row(k)) > 0 ? 1 : 0;
  out << "associated " << seen << " of " << emb.count() << " instances with mask embeddings\n";
}

inline void cmd_query(const RunConfig& cfg, const std::vector<std::string>& texts, std::ostream& out) {
  const fs::path dir = cfg.output;
  const EmbeddingTable inst = load_embeddings(dir / "instance_embeddings.igem");
  const EmbeddingTable text = load_embeddings(or_default(cfg.query.text_embeddings, dir / "embeddings/classes.igem"));
  const std::vector<std::string> names = load_class_names(or_default(cfg.query.class_names, dir / "embeddings/classes.json"));
  require(names.size() == text.count(), ErrorKind::Data, "class name count does not match text embeddings");
  const LabelFile labels = load_labels(dir / "instances.iglb");
  require(labels.count == inst.count(), ErrorKind::Data, "instance embeddings do not match instances.iglb");

  const SemanticAssignment sa = semantic_assign(text, inst, labels.labels);
  nlohmann::ordered_json j;
  j["classes"] = names;
  std::vector<long long> ic;
  for (std::uint32_t c : sa.instance_class) ic.push_back(c == kNoClass ? -1 : static_cast<long long>(c));
  j["instance_class"] = ic;
  auto& qs = j["queries"] = nlohmann::ordered_json::array();
  std::vector<std::string> wanted = texts.empty() ? names : texts;
  for (const std::string& t : wanted) {
    const auto it = std::find(names.begin(), names.end(), t);
    require(it != names.end(), ErrorKind::Usage, "unknown query text: " + t);
    const std::size_t c = static_cast<std::size_t>(it - names.begin());
    const std::vector<double> scores = score_query(text.row(c), inst);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    nlohmann::ordered_json q;
    q["text"] = t;
    q["scores"] = scores;
    auto& top = q["top"] = nlohmann::ordered_json::array();
    out << t << ":";
    for (std::size_t r = 0; r < std::min(cfg.query.top_k, order.size()); ++r) {
      top.push_back({{"instance", order[r]}, {"score", scores[order[r]]}});
      out << " " << order[r] << " (" << std::fixed << std::setprecision(3) << scores[order[r]] << ")";
    }
    out << std::defaultfloat << "\n";
    qs.push_back(q);
  }
  write_file_atomic(dir / "query.json", j.dump(2) + "\n");
  write_file_atomic(dir / "semantic.iglb", encode_labels(sa.point_class, static_cast<std::uint32_t>(text.count())));
}

inline nlohmann::ordered_json optional_array(const std::vector<std::optional<double>>& v) {
  auto a = nlohmann::ordered_json::array();
  for (const auto& x : v) a.push_back(x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr));
  return a;
}

inline void cmd_eval(const RunConfig& cfg, const std::string& matching, std::ostream& out) {
  const fs::path dir = cfg.output;
  const SceneManifest manifest = load_manifest(dir);
  const PointCloud pc = load_point_cloud(dir);
  const LabelFile inst = load_labels(dir / "instances.iglb");
  require(inst.labels.size() == pc.positions.size() * kChildrenPerAnchor, ErrorKind::Data,
          "instances.iglb does not match the scene's splat count");
  std::vector<std::uint32_t> gt_inst(inst.labels.size()), gt_cls(inst.labels.size());
  for (std::size_t i = 0; i < inst.labels.size(); ++i) {
    gt_inst[i] = pc.instance[i / kChildrenPerAnchor];
    gt_cls[i] = pc.classes[i / kChildrenPerAnchor];
  }
  Matching mode = Matching::BestOverlap;
  if (matching == "hungarian")
    mode = Matching::OneToOne;
  else
    require(matching == "best", ErrorKind::Usage, "--matching must be best or hungarian");
  const InstanceMetrics im = instance_metrics(inst.labels, gt_inst, mode);

  nlohmann::ordered_json j;
  j["predicted_instances"] = inst.count;
  j["gt_instances"] = im.gt_ids.size();
  j["instance"] = {{"matching", matching}, {"miou", im.miou}, {"macc25", im.macc25}, {"per_instance_iou", im.per_instance_iou}};
  out << "instances   predicted " << inst.count << "   ground truth " << im.gt_ids.size() << "\n";
  out << std::fixed << std::setprecision(4) << "instance    mIoU " << im.miou << "   mAcc@0.25 " << im.macc25 << "\n";

  const fs::path sem_path = dir / "semantic.iglb";
  if (fs::exists(sem_path)) {
    const LabelFile sem = load_labels(sem_path);
    require(sem.labels.size() == inst.labels.size(), ErrorKind::Data, "semantic.iglb does not match instances.iglb");
    const SemanticMetrics sm = semantic_metrics(sem.labels, gt_cls, manifest.class_count);
    const double recovery = instance_class_recovery(sem.labels, gt_inst, gt_cls, manifest.class_count);
    j["semantic"] = {{"miou", sm.miou},
                     {"macc", sm.macc},
                     {"classes_present", sm.classes_present},
                     {"per_class_iou", optional_array(sm.per_class_iou)},
                     {"per_class_acc", optional_array(sm.per_class_acc)},
                     {"instance_class_recovery", recovery}};
    out << "semantic    mIoU " << sm.miou << "   mAcc " << sm.macc << "   class recovery " << recovery << "\n";
  }
  out << std::defaultfloat;
  write_file_atomic(dir / "metrics.json", j.dump(2) + "\n");
}

inline void cmd_export_ply(const RunConfig& cfg, const std::string& path, std::ostream& out) {
  const fs::path dir = cfg.output;
  const Model model = load_run_checkpoint(dir);
  const SplatPoints sp = splat_points(model);
  const InstanceResult inst = load_instances(dir, sp.splats.size());
  const fs::path target = path.empty() ? dir / "instances.ply" : fs::path(path);
  write_file_atomic(target, encode_instance_ply(sp.positions, inst.labels));
  out << "wrote " << sp.positions.size() << " points to " << target.string() << "\n";
}

inline bool cmd_selftest(std::ostream& out) {
  bool all = true;
  for (const SelftestResult& r : run_selftest()) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) out << " (" << r.detail << ")";
    out << "\n";
    all = all && r.passed;
  }
  return all;
}

inline unsigned threads_from_env() {
  const char* v = std::getenv("IGS_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  require(end && *end == '\0', ErrorKind::Usage, "IGS_THREADS must be a non-negative integer");
  return static_cast<unsigned>(n);
}

}  // namespace cli

inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Instance-aware Gaussian splatting: synthetic scenes, training, instantiation and queries", "igs"};
  app.require_subcommand(1);
  std::optional<unsigned> threads;
  app.add_option("--threads", threads, "worker threads (0 = all cores; falls back to IGS_THREADS)");

  cli::Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "run configuration JSON")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out_dir, "run directory (overrides output.directory)");
  };

  CLI::App* gen = app.add_subcommand("generate", "generate a synthetic scene with views, masks and embeddings");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "train the anchor model on a generated scene");
  add_common(train);
  std::optional<std::uint64_t> steps;
  train->add_option("--steps", steps, "total steps (phase boundaries at 1/3 and 2/3)");

  CLI::App* inst = app.add_subcommand("instantiate", "segment the trained splats into instances");
  add_common(inst);
  std::optional<std::size_t> samples;
  std::optional<double> voxel, gamma, lambda_pos;
  std::optional<std::uint64_t> inst_seed;
  inst->add_option("--samples", samples, "number of over-segmentation clusters s");
  inst->add_option("--voxel-size", voxel, "voxel size r");
  inst->add_option("--gamma", gamma, "feature distance threshold for merging");
  inst->add_option("--lambda-pos", lambda_pos, "weight of the positional encoding");
  inst->add_option("--seed", inst_seed, "seed for the sampling start point");

  CLI::App* assoc = app.add_subcommand("associate", "attach mask embeddings to instances");
  add_common(assoc);

  CLI::App* query = app.add_subcommand("query", "score instances against class text embeddings");
  add_common(query);
  std::vector<std::string> texts;
  std::optional<std::size_t> top_k;
  query->add_option("--text", texts, "class name to query (repeatable; default all classes)");
  query->add_option("--top-k", top_k, "instances listed per query");

  CLI::App* eval = app.add_subcommand("eval", "compare predicted instances (and classes) with ground truth");
  add_common(eval);
  std::string matching = "best";
  eval->add_option("--matching", matching, "best (per-GT best overlap) or hungarian (one-to-one)");

  CLI::App* ply = app.add_subcommand("export-ply", "write splat centers colored by instance id");
  add_common(ply);
  std::string ply_path;
  ply->add_option("--output", ply_path, "PLY path (default <run>/instances.ply)");

  CLI::App* self = app.add_subcommand("selftest", "run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "igs: " << e.what() << "\n";
    return 2;
  }

  try {
    set_thread_count(threads ? *threads : cli::threads_from_env());
    if (self->parsed()) return cli::cmd_selftest(out) ? 0 : 1;

    RunConfig cfg = cli::load_run_config(common);
    if (samples) cfg.instantiate.samples = *samples;
    if (voxel) cfg.instantiate.voxel_size = *voxel;
    if (gamma) cfg.instantiate.gamma = *gamma;
    if (lambda_pos) cfg.instantiate.lambda_pos = *lambda_pos;
    if (inst_seed) cfg.instantiate.seed = *inst_seed;
    if (top_k) cfg.query.top_k = *top_k;
    validate(cfg);

    if (gen->parsed()) cli::cmd_generate(cfg, out);
    if (train->parsed()) cli::cmd_train(cfg, steps, out, err);
    if (inst->parsed()) cli::cmd_instantiate(cfg, out);
    if (assoc->parsed()) cli::cmd_associate(cfg, out);
    if (query->parsed()) cli::cmd_query(cfg, texts, out);
    if (eval->parsed()) cli::cmd_eval(cfg, matching, out);
    if (ply->parsed()) cli::cmd_export_ply(cfg, ply_path, out);
    return 0;
  } catch (const Error& e) {
    err << "igs: error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "igs: error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace igs
