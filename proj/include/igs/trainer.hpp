#pragma once

// Progressive appearance/semantic optimisation:
//   AppearanceOnly [0, t1)   L_rgb trains embeddings, decoder and positions.
//   Independent    [t1, t2)  feature losses additionally train the instance
//                            features only.
//   Joint          [t2, T)   feature losses also reach anchor positions and the
//                            offset and opacity heads. Color stays L_rgb-only.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "igs/common.hpp"
#include "igs/losses.hpp"
#include "igs/renderer.hpp"
#include "igs/scene_model.hpp"

namespace igs {

enum class Phase { AppearanceOnly = 0, Independent = 1, Joint = 2 };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::AppearanceOnly: return "appearance";
    case Phase::Independent: return "independent";
    case Phase::Joint: return "joint";
  }
  return "?";
}

enum class TrainingMode {
  Progressive,
  // After t1 only the feature is optimised, appearance stays frozen.
  FrozenAppearance,
};

struct LearningRates {
  double feature = 1e-2;
  double decoder = 2e-3;
  double embedding = 2e-3;
  double position = 2e-4;
};

struct Schedule {
  std::uint64_t total_steps = 30000;
  std::uint64_t t1 = 10000;
  std::uint64_t t2 = 20000;
  TrainingMode mode = TrainingMode::Progressive;
  LearningRates lr;
  std::array<double, 3> phase_lr_scale{1.0, 1.0, 1.0};
  double lambda_s = 1.0;
  double lambda_c = 0.1;
  double tau = kDefaultTau;
  // Unnormalised so the smoothing pull holds up against the contrast term's
  // large gradients inside the shared Adam second moment.
  SmoothNormalization smooth_norm = SmoothNormalization::None;
  std::uint64_t seed = 0;

  static Schedule with_total(std::uint64_t total) {
    Schedule s;
    s.total_steps = total;
    s.t1 = total / 3;
    s.t2 = 2 * total / 3;
    return s;
  }

  void validate() const {
    if (total_steps == 0) return;
    require(0 < t1 && t1 < t2 && t2 <= total_steps, ErrorKind::Config,
            "schedule requires 0 < t1 < t2 <= total_steps");
    require(tau > 0, ErrorKind::Config, "tau must be positive");
  }
};

inline Phase phase_of_step(std::uint64_t step, const Schedule& s) {
  require(step < s.total_steps, ErrorKind::Usage, "step outside the schedule");
  if (step < s.t1) return Phase::AppearanceOnly;
  if (step < s.t2) return Phase::Independent;
  return Phase::Joint;
}

struct TrainingView {
  Camera camera;
  Image target;  // H x W x 3
  MaskView masks;
};

// ---------------------------------------------------------------------------
// Adaptive moment estimation

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  void update(std::span<double> param, std::span<const double> grad, double lr, const AdamConfig& cfg = {}) {
    if (m.empty()) {
      m.assign(param.size(), 0.0);
      v.assign(param.size(), 0.0);
    }
    require(m.size() == param.size() && grad.size() == param.size(), ErrorKind::Usage,
            "optimizer moment shape mismatch");
    ++step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      param[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
};

// ---------------------------------------------------------------------------

inline std::span<double> flat(std::vector<Vec3>& v) { return {v.data()->data(), v.size() * 3}; }
inline std::span<double> flat(std::vector<Feature>& v) { return {v.data()->data(), v.size() * kFeatureDim}; }

enum class Group { Position, Embedding, Feature, Decoder };

// Invokes fn(group, head_index, param_span, grad_span) for every tensor, in a
// fixed order. head_index is only meaningful for Group::Decoder.
template <typename Fn>
void for_each_tensor(Model& model, ModelGradients& grads, Fn&& fn) {
  if (model.anchors.size() > 0) {
    fn(Group::Position, 0, flat(model.anchors.positions), std::span<const double>(flat(grads.positions)));
    fn(Group::Embedding, 0, std::span<double>(model.anchors.embeddings), std::span<const double>(grads.embeddings));
    fn(Group::Feature, 0, flat(model.anchors.features), std::span<const double>(flat(grads.features)));
  }
  for (std::size_t h = 0; h < kHeadCount; ++h) {
    MlpHead& p = model.decoder.heads[h];
    MlpHead& g = grads.decoder.heads[h];
    fn(Group::Decoder, h, std::span<double>(p.w1), std::span<const double>(g.w1));
    fn(Group::Decoder, h, std::span<double>(p.b1), std::span<const double>(g.b1));
    fn(Group::Decoder, h, std::span<double>(p.w2), std::span<const double>(g.w2));
    fn(Group::Decoder, h, std::span<double>(p.b2), std::span<const double>(g.b2));
  }
}

struct LossReport {
  std::uint64_t step = 0;
  Phase phase = Phase::AppearanceOnly;
  std::size_t view = 0;
  double l_rgb = 0.0;
  double l_smooth = 0.0;
  double l_contrast = 0.0;
  std::size_t degenerate_pairs = 0;
  std::vector<Feature> mask_means;
};

struct TrainState {
  std::uint64_t step = 0;
  Rng rng{0};
  std::vector<AdamState> moments;  // one per tensor, for_each_tensor order
  std::vector<LossReport> log;

  explicit TrainState(std::uint64_t seed = 0) : rng(seed ^ 0x5851F42D4C957F2Dull) {}
};

// Gradients of one view, split by the loss that produced them.
struct StepGradients {
  ModelGradients appearance;  // from L_rgb
  ModelGradients feature;     // from lambda_s L_smooth + lambda_c L_contrast, after severing
  LossReport report;
};

inline bool appearance_trains(Phase phase, const Schedule& s) {
  return s.mode == TrainingMode::Progressive || phase == Phase::AppearanceOnly;
}

inline StepGradients compute_step_gradients(const Model& model, const TrainingView& view, Phase phase,
                                            const Schedule& schedule) {
  StepGradients out{ModelGradients(model.anchors, model.decoder), ModelGradients(model.anchors, model.decoder), {}};
  out.report.phase = phase;
  const SplatSet splats = decode_gaussians(model.anchors, model.decoder);
  RenderOptions ro;
  ro.features = phase != Phase::AppearanceOnly;
  const RenderOutput rendered = render(splats, view.camera, ro);

  const LossValue rgb = loss_rgb(rendered.color, view.target);
  out.report.l_rgb = rgb.value;
  if (appearance_trains(phase, schedule)) {
    const SplatGradients sg = render_backward(rendered, rgb.grad, {});
    decode_backward(model.anchors, model.decoder, sg, out.appearance);
  }
  if (phase == Phase::AppearanceOnly) return out;

  FeatureLossReport fl =
      feature_losses(rendered.feature, view.masks, schedule.lambda_s, schedule.lambda_c, schedule.tau, schedule.smooth_norm);
  out.report.l_smooth = fl.smooth;
  out.report.l_contrast = fl.contrast;
  out.report.degenerate_pairs = fl.degenerate_pairs;
  out.report.mask_means = std::move(fl.means);
  SplatGradients sg = render_backward(rendered, {}, fl.grad);

  const bool coupled = phase == Phase::Joint && schedule.mode == TrainingMode::Progressive;
  if (!coupled) {
    for (std::size_t i = 0; i < sg.size(); ++i)
      for (std::size_t k = 0; k < kFeatureDim; ++k) out.feature.features[splats.parent[i]][k] += sg.features[i][k];
    return out;
  }
  // Joint: geometry (centers -> positions and offset head, opacity head) may
  // move; color, scale and the embeddings stay out of reach.
  for (std::size_t i = 0; i < sg.size(); ++i) {
    sg.colors[i] = Vec3{};
    sg.scales[i] = 0.0;
  }
  decode_backward(model.anchors, model.decoder, sg, out.feature);
  std::fill(out.feature.embeddings.begin(), out.feature.embeddings.end(), 0.0);
  out.feature.decoder.head(Head::Color).fill(0.0);
  out.feature.decoder.head(Head::LogScale).fill(0.0);
  return out;
}

namespace detail {

inline bool group_trains(Group g, Phase phase, const Schedule& s, const AnchorSet& a) {
  const bool app = appearance_trains(phase, s);
  switch (g) {
    case Group::Position: return app && a.train_positions;
    case Group::Embedding: return app && a.train_embeddings;
    case Group::Feature: return phase != Phase::AppearanceOnly && a.train_features;
    case Group::Decoder: return app;
  }
  return false;
}

inline double group_lr(Group g, const Schedule& s, Phase phase) {
  const double scale = s.phase_lr_scale[static_cast<std::size_t>(phase)];
  switch (g) {
    case Group::Position: return s.lr.position * scale;
    case Group::Embedding: return s.lr.embedding * scale;
    case Group::Feature: return s.lr.feature * scale;
    case Group::Decoder: return s.lr.decoder * scale;
  }
  return 0.0;
}

inline void add_into(ModelGradients& dst, const ModelGradients& src) {
  auto add = [](auto& a, const auto& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  for (std::size_t k = 0; k < dst.positions.size(); ++k)
    for (int d = 0; d < 3; ++d) dst.positions[k][d] += src.positions[k][d];
  add(dst.embeddings, src.embeddings);
  for (std::size_t k = 0; k < dst.features.size(); ++k)
    for (std::size_t d = 0; d < kFeatureDim; ++d) dst.features[k][d] += src.features[k][d];
  for (std::size_t h = 0; h < kHeadCount; ++h) {
    add(dst.decoder.heads[h].w1, src.decoder.heads[h].w1);
    add(dst.decoder.heads[h].b1, src.decoder.heads[h].b1);
    add(dst.decoder.heads[h].w2, src.decoder.heads[h].w2);
    add(dst.decoder.heads[h].b2, src.decoder.heads[h].b2);
  }
}

inline std::string dump_report(const LossReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "step " << r.step << " phase " << phase_name(r.phase) << " view " << r.view << " l_rgb " << r.l_rgb
     << " l_smooth " << r.l_smooth << " l_contrast " << r.l_contrast << " degenerate_pairs " << r.degenerate_pairs;
  return os.str();
}

}  // namespace detail

// One optimisation step on one uniformly drawn view.
inline LossReport train_step(Model& model, std::span<const TrainingView> views, const Schedule& schedule,
                             TrainState& state) {
  require(!views.empty(), ErrorKind::Usage, "no training views");
  const Phase phase = phase_of_step(state.step, schedule);
  const std::size_t v = state.rng.index(views.size());
  StepGradients sg = compute_step_gradients(model, views[v], phase, schedule);
  sg.report.step = state.step;
  sg.report.view = v;
  const LossReport& r = sg.report;
  if (!std::isfinite(r.l_rgb) || !std::isfinite(r.l_smooth) || !std::isfinite(r.l_contrast))
    fail(ErrorKind::Numeric, "non-finite loss: " + detail::dump_report(r));

  detail::add_into(sg.appearance, sg.feature);
  std::size_t tensor = 0;
  std::size_t count = 0;
  for_each_tensor(model, sg.appearance, [&](Group, std::size_t, std::span<double>, std::span<const double>) { ++count; });
  if (state.moments.size() != count) state.moments.assign(count, AdamState{});
  for_each_tensor(model, sg.appearance, [&](Group g, std::size_t, std::span<double> p, std::span<const double> grad) {
    AdamState& st = state.moments[tensor++];
    if (!detail::group_trains(g, phase, schedule, model.anchors)) return;
    st.update(p, grad, detail::group_lr(g, schedule, phase));
  });
  ++state.step;
  state.log.push_back(sg.report);
  state.log.back().mask_means.clear();
  return sg.report;
}

using StepCallback = std::function<void(const LossReport&)>;

inline TrainState train_model(Model& model, std::span<const TrainingView> views, const Schedule& schedule,
                              const StepCallback& on_step = {}) {
  schedule.validate();
  TrainState state(schedule.seed);
  while (state.step < schedule.total_steps) {
    const LossReport r = train_step(model, views, schedule, state);
    if (on_step) on_step(r);
  }
  return state;
}

}  // namespace igs
