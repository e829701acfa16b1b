#pragma once

// Anchor-based splat representation: each anchor carries a position, an
// appearance embedding and an instance feature, and decodes into a fixed group
// of child splats. Children differ in appearance but share the parent feature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "igs/common.hpp"

namespace igs {

inline constexpr std::size_t kChildrenPerAnchor = 5;

struct AnchorSet {
  std::size_t embedding_dim = 16;
  std::vector<Vec3> positions;
  std::vector<double> embeddings;  // size() x embedding_dim, row-major
  std::vector<Feature> features;

  bool train_positions = true;
  bool train_embeddings = true;
  bool train_features = true;

  std::size_t size() const { return positions.size(); }
  std::span<const double> embedding(std::size_t k) const {
    return {embeddings.data() + k * embedding_dim, embedding_dim};
  }
};

// Two-layer affine network, max(0, .) between the layers.
struct MlpHead {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  std::vector<double> w1;  // hidden x in
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // out x hidden
  std::vector<double> b2;  // out

  MlpHead() = default;
  MlpHead(std::size_t in_, std::size_t hidden_, std::size_t out_)
      : in(in_), hidden(hidden_), out(out_), w1(hidden_ * in_), b1(hidden_), w2(out_ * hidden_), b2(out_) {}

  void fill(double v) {
    std::fill(w1.begin(), w1.end(), v);
    std::fill(b1.begin(), b1.end(), v);
    std::fill(w2.begin(), w2.end(), v);
    std::fill(b2.begin(), b2.end(), v);
  }

  // Writes hidden pre-activations and outputs for one input row.
  void forward(std::span<const double> x, std::span<double> pre, std::span<double> y) const {
    for (std::size_t h = 0; h < hidden; ++h) {
      double acc = b1[h];
      const double* w = w1.data() + h * in;
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
      pre[h] = acc;
    }
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b2[o];
      const double* w = w2.data() + o * hidden;
      for (std::size_t h = 0; h < hidden; ++h) acc += w[h] * std::max(0.0, pre[h]);
      y[o] = acc;
    }
  }

  // Accumulates parameter gradients into `grad` and the input gradient into gx.
  void backward(std::span<const double> x, std::span<const double> pre, std::span<const double> gy,
                MlpHead& grad, std::span<double> gx) const {
    std::vector<double> gpre(hidden, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gy[o];
      if (g == 0.0) continue;
      grad.b2[o] += g;
      double* gw = grad.w2.data() + o * hidden;
      const double* w = w2.data() + o * hidden;
      for (std::size_t h = 0; h < hidden; ++h) {
        gw[h] += g * std::max(0.0, pre[h]);
        gpre[h] += g * w[h];
      }
    }
    for (std::size_t h = 0; h < hidden; ++h) {
      if (pre[h] <= 0.0 || gpre[h] == 0.0) continue;
      const double g = gpre[h];
      grad.b1[h] += g;
      double* gw = grad.w1.data() + h * in;
      const double* w = w1.data() + h * in;
      for (std::size_t i = 0; i < in; ++i) {
        gw[i] += g * x[i];
        if (!gx.empty()) gx[i] += g * w[i];
      }
    }
  }
};

enum class Head : std::size_t { Offset = 0, Color = 1, Opacity = 2, LogScale = 3 };
inline constexpr std::size_t kHeadCount = 4;

struct DecoderParams {
  std::size_t embedding_dim = 16;
  std::size_t hidden_width = 16;
  double offset_range = 0.1;  // rho: |offset component| <= rho
  double base_scale = 0.05;   // s0
  std::array<MlpHead, kHeadCount> heads;

  MlpHead& head(Head h) { return heads[static_cast<std::size_t>(h)]; }
  const MlpHead& head(Head h) const { return heads[static_cast<std::size_t>(h)]; }

  static constexpr std::array<std::size_t, kHeadCount> output_sizes() {
    return {3 * kChildrenPerAnchor, 3 * kChildrenPerAnchor, kChildrenPerAnchor, kChildrenPerAnchor};
  }

  static DecoderParams zeros(std::size_t embedding_dim, std::size_t hidden_width, double rho, double s0) {
    DecoderParams d;
    d.embedding_dim = embedding_dim;
    d.hidden_width = hidden_width;
    d.offset_range = rho;
    d.base_scale = s0;
    const auto outs = output_sizes();
    for (std::size_t h = 0; h < kHeadCount; ++h) d.heads[h] = MlpHead(embedding_dim, hidden_width, outs[h]);
    return d;
  }

  DecoderParams zeros_like() const { return zeros(embedding_dim, hidden_width, offset_range, base_scale); }
};

struct Model {
  AnchorSet anchors;
  DecoderParams decoder;
};

struct SplatSet {
  std::vector<Vec3> centers;
  std::vector<Vec3> colors;
  std::vector<double> opacities;
  std::vector<double> scales;
  std::vector<Feature> features;
  std::vector<std::uint32_t> parent;

  std::size_t size() const { return centers.size(); }
};

struct SplatGradients {
  std::vector<Vec3> centers;
  std::vector<Vec3> colors;
  std::vector<double> opacities;
  std::vector<double> scales;
  std::vector<Feature> features;

  explicit SplatGradients(std::size_t n = 0)
      : centers(n, Vec3{}), colors(n, Vec3{}), opacities(n, 0.0), scales(n, 0.0), features(n, Feature{}) {}
  std::size_t size() const { return centers.size(); }
};

struct ModelGradients {
  std::vector<Vec3> positions;
  std::vector<double> embeddings;
  std::vector<Feature> features;
  DecoderParams decoder;

  ModelGradients() = default;
  ModelGradients(const AnchorSet& anchors, const DecoderParams& dec)
      : positions(anchors.size(), Vec3{}),
        embeddings(anchors.embeddings.size(), 0.0),
        features(anchors.size(), Feature{}),
        decoder(dec.zeros_like()) {}
};

struct ModelConfig {
  std::size_t embedding_dim = 16;
  std::size_t hidden_width = 16;
  double offset_range = 0.0;  // <= 0: 2 x median nearest-neighbour distance
  double base_scale = 0.0;    // <= 0: median nearest-neighbour distance
  // Features start in 0.5 +- feature_init_halfwidth per dimension. Per-anchor
  // differences that the rendered image cannot see survive training, so the
  // start is kept tight.
  double feature_init_halfwidth = 0.05;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Median over points of the distance to the nearest other point. Sweep over
// points sorted by x, pruning once the x-gap exceeds the best distance.
inline double median_nearest_neighbor_distance(std::span<const Vec3> pts) {
  if (pts.size() < 2) return 1.0;
  std::vector<std::size_t> order(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pts[a][0] < pts[b][0] || (pts[a][0] == pts[b][0] && a < b);
  });
  std::vector<double> nn(pts.size(), std::numeric_limits<double>::infinity());
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const Vec3& p = pts[order[oi]];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const Vec3& q = pts[order[oj]];
      const double dx = q[0] - p[0];
      if (dx * dx > best) break;
      best = std::min(best, dot(q - p, q - p));
    }
    for (std::size_t oj = oi; oj-- > 0;) {
      const Vec3& q = pts[order[oj]];
      const double dx = p[0] - q[0];
      if (dx * dx > best) break;
      best = std::min(best, dot(q - p, q - p));
    }
    nn[order[oi]] = std::sqrt(best);
  }
  std::vector<double> sorted = nn;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double med = sorted[sorted.size() / 2];
  return med > 0 ? med : 1.0;
}

// One anchor per seed point. Embeddings ~ U[-0.05, 0.05].
inline AnchorSet init_anchors(std::span<const Vec3> seed_points, const ModelConfig& config, std::uint64_t rng_seed) {
  require(!seed_points.empty(), ErrorKind::Data, "empty point cloud");
  require(config.embedding_dim > 0, ErrorKind::Config, "model.embedding_dim must be positive");
  AnchorSet a;
  a.embedding_dim = config.embedding_dim;
  a.positions.assign(seed_points.begin(), seed_points.end());
  for (const Vec3& p : a.positions)
    require(std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]), ErrorKind::Data,
            "non-finite seed point");
  Rng rng(rng_seed);
  a.embeddings.resize(a.size() * a.embedding_dim);
  for (double& e : a.embeddings) e = rng.uniform(-0.05, 0.05);
  a.features.resize(a.size());
  require(config.feature_init_halfwidth >= 0, ErrorKind::Config, "model.feature_init_halfwidth must be >= 0");
  for (Feature& f : a.features)
    for (double& v : f) v = rng.uniform(0.5 - config.feature_init_halfwidth, 0.5 + config.feature_init_halfwidth);
  return a;
}

inline DecoderParams init_decoder(std::span<const Vec3> seed_points, const ModelConfig& config,
                                  std::uint64_t rng_seed) {
  const double med = median_nearest_neighbor_distance(seed_points);
  const double rho = config.offset_range > 0 ? config.offset_range : 2.0 * med;
  const double s0 = config.base_scale > 0 ? config.base_scale : med;
  DecoderParams d = DecoderParams::zeros(config.embedding_dim, config.hidden_width, rho, s0);
  Rng rng(rng_seed ^ 0xD1B54A32D192ED03ull);
  for (MlpHead& h : d.heads) {
    const double a1 = std::sqrt(6.0 / static_cast<double>(h.in + h.hidden));
    const double a2 = std::sqrt(6.0 / static_cast<double>(h.hidden + h.out));
    for (double& w : h.w1) w = rng.uniform(-a1, a1);
    for (double& b : h.b1) b = rng.uniform(0.0, 0.1);
    for (double& w : h.w2) w = rng.uniform(-a2, a2);
  }
  return d;
}

namespace detail {

inline void check_decoder(const AnchorSet& anchors, const DecoderParams& decoder) {
  require(decoder.embedding_dim == anchors.embedding_dim, ErrorKind::Config,
          "decoder input dimension does not match anchor embedding dimension");
  const auto outs = DecoderParams::output_sizes();
  for (std::size_t h = 0; h < kHeadCount; ++h) {
    const MlpHead& m = decoder.heads[h];
    require(m.in == decoder.embedding_dim && m.hidden == decoder.hidden_width && m.out == outs[h] &&
                m.w1.size() == m.hidden * m.in && m.w2.size() == m.out * m.hidden && m.b1.size() == m.hidden &&
                m.b2.size() == m.out,
            ErrorKind::Config, "decoder head has inconsistent dimensions");
  }
  require(anchors.embeddings.size() == anchors.size() * anchors.embedding_dim, ErrorKind::Config,
          "anchor embedding array has wrong size");
}

}  // namespace detail

// Decodes every anchor into kChildrenPerAnchor splats. Child i of anchor k has
// index k * kChildrenPerAnchor + i.
inline SplatSet decode_gaussians(const AnchorSet& anchors, const DecoderParams& decoder) {
  detail::check_decoder(anchors, decoder);
  const std::size_t n = anchors.size() * kChildrenPerAnchor;
  SplatSet s;
  s.centers.resize(n);
  s.colors.resize(n);
  s.opacities.resize(n);
  s.scales.resize(n);
  s.features.resize(n);
  s.parent.resize(n);

  std::vector<double> pre(decoder.hidden_width);
  std::array<std::vector<double>, kHeadCount> out;
  const auto outs = DecoderParams::output_sizes();
  for (std::size_t h = 0; h < kHeadCount; ++h) out[h].resize(outs[h]);

  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const auto e = anchors.embedding(k);
    for (std::size_t h = 0; h < kHeadCount; ++h) decoder.heads[h].forward(e, pre, out[h]);
    for (std::size_t c = 0; c < kChildrenPerAnchor; ++c) {
      const std::size_t i = k * kChildrenPerAnchor + c;
      for (int d = 0; d < 3; ++d) {
        s.centers[i][d] = anchors.positions[k][d] + decoder.offset_range * std::tanh(out[0][3 * c + d]);
        s.colors[i][d] = sigmoid(out[1][3 * c + d]);
      }
      s.opacities[i] = sigmoid(out[2][c]);
      s.scales[i] = decoder.base_scale * std::exp(out[3][c]);
      s.features[i] = anchors.features[k];
      s.parent[i] = static_cast<std::uint32_t>(k);
    }
  }
  return s;
}

// Chain rule from splat-attribute gradients back to anchors and decoder
// weights. Gradients are accumulated into `out`; feature gradients of the
// children are summed into their parent.
inline void decode_backward(const AnchorSet& anchors, const DecoderParams& decoder, const SplatGradients& g,
                            ModelGradients& out) {
  detail::check_decoder(anchors, decoder);
  require(g.size() == anchors.size() * kChildrenPerAnchor, ErrorKind::Usage, "splat gradient size mismatch");
  const std::size_t H = decoder.hidden_width;
  const auto outs = DecoderParams::output_sizes();
  std::array<std::vector<double>, kHeadCount> pre, y, gy;
  for (std::size_t h = 0; h < kHeadCount; ++h) {
    pre[h].resize(H);
    y[h].resize(outs[h]);
    gy[h].resize(outs[h]);
  }

  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const auto e = anchors.embedding(k);
    for (std::size_t h = 0; h < kHeadCount; ++h) decoder.heads[h].forward(e, pre[h], y[h]);
    bool any = false;
    for (std::size_t c = 0; c < kChildrenPerAnchor; ++c) {
      const std::size_t i = k * kChildrenPerAnchor + c;
      for (int d = 0; d < 3; ++d) {
        const double gc = g.centers[i][d];
        out.positions[k][d] += gc;
        const double th = std::tanh(y[0][3 * c + d]);
        gy[0][3 * c + d] = gc * decoder.offset_range * (1.0 - th * th);
        const double col = sigmoid(y[1][3 * c + d]);
        gy[1][3 * c + d] = g.colors[i][d] * col * (1.0 - col);
      }
      const double op = sigmoid(y[2][c]);
      gy[2][c] = g.opacities[i] * op * (1.0 - op);
      gy[3][c] = g.scales[i] * decoder.base_scale * std::exp(y[3][c]);
      for (std::size_t j = 0; j < kFeatureDim; ++j) out.features[k][j] += g.features[i][j];
    }
    for (std::size_t h = 0; h < kHeadCount && !any; ++h)
      for (double v : gy[h])
        if (v != 0.0) {
          any = true;
          break;
        }
    if (!any) continue;
    std::span<double> ge(out.embeddings.data() + k * anchors.embedding_dim, anchors.embedding_dim);
    for (std::size_t h = 0; h < kHeadCount; ++h) decoder.heads[h].backward(e, pre[h], gy[h], out.decoder.heads[h], ge);
  }
}

}  // namespace igs
