#include <gtest/gtest.h>

#include "igs/gradcheck.hpp"
#include "igs/scene_model.hpp"

using namespace igs;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return pts;
}

}  // namespace

TEST(InitAnchors, DeterministicForSeed) {
  const auto pts = random_points(100, 3);
  const AnchorSet a = init_anchors(pts, {}, 7), b = init_anchors(pts, {}, 7);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.features, b.features);
}

TEST(InitAnchors, SeedChangesEmbeddings) {
  const auto pts = random_points(100, 3);
  EXPECT_NE(init_anchors(pts, {}, 7).embeddings, init_anchors(pts, {}, 8).embeddings);
}

TEST(InitAnchors, SinglePoint) {
  const std::vector<Vec3> pts{{0.1, 0.2, 0.3}};
  const AnchorSet a = init_anchors(pts, {}, 1);
  EXPECT_EQ(a.size(), 1u);
  EXPECT_EQ(a.features[0].size(), 6u);
  EXPECT_EQ(a.embeddings.size(), a.embedding_dim);
}

TEST(InitAnchors, FeaturesStartNearOneHalf) {
  ModelConfig cfg;
  cfg.feature_init_halfwidth = 0.05;
  for (const Feature& f : init_anchors(random_points(200, 5), cfg, 2).features)
    for (double v : f) {
      EXPECT_GE(v, 0.45);
      EXPECT_LE(v, 0.55);
    }
}

TEST(InitAnchors, EmptyCloudIsDataError) {
  try {
    init_anchors(std::vector<Vec3>{}, {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("empty point cloud"), std::string::npos);
  }
}

TEST(MedianNearestNeighbor, RegularGrid) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) pts.push_back({0.2 * i, 0.2 * j, 0.0});
  EXPECT_NEAR(median_nearest_neighbor_distance(pts), 0.2, 1e-12);
}

TEST(Decode, FiveChildrenPerAnchor) {
  const auto pts = random_points(200, 1);
  const AnchorSet a = init_anchors(pts, {}, 1);
  const SplatSet s = decode_gaussians(a, init_decoder(pts, {}, 1));
  ASSERT_EQ(s.size(), 1000u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s.parent[i], i / 5);
    EXPECT_EQ(s.features[i], a.features[i / 5]);
  }
}

TEST(Decode, ZeroNetworkPlacesChildrenAtAnchor) {
  const auto pts = random_points(10, 2);
  const AnchorSet a = init_anchors(pts, {}, 1);
  const DecoderParams d = DecoderParams::zeros(a.embedding_dim, 16, 0.1, 0.05);
  const SplatSet s = decode_gaussians(a, d);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s.centers[i], pts[i / 5]);
    EXPECT_EQ(s.opacities[i], 0.5);
    EXPECT_EQ(s.colors[i], (Vec3{0.5, 0.5, 0.5}));
    EXPECT_EQ(s.scales[i], 0.05);
  }
}

TEST(Decode, OffsetsBoundedByRange) {
  const auto pts = random_points(50, 4);
  ModelConfig cfg;
  cfg.offset_range = 0.03;
  const AnchorSet a = init_anchors(pts, cfg, 1);
  DecoderParams d = init_decoder(pts, cfg, 1);
  for (double& w : d.head(Head::Offset).w2) w *= 50.0;
  const SplatSet s = decode_gaussians(a, d);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(s.centers[i][k] - pts[i / 5][k]), 0.03 + 1e-15);
}

TEST(Decode, DimensionMismatchIsConfigError) {
  const auto pts = random_points(5, 1);
  const AnchorSet a = init_anchors(pts, {}, 1);
  const DecoderParams d = DecoderParams::zeros(a.embedding_dim + 1, 16, 0.1, 0.05);
  try {
    decode_gaussians(a, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(DecodeBackward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GradCheckReport r = check_decode_gradients(seed);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst;
  }
}

// Directional derivative of all decoded outputs along one embedding
// coordinate, against the chain-rule result.
TEST(DecodeBackward, JacobianVectorProductForOneEmbedding) {
  const auto pts = random_points(4, 8);
  ModelConfig cfg;
  cfg.embedding_dim = 6;
  cfg.hidden_width = 8;
  AnchorSet a = init_anchors(pts, cfg, 3);
  for (double& e : a.embeddings) e *= 20.0;
  const DecoderParams d = init_decoder(pts, cfg, 3);
  Rng rng(11);
  SplatGradients w(a.size() * 5);
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      w.centers[i][k] = rng.uniform(-1, 1);
      w.colors[i][k] = rng.uniform(-1, 1);
    }
    w.opacities[i] = rng.uniform(-1, 1);
    w.scales[i] = rng.uniform(-1, 1);
  }
  auto objective = [&]() {
    const SplatSet s = decode_gaussians(a, d);
    double acc = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (int k = 0; k < 3; ++k) acc += w.centers[i][k] * s.centers[i][k] + w.colors[i][k] * s.colors[i][k];
      acc += w.opacities[i] * s.opacities[i] + w.scales[i] * s.scales[i];
    }
    return acc;
  };
  ModelGradients g(a, d);
  decode_backward(a, d, w, g);
  const std::size_t idx = 2 * a.embedding_dim + 1;
  const double h = 1e-5;  // small enough not to cross a ReLU kink at these activations
  const double keep = a.embeddings[idx];
  a.embeddings[idx] = keep + h;
  const double up = objective();
  a.embeddings[idx] = keep - h;
  const double down = objective();
  a.embeddings[idx] = keep;
  const double numeric = (up - down) / (2 * h);
  EXPECT_LE(relative_error(g.embeddings[idx], numeric), 1e-3) << g.embeddings[idx] << " vs " << numeric;
}
