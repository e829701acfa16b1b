#include <gtest/gtest.h>

#include "igs/instantiation.hpp"
#include "oracles.hpp"

using namespace igs;

namespace {

Matrix line_points(std::initializer_list<double> xs) {
  Matrix X(xs.size(), 1);
  std::size_t i = 0;
  for (double x : xs) X(i++, 0) = x;
  return X;
}

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix X(n, d);
  for (double& v : X.data) v = rng.uniform(-1, 1);
  return X;
}

// `clusters` groups of points; positions live on the clusters' own voxels.
ClusterState clusters_with_features(const std::vector<Feature>& f) {
  ClusterState st;
  st.cluster_count = f.size();
  st.features = Matrix::from_rows<kFeatureDim>(f);
  st.tombstone.assign(f.size(), 0);
  st.sizes.assign(f.size(), 1);
  st.centers.assign(f.size(), Vec3{});
  return st;
}

// Three tight, far-apart blobs with distinct features.
struct Blobs {
  std::vector<Vec3> positions;
  Matrix features;
  std::vector<std::uint32_t> gt;
};

Blobs three_blobs(std::size_t per_blob, std::uint64_t seed) {
  Rng rng(seed);
  const Vec3 centers[3] = {{0, 0, 0}, {3, 0, 0}, {0, 3, 0}};
  Blobs b;
  std::vector<Feature> feats;
  for (std::uint32_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < per_blob; ++i) {
      b.positions.push_back(centers[k] + Vec3{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)});
      Feature f{};
      f[k] = 1.0;
      for (double& v : f) v += rng.uniform(-0.005, 0.005);
      feats.push_back(f);
      b.gt.push_back(k);
    }
  b.features = Matrix::from_rows<kFeatureDim>(feats);
  return b;
}

}  // namespace

TEST(Fps, WorkedExample) {
  EXPECT_EQ(farthest_point_sample(line_points({0, 1, 2, 10}), 3, 0), (std::vector<std::uint32_t>{0, 3, 2}));
}

TEST(Fps, FullSampleReturnsEveryIndex) {
  Rng rng(1);
  const Matrix X = random_matrix(rng, 30, 4);
  auto idx = farthest_point_sample(X, 30, 17);
  EXPECT_EQ(idx.front(), 17u);
  std::sort(idx.begin(), idx.end());
  for (std::uint32_t i = 0; i < 30; ++i) EXPECT_EQ(idx[i], i);
}

TEST(Fps, TooManySamplesIsUsageError) {
  try {
    farthest_point_sample(line_points({0, 1}), 3, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Usage);
  }
}

TEST(Fps, TiesGoToSmallestIndex) {
  // 1 and 3 are both at distance 1 from 2
  EXPECT_EQ(farthest_point_sample(line_points({2, 1, 3}), 2, 0), (std::vector<std::uint32_t>{0, 1}));
}

TEST(Fps, MatchesBruteForce) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix X = random_matrix(rng, 10 + rng.index(200), 1 + rng.index(8));
    const std::size_t s = 1 + rng.index(std::min<std::size_t>(30, X.rows));
    const std::size_t start = rng.index(X.rows);
    EXPECT_EQ(farthest_point_sample(X, s, start), oracle::farthest_point_sample(X, s, start));
  }
}

TEST(PositionalEncoding, ZeroInput) {
  std::array<double, kPeDim> pe{};
  positional_encoding({0, 0, 0}, pe);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(pe[i], 0.0);
  for (std::size_t l = 0; l < kPeBands; ++l)
    for (int d = 0; d < 3; ++d) {
      EXPECT_EQ(pe[3 + 6 * l + d], 0.0);
      EXPECT_EQ(pe[3 + 6 * l + 3 + d], 1.0);
    }
}

TEST(ClusterSpace, CenterPointEncodesToOrigin) {
  const std::vector<Vec3> pos{{-1, -1, -1}, {1, 1, 1}, {0, 0, 0}};
  const Matrix X = build_cluster_space(pos, Matrix(3, kFeatureDim), 1.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(X(2, k), 0.0);
  EXPECT_EQ(X(2, 3 + 3), 1.0);
}

TEST(ClusterSpace, ZeroLambdaIsPositionBlind) {
  Rng rng(3);
  std::vector<Vec3> pos(20);
  for (Vec3& p : pos) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  const Matrix F = random_matrix(rng, 20, kFeatureDim);
  const Matrix X = build_cluster_space(pos, F, 0.0);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t k = 0; k < kPeDim; ++k) EXPECT_EQ(X(i, k), 0.0);
    for (std::size_t k = 0; k < kFeatureDim; ++k) EXPECT_EQ(X(i, kPeDim + k), F(i, k));
  }
}

TEST(ClusterSpace, MatchesIndependentEncoding) {
  Rng rng(4);
  std::vector<Vec3> pos(50);
  for (Vec3& p : pos) p = {rng.uniform(-2, 5), rng.uniform(0, 1), rng.uniform(-1, 1)};
  const Matrix F = random_matrix(rng, 50, kFeatureDim);
  const double lam = 0.5;
  const Matrix X = build_cluster_space(pos, F, lam);
  Vec3 lo = pos[0], hi = pos[0];
  for (const Vec3& p : pos)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  for (std::size_t i = 0; i < pos.size(); ++i) {
    Vec3 u;
    for (int d = 0; d < 3; ++d) u[d] = (pos[i][d] - 0.5 * (lo[d] + hi[d])) / extent;
    const auto pe = oracle::positional_encoding(u);
    for (std::size_t k = 0; k < kPeDim; ++k) EXPECT_NEAR(X(i, k), lam * pe[k], 1e-6);
    for (std::size_t k = 0; k < kFeatureDim; ++k) EXPECT_EQ(X(i, kPeDim + k), F(i, k));
  }
}

TEST(ClusterSpace, NonFiniteIsDataError) {
  std::vector<Vec3> pos{{0, 0, 0}, {std::nan(""), 0, 0}};
  try {
    build_cluster_space(pos, Matrix(2, kFeatureDim));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
}

TEST(KMeans, EveryPointItsOwnCluster) {
  Rng rng(5);
  const Matrix X = random_matrix(rng, 25, 3);
  std::vector<std::uint32_t> init(25);
  for (std::uint32_t i = 0; i < 25; ++i) init[i] = i;
  const ClusterState st = kmeans_cluster(X, init);
  EXPECT_EQ(st.objective, 0.0);
  EXPECT_TRUE(st.converged);
  EXPECT_EQ(st.iterations, 1u);
  for (std::uint32_t i = 0; i < 25; ++i) EXPECT_EQ(st.labels[i], i);
}

TEST(KMeans, SeparatesTwoBlobs) {
  Rng rng(6);
  Matrix X(40, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    X(i, 0) = (i < 20 ? 0.0 : 100.0) + rng.uniform(-1, 1);
    X(i, 1) = rng.uniform(-1, 1);
  }
  const ClusterState st = kmeans_cluster(X, farthest_point_sample(X, 2, 0));
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(st.labels[i] == st.labels[0], i < 20);
}

TEST(KMeans, ObjectiveNeverIncreasesAndMatchesRecomputation) {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const Matrix X = random_matrix(rng, 200, 5);
    const ClusterState st = kmeans_cluster(X, farthest_point_sample(X, 12, rng.index(200)), {100, 0.0});
    for (std::size_t i = 1; i < st.objective_history.size(); ++i)
      EXPECT_LE(st.objective_history[i], st.objective_history[i - 1]);
    EXPECT_GE(oracle::kmeans_objective(X, st.labels, st.centers_x), 0.0);
    EXPECT_LE(oracle::kmeans_objective(X, st.labels, st.centers_x), st.objective + 1e-9);
  }
}

TEST(KMeans, DuplicateInitIsUsageError) {
  const std::vector<std::uint32_t> init{0, 0};
  EXPECT_THROW(kmeans_cluster(line_points({0, 1, 2}), init), Error);
}

TEST(ClusterStatistics, MeansOfMembers) {
  const std::vector<Vec3> pos{{0, 0, 0}, {2, 0, 0}, {5, 5, 5}};
  Matrix F(3, 2);
  F(0, 0) = 1;
  F(1, 0) = 3;
  F(2, 1) = 7;
  ClusterState st;
  st.cluster_count = 3;
  st.labels = {0, 0, 2};
  st.sizes.assign(3, 0);
  st.tombstone.assign(3, 0);
  attach_cluster_statistics(st, pos, F);
  EXPECT_EQ(st.centers[0], (Vec3{1, 0, 0}));
  EXPECT_EQ(st.features(0, 0), 2.0);
  EXPECT_EQ(st.features(2, 1), 7.0);
  EXPECT_TRUE(st.tombstone[1]);
  EXPECT_EQ(st.sizes[0], 2u);
}

TEST(Voxels, SameAndNeighbouringCells) {
  EXPECT_EQ(voxel_of({0.01, 0, 0}, 0.1), (VoxelKey{0, 0, 0}));
  EXPECT_EQ(voxel_of({0.04, 0, 0}, 0.1), (VoxelKey{0, 0, 0}));
  EXPECT_EQ(voxel_of({0.11, 0, 0}, 0.1), (VoxelKey{1, 0, 0}));
  EXPECT_EQ(voxel_of({-0.01, 0, 0}, 0.1), (VoxelKey{-1, 0, 0}));

  const std::vector<Vec3> pos{{0.09, 0, 0}, {0.11, 0, 0}};
  const std::vector<std::uint32_t> labels{0, 1};
  const auto vox = voxelize_subobjects(pos, labels, 2, 0.1);
  const ConnectivityGraph g = build_connectivity_graph(clusters_with_features({Feature{}, Feature{}}), vox, 0.1, 0.1);
  EXPECT_TRUE(g.adjacent(0, 1));
}

TEST(Voxels, NonPositiveSizeIsUsageError) {
  const std::vector<Vec3> pos{{0, 0, 0}};
  const std::vector<std::uint32_t> labels{0};
  EXPECT_THROW(voxelize_subobjects(pos, labels, 1, 0.0), Error);
}

TEST(Graph, DistantClustersGetNoEdge) {
  const std::vector<Vec3> pos{{0, 0, 0}, {1, 0, 0}};
  const std::vector<std::uint32_t> labels{0, 1};
  const auto vox = voxelize_subobjects(pos, labels, 2, 0.1);
  const ConnectivityGraph g = build_connectivity_graph(clusters_with_features({Feature{}, Feature{}}), vox, 0.1, 0.1);
  EXPECT_TRUE(g.edges.empty());
  EXPECT_EQ(g.weight(0, 1), 0.0);
}

TEST(Graph, AdjacentWeightIsFeatureDistance) {
  const std::vector<Vec3> pos{{0, 0, 0}, {0.15, 0, 0}};
  const std::vector<std::uint32_t> labels{0, 1};
  Feature b{};
  b[3] = 0.05;
  const auto vox = voxelize_subobjects(pos, labels, 2, 0.1);
  const ConnectivityGraph g = build_connectivity_graph(clusters_with_features({Feature{}, b}), vox, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(g.weight(0, 1), 0.05);
  EXPECT_EQ(g.weight(1, 0), g.weight(0, 1));
  EXPECT_EQ(g.weight(0, 0), 0.0);
}

TEST(Graph, AllModeConnectsEveryLivePair) {
  ClusterState st = clusters_with_features({Feature{}, Feature{}, Feature{}});
  st.tombstone[1] = 1;
  const ConnectivityGraph g = build_connectivity_graph(st, {}, 0.1, 0.0, Adjacency::All);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_TRUE(g.adjacent(0, 2));
}

TEST(Components, NoEdgesKeepsNonEmptyClusters) {
  ConnectivityGraph g;
  g.node_count = 4;
  const std::vector<std::uint32_t> labels{0, 0, 1, 3};  // cluster 2 is empty
  const InstanceResult r = aggregate_components(g, 0.1, labels, Matrix(4, 1));
  EXPECT_EQ(r.instance_count, 3u);
  EXPECT_EQ(r.labels[0], 0u);  // largest component first
  EXPECT_EQ(r.cluster_to_instance[2], kNoLabel);
}

TEST(Components, ChainExample) {
  ConnectivityGraph g;
  g.node_count = 3;
  g.edges = {{0, 1, 0.05}, {1, 2, 0.5}};
  const std::vector<std::uint32_t> labels{0, 1, 2};
  const InstanceResult r = aggregate_components(g, 0.1, labels, Matrix(3, 1));
  EXPECT_EQ(r.instance_count, 2u);
  EXPECT_EQ(r.labels[0], r.labels[1]);
  EXPECT_NE(r.labels[1], r.labels[2]);
}

TEST(Components, ZeroDistanceMerges) {
  ConnectivityGraph g;
  g.node_count = 2;
  g.edges = {{0, 1, 0.0}};
  const std::vector<std::uint32_t> labels{0, 1};
  EXPECT_EQ(aggregate_components(g, 0.1, labels, Matrix(2, 1)).instance_count, 1u);
}

TEST(Components, InstanceFeatureIsMemberMean) {
  ConnectivityGraph g;
  g.node_count = 2;
  g.edges = {{0, 1, 0.01}};
  const std::vector<std::uint32_t> labels{0, 1, 1};
  Matrix F(3, 1);
  F(0, 0) = 1;
  F(1, 0) = 2;
  F(2, 0) = 6;
  const InstanceResult r = aggregate_components(g, 0.1, labels, F);
  EXPECT_EQ(r.features(0, 0), 3.0);
  EXPECT_EQ(r.sizes[0], 3u);
}

TEST(Components, MatchesDfsAndRefinesWithGamma) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    ConnectivityGraph g;
    g.node_count = 1 + rng.index(40);
    for (std::uint32_t i = 0; i < g.node_count; ++i)
      for (std::uint32_t j = i + 1; j < g.node_count; ++j)
        if (rng.uniform() < 0.15) g.edges.push_back({i, j, rng.uniform()});
    std::vector<std::uint32_t> labels(g.node_count);
    for (std::uint32_t i = 0; i < labels.size(); ++i) labels[i] = i;
    const Matrix F(g.node_count, 1);
    std::vector<std::uint32_t> prev;
    for (double gamma : {0.1, 0.3, 0.6, 1.0}) {
      const auto got = aggregate_components(g, gamma, labels, F).labels;
      EXPECT_EQ(oracle::canonical(got), oracle::canonical(oracle::components_dfs(g.node_count, g.edges, gamma)));
      if (!prev.empty()) {
        EXPECT_TRUE(oracle::refines(prev, got));
      }
      prev = got;
    }
  }
}

TEST(Instantiate, RecoversSeparatedBlobs) {
  const Blobs b = three_blobs(100, 9);
  InstantiateOptions o;
  o.samples = 30;
  const InstanceResult r = instantiate(b.positions, b.features, o);
  EXPECT_EQ(r.instance_count, 3u);
  EXPECT_EQ(oracle::canonical(r.labels), oracle::canonical(b.gt));
}

TEST(Instantiate, OneSamplePerObjectIsNoOp) {
  const Blobs b = three_blobs(50, 10);
  InstantiateOptions o;
  o.samples = 3;
  InstantiationTrace trace;
  const InstanceResult r = instantiate(b.positions, b.features, o, &trace);
  EXPECT_EQ(r.instance_count, 3u);
  EXPECT_EQ(oracle::canonical(r.labels), oracle::canonical(trace.clusters.labels));
}

TEST(Instantiate, StableAcrossSamplingSeeds) {
  const Blobs b = three_blobs(80, 11);
  InstantiateOptions o;
  o.samples = 40;
  const auto ref = oracle::canonical(instantiate(b.positions, b.features, o).labels);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    o.seed = seed;
    EXPECT_EQ(oracle::canonical(instantiate(b.positions, b.features, o).labels), ref);
  }
}

TEST(Instantiate, RejectsBadOptions) {
  const Blobs b = three_blobs(5, 12);
  InstantiateOptions o;
  o.samples = 1000;
  EXPECT_THROW(instantiate(b.positions, b.features, o), Error);
  o.samples = 3;
  o.gamma = 0;
  EXPECT_THROW(instantiate(b.positions, b.features, o), Error);
}
