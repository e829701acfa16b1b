#pragma once

// Bottom-up, category-agnostic instantiation:
//   1. farthest point sampling of s seeds in the clustering space
//      X = [lambda_pos * PE(normalised position); feature];
//   2. Lloyd k-means from those seeds (over-segmentation into sub-objects);
//   3. voxelisation of every sub-object at resolution r;
//   4. a sparse graph whose edges join voxel-adjacent sub-objects, weighted by
//      the L2 distance of their mean features;
//   5. union-find over edges with weight <= gamma, relabelled by size.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "igs/common.hpp"
#include "igs/parallel.hpp"
#include "igs/union_find.hpp"

namespace igs {

inline constexpr std::size_t kPeBands = 2;
inline constexpr std::size_t kPeDim = 3 + 3 * 2 * kPeBands;  // 15

inline constexpr std::size_t kDefaultSamples = 1000;
inline constexpr double kDefaultGamma = 0.1;
inline constexpr double kDefaultVoxelSize = 0.2;
inline constexpr double kDefaultLambdaPos = 0.5;

// Layout per band l: sin(2^l pi x) for the three axes, then cos(...).
inline void positional_encoding(const Vec3& p, std::span<double> out) {
  for (int d = 0; d < 3; ++d) out[d] = p[d];
  std::size_t o = 3;
  for (std::size_t l = 0; l < kPeBands; ++l) {
    const double freq = std::ldexp(std::numbers::pi, static_cast<int>(l));
    for (int d = 0; d < 3; ++d) out[o++] = std::sin(freq * p[d]);
    for (int d = 0; d < 3; ++d) out[o++] = std::cos(freq * p[d]);
  }
}

// Positions are centred on the bounding box and divided by its largest side,
// so the scene fits in [-0.5, 0.5]^3. A degenerate box maps everything to 0.
inline Matrix build_cluster_space(std::span<const Vec3> positions, const Matrix& features,
                                  double lambda_pos = kDefaultLambdaPos) {
  require(features.rows == positions.size(), ErrorKind::Usage, "positions and features differ in length");
  require(all_finite(features.data), ErrorKind::Data, "non-finite feature");
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi = -1.0 * lo;
  for (const Vec3& p : positions) {
    require(std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]), ErrorKind::Data, "non-finite position");
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  }
  double extent = 0;
  for (int d = 0; d < 3 && !positions.empty(); ++d) extent = std::max(extent, hi[d] - lo[d]);
  const Vec3 center = 0.5 * (lo + hi);

  Matrix X(positions.size(), kPeDim + features.cols);
  std::array<double, kPeDim> pe{};
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3 nrm = extent > 0 ? (1.0 / extent) * (positions[i] - center) : Vec3{0, 0, 0};
    positional_encoding(nrm, pe);
    auto row = X.row(i);
    for (std::size_t k = 0; k < kPeDim; ++k) row[k] = lambda_pos * pe[k];
    const auto f = features.row(i);
    std::copy(f.begin(), f.end(), row.begin() + kPeDim);
  }
  return X;
}

// Greedy max-min selection starting from `start`; ties go to the smallest index.
inline std::vector<std::uint32_t> farthest_point_sample(const Matrix& X, std::size_t s, std::size_t start) {
  const std::size_t n = X.rows;
  require(s >= 1 && s <= n, ErrorKind::Usage, "farthest_point_sample: need 1 <= s <= n");
  require(start < n, ErrorKind::Usage, "farthest_point_sample: start index out of range");
  std::vector<std::uint32_t> picked;
  picked.reserve(s);
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  std::size_t cur = start;
  for (;;) {
    picked.push_back(static_cast<std::uint32_t>(cur));
    chosen[cur] = 1;
    if (picked.size() == s) break;
    const auto c = X.row(cur);
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      mind[i] = std::min(mind[i], squared_distance(X.row(i), c));
      if (mind[i] > best_d) {
        best_d = mind[i];
        best = i;
      }
    }
    cur = best;
  }
  return picked;
}

struct KMeansOptions {
  std::size_t max_iters = 50;
  double tol = 1e-5;
};

struct ClusterState {
  std::size_t cluster_count = 0;
  std::vector<std::uint32_t> labels;   // per point, in [0, cluster_count)
  Matrix centers_x;                    // cluster centres in X space
  Matrix features;                     // f-bar: mean member feature
  std::vector<Vec3> centers;           // mu-bar: mean member position
  std::vector<std::size_t> sizes;
  std::vector<char> tombstone;         // empty clusters
  std::vector<double> objective_history;  // one entry per assignment step
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Lloyd iterations. Assignment ties go to the lower cluster id; emptied
// clusters are tombstoned and never reseeded.
inline ClusterState kmeans_cluster(const Matrix& X, std::span<const std::uint32_t> init,
                                   const KMeansOptions& opt = {}) {
  const std::size_t n = X.rows, dim = X.cols, s = init.size();
  require(s >= 1, ErrorKind::Usage, "kmeans: need at least one initial centre");
  {
    std::vector<std::uint32_t> sorted(init.begin(), init.end());
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end() && sorted.back() < n, ErrorKind::Usage,
            "kmeans: initial indices must be distinct and in range");
  }
  ClusterState st;
  st.cluster_count = s;
  st.centers_x = Matrix(s, dim);
  for (std::size_t k = 0; k < s; ++k) {
    const auto src = X.row(init[k]);
    std::copy(src.begin(), src.end(), st.centers_x.row(k).begin());
  }
  st.labels.assign(n, 0);
  st.tombstone.assign(s, 0);
  st.sizes.assign(s, 0);
  std::vector<double> dist(n, 0.0);

  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    parallel_for(0, n, [&](std::size_t i) {
      const auto x = X.row(i);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t k = 0; k < s; ++k) {
        if (st.tombstone[k]) continue;
        const double d = squared_distance(x, st.centers_x.row(k));
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(k);
        }
      }
      st.labels[i] = arg;
      dist[i] = best;
    });
    double J = 0.0;
    for (double d : dist) J += d;
    st.objective_history.push_back(J);
    st.objective = J;
    ++st.iterations;

    Matrix sums(s, dim);
    std::fill(st.sizes.begin(), st.sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto acc = sums.row(st.labels[i]);
      const auto x = X.row(i);
      for (std::size_t j = 0; j < dim; ++j) acc[j] += x[j];
      ++st.sizes[st.labels[i]];
    }
    double movement = 0.0;
    for (std::size_t k = 0; k < s; ++k) {
      if (st.sizes[k] == 0) {
        st.tombstone[k] = 1;
        continue;
      }
      auto c = st.centers_x.row(k);
      auto acc = sums.row(k);
      double mv = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double nv = acc[j] / static_cast<double>(st.sizes[k]);
        mv += (nv - c[j]) * (nv - c[j]);
        c[j] = nv;
      }
      movement = std::max(movement, std::sqrt(mv));
    }
    if (movement < opt.tol) {
      st.converged = true;
      break;
    }
  }
  return st;
}

// Fills f-bar and mu-bar (member means) from the raw point attributes.
inline void attach_cluster_statistics(ClusterState& st, std::span<const Vec3> positions, const Matrix& features) {
  const std::size_t s = st.cluster_count;
  st.features = Matrix(s, features.cols);
  st.centers.assign(s, Vec3{});
  std::vector<std::size_t> count(s, 0);
  for (std::size_t i = 0; i < st.labels.size(); ++i) {
    const std::uint32_t k = st.labels[i];
    ++count[k];
    for (int d = 0; d < 3; ++d) st.centers[k][d] += positions[i][d];
    const auto f = features.row(i);
    auto acc = st.features.row(k);
    for (std::size_t j = 0; j < f.size(); ++j) acc[j] += f[j];
  }
  for (std::size_t k = 0; k < s; ++k) {
    st.sizes[k] = count[k];
    st.tombstone[k] = count[k] == 0;
    if (count[k] == 0) continue;
    const double inv = 1.0 / static_cast<double>(count[k]);
    st.centers[k] = inv * st.centers[k];
    for (double& v : st.features.row(k)) v *= inv;
  }
}

// ---------------------------------------------------------------------------
// Voxel adjacency

using VoxelKey = std::array<std::int64_t, 3>;

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : k) {
      h ^= static_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

inline VoxelKey voxel_of(const Vec3& p, double r) {
  return {static_cast<std::int64_t>(std::floor(p[0] / r)), static_cast<std::int64_t>(std::floor(p[1] / r)),
          static_cast<std::int64_t>(std::floor(p[2] / r))};
}

// Sorted, de-duplicated voxel keys per cluster.
inline std::vector<std::vector<VoxelKey>> voxelize_subobjects(std::span<const Vec3> positions,
                                                              std::span<const std::uint32_t> labels,
                                                              std::size_t cluster_count, double r) {
  require(r > 0, ErrorKind::Usage, "voxel size must be positive");
  require(labels.size() == positions.size(), ErrorKind::Usage, "labels and positions differ in length");
  std::vector<std::vector<VoxelKey>> vox(cluster_count);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (labels[i] >= cluster_count) continue;
    vox[labels[i]].push_back(voxel_of(positions[i], r));
  }
  for (auto& v : vox) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return vox;
}

enum class Adjacency {
  Voxel,  // shared voxel or 26-neighbourhood
  All,    // every pair of live clusters (feature-only criterion)
};

struct GraphEdge {
  std::uint32_t i = 0, j = 0;  // i < j
  double weight = 0.0;         // ||f_i - f_j||_2
};

// Sparse symmetric graph: only pairs with indicator 1 are stored; G_ij of any
// other pair is 0.
struct ConnectivityGraph {
  std::size_t node_count = 0;
  std::vector<GraphEdge> edges;  // sorted by (i, j)
  double voxel_size = 0.0;
  double gamma = kDefaultGamma;

  bool adjacent(std::uint32_t a, std::uint32_t b) const { return find(a, b) != nullptr; }
  double weight(std::uint32_t a, std::uint32_t b) const {
    const GraphEdge* e = find(a, b);
    return e ? e->weight : 0.0;
  }

 private:
  const GraphEdge* find(std::uint32_t a, std::uint32_t b) const {
    if (a == b) return nullptr;
    if (a > b) std::swap(a, b);
    auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{a, b}, [](const GraphEdge& e, const auto& key) {
      return std::pair{e.i, e.j} < key;
    });
    if (it != edges.end() && it->i == a && it->j == b) return &*it;
    return nullptr;
  }
};

inline ConnectivityGraph build_connectivity_graph(const ClusterState& clusters,
                                                  const std::vector<std::vector<VoxelKey>>& voxels, double gamma,
                                                  double voxel_size = 0.0, Adjacency mode = Adjacency::Voxel) {
  require(gamma > 0, ErrorKind::Usage, "gamma must be positive");
  const std::size_t s = clusters.cluster_count;
  require(clusters.features.rows == s, ErrorKind::Usage, "cluster features missing; attach statistics first");
  ConnectivityGraph g;
  g.node_count = s;
  g.gamma = gamma;
  g.voxel_size = voxel_size;

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  if (mode == Adjacency::All) {
    for (std::uint32_t i = 0; i < s; ++i)
      for (std::uint32_t j = i + 1; j < s; ++j)
        if (!clusters.tombstone[i] && !clusters.tombstone[j]) pairs.emplace_back(i, j);
  } else {
    require(voxels.size() == s, ErrorKind::Usage, "voxel sets do not match cluster count");
    std::unordered_map<VoxelKey, std::vector<std::uint32_t>, VoxelKeyHash> occupancy;
    for (std::uint32_t k = 0; k < s; ++k) {
      if (clusters.tombstone[k]) continue;
      for (const VoxelKey& v : voxels[k]) occupancy[v].push_back(k);
    }
    for (std::uint32_t k = 0; k < s; ++k) {
      if (clusters.tombstone[k]) continue;
      for (const VoxelKey& v : voxels[k])
        for (std::int64_t dx = -1; dx <= 1; ++dx)
          for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dz = -1; dz <= 1; ++dz) {
              auto it = occupancy.find({v[0] + dx, v[1] + dy, v[2] + dz});
              if (it == occupancy.end()) continue;
              for (std::uint32_t o : it->second)
                if (o > k) pairs.emplace_back(k, o);
            }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  }
  g.edges.reserve(pairs.size());
  for (auto [i, j] : pairs)
    g.edges.push_back({i, j, std::sqrt(squared_distance(clusters.features.row(i), clusters.features.row(j)))});
  return g;
}

struct InstanceResult {
  std::size_t instance_count = 0;
  std::vector<std::uint32_t> labels;      // per point, in [0, instance_count)
  Matrix features;                        // f-hat: mean member feature
  std::vector<std::size_t> sizes;         // points per instance
  std::vector<std::uint32_t> cluster_to_instance;  // kNoLabel for tombstones
};

// Components over edges with weight in [0, gamma], numbered by descending
// point count (ties: smallest member cluster id first).
inline InstanceResult aggregate_components(const ConnectivityGraph& graph, double gamma,
                                           std::span<const std::uint32_t> cluster_labels, const Matrix& point_features) {
  const std::size_t s = graph.node_count;
  require(point_features.rows == cluster_labels.size(), ErrorKind::Usage, "labels and features differ in length");
  UnionFind uf(s);
  for (const GraphEdge& e : graph.edges)
    if (e.weight <= gamma) uf.unite(e.i, e.j);

  std::vector<std::size_t> cluster_size(s, 0);
  for (std::uint32_t l : cluster_labels) {
    require(l < s, ErrorKind::Usage, "cluster label out of range");
    ++cluster_size[l];
  }
  // per root: point count and smallest cluster id
  std::vector<std::size_t> root_points(s, 0);
  std::vector<std::uint32_t> root_min(s, std::numeric_limits<std::uint32_t>::max());
  for (std::uint32_t k = 0; k < s; ++k) {
    if (cluster_size[k] == 0) continue;
    const std::uint32_t r = uf.find(k);
    root_points[r] += cluster_size[k];
    root_min[r] = std::min(root_min[r], k);
  }
  std::vector<std::uint32_t> roots;
  for (std::uint32_t k = 0; k < s; ++k)
    if (root_points[k] > 0) roots.push_back(k);
  std::sort(roots.begin(), roots.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (root_points[a] != root_points[b]) return root_points[a] > root_points[b];
    return root_min[a] < root_min[b];
  });
  std::vector<std::uint32_t> root_to_inst(s, kNoLabel);
  for (std::size_t i = 0; i < roots.size(); ++i) root_to_inst[roots[i]] = static_cast<std::uint32_t>(i);

  InstanceResult res;
  res.instance_count = roots.size();
  res.cluster_to_instance.assign(s, kNoLabel);
  for (std::uint32_t k = 0; k < s; ++k)
    if (cluster_size[k] > 0) res.cluster_to_instance[k] = root_to_inst[uf.find(k)];
  res.labels.resize(cluster_labels.size());
  res.sizes.assign(res.instance_count, 0);
  res.features = Matrix(res.instance_count, point_features.cols);
  for (std::size_t i = 0; i < cluster_labels.size(); ++i) {
    const std::uint32_t inst = res.cluster_to_instance[cluster_labels[i]];
    res.labels[i] = inst;
    ++res.sizes[inst];
    auto acc = res.features.row(inst);
    const auto f = point_features.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) acc[j] += f[j];
  }
  for (std::size_t m = 0; m < res.instance_count; ++m)
    for (double& v : res.features.row(m)) v /= static_cast<double>(res.sizes[m]);
  return res;
}

struct InstantiateOptions {
  std::size_t samples = kDefaultSamples;
  double voxel_size = kDefaultVoxelSize;
  double gamma = kDefaultGamma;
  double lambda_pos = kDefaultLambdaPos;
  std::uint64_t seed = 0;
  KMeansOptions kmeans;
  Adjacency adjacency = Adjacency::Voxel;
};

struct InstantiationTrace {
  std::vector<std::uint32_t> seeds;
  ClusterState clusters;
  ConnectivityGraph graph;
};

inline InstanceResult instantiate(std::span<const Vec3> positions, const Matrix& features,
                                  const InstantiateOptions& opt = {}, InstantiationTrace* trace = nullptr) {
  const std::size_t n = positions.size();
  require(n >= 1, ErrorKind::Data, "instantiate: empty point set");
  require(opt.samples >= 1 && opt.samples <= n, ErrorKind::Usage, "instantiate: sample count must be in [1, n]");
  require(opt.voxel_size > 0, ErrorKind::Usage, "voxel size must be positive");
  require(opt.gamma > 0, ErrorKind::Usage, "gamma must be positive");

  const Matrix X = build_cluster_space(positions, features, opt.lambda_pos);
  Rng rng(opt.seed);
  const std::size_t start = rng.index(n);
  std::vector<std::uint32_t> seeds = farthest_point_sample(X, opt.samples, start);
  ClusterState clusters = kmeans_cluster(X, seeds, opt.kmeans);
  attach_cluster_statistics(clusters, positions, features);
  const auto voxels = voxelize_subobjects(positions, clusters.labels, clusters.cluster_count, opt.voxel_size);
  ConnectivityGraph graph = build_connectivity_graph(clusters, voxels, opt.gamma, opt.voxel_size, opt.adjacency);
  InstanceResult res = aggregate_components(graph, opt.gamma, clusters.labels, features);
  if (trace) {
    trace->seeds = std::move(seeds);
    trace->clusters = std::move(clusters);
    trace->graph = std::move(graph);
  }
  return res;
}

}  // namespace igs
