#pragma once

// Slow, obviously-correct reference implementations used by the unit and
// acceptance tests. They deliberately share no code with include/igs beyond
// the plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

#include "igs/common.hpp"
#include "igs/instantiation.hpp"

namespace igs::oracle {

inline double sqdist(const Matrix& X, std::size_t a, std::size_t b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < X.cols; ++k) {
    const double d = X(a, k) - X(b, k);
    acc += d * d;
  }
  return acc;
}

// Recomputes every candidate's distance to the whole selected set at each
// step: O(n^2 s).
inline std::vector<std::uint32_t> farthest_point_sample(const Matrix& X, std::size_t s, std::size_t start) {
  std::vector<std::uint32_t> picked{static_cast<std::uint32_t>(start)};
  while (picked.size() < s) {
    double best_d = -1.0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < X.rows; ++i) {
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      double m = std::numeric_limits<double>::infinity();
      for (std::uint32_t p : picked) m = std::min(m, sqdist(X, i, p));
      if (m > best_d) {
        best_d = m;
        best = i;
      }
    }
    picked.push_back(static_cast<std::uint32_t>(best));
  }
  return picked;
}

// Component id per node by iterative DFS over edges whose weight is <= gamma.
inline std::vector<std::uint32_t> components_dfs(std::size_t n, const std::vector<GraphEdge>& edges, double gamma) {
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (const GraphEdge& e : edges) {
    if (e.weight > gamma) continue;
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  std::vector<std::uint32_t> comp(n, kNoLabel);
  std::uint32_t next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != kNoLabel) continue;
    std::vector<std::uint32_t> stack{static_cast<std::uint32_t>(s)};
    comp[s] = next;
    while (!stack.empty()) {
      const std::uint32_t u = stack.back();
      stack.pop_back();
      for (std::uint32_t v : adj[u])
        if (comp[v] == kNoLabel) {
          comp[v] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  return comp;
}

// Relabels by first occurrence so two labelings describing the same partition
// compare equal.
inline std::vector<std::uint32_t> canonical(const std::vector<std::uint32_t>& labels) {
  std::map<std::uint32_t, std::uint32_t> seen;
  std::vector<std::uint32_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, fresh] = seen.emplace(labels[i], static_cast<std::uint32_t>(seen.size()));
    out[i] = it->second;
  }
  return out;
}

// True when every block of `fine` lies inside one block of `coarse`.
inline bool refines(const std::vector<std::uint32_t>& fine, const std::vector<std::uint32_t>& coarse) {
  std::map<std::uint32_t, std::uint32_t> owner;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto [it, fresh] = owner.emplace(fine[i], coarse[i]);
    if (!fresh && it->second != coarse[i]) return false;
  }
  return true;
}

inline double kmeans_objective(const Matrix& X, const std::vector<std::uint32_t>& labels, const Matrix& centers) {
  double J = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t k = 0; k < X.cols; ++k) {
      const double d = X(i, k) - centers(labels[i], k);
      J += d * d;
    }
  return J;
}

// sin/cos of 2^l * pi * x, written out per band.
inline std::vector<double> positional_encoding(const Vec3& p) {
  std::vector<double> out{p[0], p[1], p[2]};
  for (double freq : {std::numbers::pi, 2.0 * std::numbers::pi}) {
    for (int d = 0; d < 3; ++d) out.push_back(std::sin(freq * p[d]));
    for (int d = 0; d < 3; ++d) out.push_back(std::cos(freq * p[d]));
  }
  return out;
}

// Front-to-back compositing of already depth-sorted (alpha, value) layers.
inline double composite(const std::vector<std::pair<double, double>>& layers) {
  double T = 1.0, acc = 0.0;
  for (auto [a, v] : layers) {
    acc += T * a * v;
    T *= 1.0 - a;
  }
  return acc;
}

}  // namespace igs::oracle
