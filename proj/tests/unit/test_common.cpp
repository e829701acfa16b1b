#include <gtest/gtest.h>

#include <set>

#include "igs/common.hpp"
#include "igs/parallel.hpp"
#include "igs/union_find.hpp"

using namespace igs;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformStaysInRange) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.index(7), 7u);
  }
}

TEST(Rng, NormalMomentsAreRoughlyStandard) {
  Rng r(9);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(Error, CarriesKind) {
  try {
    require(false, ErrorKind::Numeric, "boom");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(Vec3, BasicAlgebra) {
  const Vec3 a{1, 2, 3}, b{4, 5, 6};
  EXPECT_EQ(dot(a, b), 32.0);
  EXPECT_EQ(cross(Vec3{1, 0, 0}, Vec3{0, 1, 0}), (Vec3{0, 0, 1}));
  EXPECT_DOUBLE_EQ(norm(normalized(b)), 1.0);
  EXPECT_EQ(normalized(Vec3{0, 0, 0}), (Vec3{0, 0, 0}));
}

TEST(Matrix, FromRowsCopiesRowMajor) {
  const std::vector<Vec3> rows{{1, 2, 3}, {4, 5, 6}};
  const Matrix m = Matrix::from_rows<3>(rows);
  EXPECT_EQ(m.rows, 2u);
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m.row(0)[2], 3.0);
}

TEST(Parallel, VisitsEveryIndexOnce) {
  set_thread_count(3);
  std::vector<int> hits(1001, 0);
  parallel_for(0, hits.size(), [&](std::size_t i) { ++hits[i]; });
  set_thread_count(0);
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(UnionFind, MergesTransitively) {
  UnionFind uf(5);
  EXPECT_TRUE(uf.unite(0, 1));
  EXPECT_TRUE(uf.unite(3, 4));
  EXPECT_FALSE(uf.unite(1, 0));
  EXPECT_TRUE(uf.unite(1, 4));
  EXPECT_TRUE(uf.connected(0, 3));
  EXPECT_FALSE(uf.connected(0, 2));
}
