#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "nngp/error.hpp"
#include "nngp/neighbor.hpp"
#include "support/oracles.hpp"

using namespace nngp;

namespace {

std::vector<Point> reorder(const std::vector<Point>& pts, const std::vector<std::size_t>& order) {
  std::vector<Point> out;
  for (auto i : order) out.push_back(pts[i]);
  return out;
}

// Exhaustive m-nearest among all reference points, ties by index.
std::vector<std::size_t> scan_nearest(const Point& s0, const std::vector<Point>& ref, std::size_t m) {
  std::vector<std::size_t> idx(ref.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double da = squared_distance(s0, ref[a]), db = squared_distance(s0, ref[b]);
    return da < db || (da == db && a < b);
  });
  idx.resize(std::min(m, ref.size()));
  return idx;
}

}  // namespace

TEST(OrderLocations, CoordSum) {
  const std::vector<Point> p{{1.0, 2.0}, {0.5, 0.5}, {1.0, 1.0}};
  const auto o = order_locations(p, OrderingStrategy::coord_sum);
  EXPECT_EQ(o, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(OrderLocations, TiesByIndex) {
  const std::vector<Point> p{{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}, {0.0, 0.0}};
  EXPECT_EQ(order_locations(p, OrderingStrategy::coord_sum), (std::vector<std::size_t>{3, 0, 1, 2}));
  EXPECT_EQ(order_locations(p, OrderingStrategy::first_coord), (std::vector<std::size_t>{3, 1, 2, 0}));
}

TEST(OrderLocations, GivenIdentity) {
  const auto p = oracle::uniform_points(6, 1);
  const std::vector<std::size_t> id{0, 1, 2, 3, 4, 5};
  EXPECT_EQ(order_locations(p, OrderingStrategy::given, id), id);
  const std::vector<std::size_t> bad{0, 1, 1, 3, 4, 5};
  EXPECT_THROW(order_locations(p, OrderingStrategy::given, bad), Error);
}

TEST(BruteForce, SinglePoint) {
  const std::vector<Point> p{{0.0, 0.0}};
  const auto g = brute_force_neighbors(p, 3);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.neighbors(0).empty());
}

TEST(BruteForce, CollinearPoints) {
  std::vector<Point> p;
  for (int i = 0; i < 5; ++i) p.push_back({static_cast<double>(i), 0.0});
  const auto g = brute_force_neighbors(p, 2);
  // 0-based rows 3 and 4 are the fourth and fifth points.
  EXPECT_EQ(std::vector<std::size_t>(g.neighbors(3).begin(), g.neighbors(3).end()),
            (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(std::vector<std::size_t>(g.neighbors(4).begin(), g.neighbors(4).end()),
            (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(g.neighbors(1).size(), 1u);
}

TEST(BruteForce, RejectsDuplicates) {
  const std::vector<Point> p{{0.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}};
  EXPECT_THROW(brute_force_neighbors(p, 2), DuplicateLocationError);
  EXPECT_THROW(fast_neighbors(p, 2), DuplicateLocationError);
  try {
    fast_neighbors(p, 2);
  } catch (const DuplicateLocationError& e) {
    EXPECT_EQ(e.first(), 0u);
    EXPECT_EQ(e.second(), 2u);
  }
}

TEST(FastNeighbors, InvariantsHold) {
  const auto pts = oracle::uniform_points(500, 9);
  const auto ordered = reorder(pts, order_locations(pts, OrderingStrategy::coord_sum));
  const auto g = fast_neighbors(ordered, 7);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto nb = g.neighbors(i);
    EXPECT_EQ(nb.size(), std::min<std::size_t>(i, 7));
    for (std::size_t k = 0; k < nb.size(); ++k) {
      EXPECT_LT(nb[k], i);
      if (k > 0)
        EXPECT_LE(squared_distance(ordered[i], ordered[nb[k - 1]]),
                  squared_distance(ordered[i], ordered[nb[k]]));
    }
  }
}

TEST(FastNeighbors, MatchesBruteForceRandom) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pts = oracle::uniform_points(200, seed);
    const auto ordered = reorder(pts, order_locations(pts, OrderingStrategy::coord_sum));
    for (std::size_t m : {1u, 3u, 10u, 15u})
      EXPECT_EQ(fast_neighbors(ordered, m), brute_force_neighbors(ordered, m)) << "m=" << m;
  }
}

TEST(FastNeighbors, MatchesBruteForceOnGrid) {
  // Grids create many exact distance ties.
  std::vector<Point> pts;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) pts.push_back({i * 0.1, j * 0.1});
  for (auto strategy : {OrderingStrategy::coord_sum, OrderingStrategy::first_coord}) {
    const auto ordered = reorder(pts, order_locations(pts, strategy));
    EXPECT_EQ(fast_neighbors(ordered, 4), brute_force_neighbors(ordered, 4));
    EXPECT_EQ(fast_neighbors(ordered, 8), brute_force_neighbors(ordered, 8));
  }
}

TEST(FastNeighbors, SaturatedWhenSmall) {
  const auto pts = oracle::uniform_points(6, 4);
  const auto g = fast_neighbors(pts, 5);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(g.neighbors(i).size(), i);
}

TEST(FastNeighbors, Deterministic) {
  const auto pts = oracle::uniform_points(3000, 17);
  EXPECT_EQ(build_neighbor_graph(pts, 15), build_neighbor_graph(pts, 15));
}

TEST(PredictNeighbors, CoincidentSiteFirst) {
  const auto pts = oracle::uniform_points(50, 5);
  const auto nb = predict_neighbors(pts[3], pts, 5);
  EXPECT_EQ(nb.front(), 3u);
}

TEST(PredictNeighbors, AllWhenMExceedsN) {
  const auto pts = oracle::uniform_points(7, 6);
  const Point s0{0.5, 0.5};
  const auto nb = predict_neighbors(s0, pts, 20);
  EXPECT_EQ(nb, scan_nearest(s0, pts, 20));
  EXPECT_EQ(nb.size(), 7u);
}

TEST(PredictNeighbors, MatchesExhaustiveScan) {
  const auto pts = oracle::uniform_points(1000, 8);
  const auto queries = oracle::uniform_points(200, 9);
  const NeighborIndex index(pts);
  for (const auto& q : queries)
    for (std::size_t m : {1u, 15u}) EXPECT_EQ(index.query(q, m), scan_nearest(q, pts, m));
  // Queries outside the data hull.
  EXPECT_EQ(index.query({-3.0, 4.0}, 10), scan_nearest({-3.0, 4.0}, pts, 10));
}

TEST(PredictNeighbors, EmptyReference) {
  EXPECT_THROW(predict_neighbors({0.0, 0.0}, std::vector<Point>{}, 3), Error);
}
