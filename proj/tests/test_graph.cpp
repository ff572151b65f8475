#include <gtest/gtest.h>

#include <set>

#include "stm/graph.hpp"
#include "support.hpp"

using namespace stm;
using stm::testing::Rng;
using stm::testing::uniform;

namespace {

Partition two_voronoi() { return voronoi_partition({{0, 0}, {10, 0}}, BoundingBox(-10, -10, 10, 10)); }

RoadNetwork network(const std::vector<PlanarPoint>& nodes, const std::vector<std::pair<std::size_t, std::size_t>>& segs) {
  RoadNetwork net;
  for (std::size_t i = 0; i < nodes.size(); ++i) net.nodes.push_back({i, nodes[i], 0});
  for (auto [u, v] : segs) {
    net.segments.push_back({u, v, distance(nodes[u], nodes[v])});
    ++net.nodes[u].degree;
    ++net.nodes[v].degree;
  }
  net.bbox = BoundingBox::of(nodes);
  return net;
}

Partition admin_of(std::vector<Polygon> polys) {
  Partition p;
  p.kind = RegionKind::admin;
  for (std::size_t i = 0; i < polys.size(); ++i) p.regions.push_back({i, std::move(polys[i]), RegionKind::admin, std::to_string(i)});
  p.bbox = p.regions[0].geometry.bbox();
  for (const auto& r : p.regions) p.bbox.expand(r.geometry.bbox());
  return p;
}

}  // namespace

TEST(Adjacency, ThreeByThreeGrid) {
  const auto e = build_adjacency(grid_partition(BoundingBox(0, 0, 1500, 1500), 500));
  ASSERT_EQ(e.size(), 12u);
  for (const auto& x : e) EXPECT_DOUBLE_EQ(x.weight, 500.0);
}

TEST(Adjacency, ClippedGridWeights) {
  const Partition p = grid_partition(BoundingBox(0, 0, 1000, 900), 500);
  const auto e = build_adjacency(p);
  ASSERT_EQ(e.size(), 4u);
  // Edge (2,3) runs along the 400 m clipped row.
  for (const auto& x : e)
    if (x.u == 2 && x.v == 3) {
      EXPECT_DOUBLE_EQ(x.weight, 400.0);
    }
}

TEST(Adjacency, QueenAddsDiagonals) {
  AdjacencyOptions o;
  o.queen = true;
  const auto e = build_adjacency(grid_partition(BoundingBox(0, 0, 1500, 1500), 500), o);
  EXPECT_EQ(e.size(), 12u + 8u);
  for (const auto& x : e)
    if (x.v == x.u + 4 || x.v == x.u + 2) {
      EXPECT_DOUBLE_EQ(x.weight, 50.0);
    }
}

TEST(Adjacency, GridCountMatchesGeometricAndFormula) {
  Rng rng(41);
  for (int t = 0; t < 15; ++t) {
    const BoundingBox b(0, 0, uniform(rng, 300, 3000), uniform(rng, 300, 3000));
    Partition p = grid_partition(b, uniform(rng, 100, 700));
    const auto arith = build_adjacency(p);
    const std::size_t r = p.grid->rows, c = p.grid->cols;
    ASSERT_EQ(arith.size(), r * (c - 1) + c * (r - 1));
    // The geometric path must agree when the grid layout is hidden.
    p.grid.reset();
    const auto geo = build_adjacency(p);
    ASSERT_EQ(geo.size(), arith.size());
    auto sorted = arith;
    std::sort(sorted.begin(), sorted.end(), [](auto& l, auto& rr) { return std::pair{l.u, l.v} < std::pair{rr.u, rr.v}; });
    for (std::size_t i = 0; i < geo.size(); ++i) {
      ASSERT_EQ(geo[i].u, sorted[i].u);
      ASSERT_EQ(geo[i].v, sorted[i].v);
      ASSERT_NEAR(geo[i].weight, sorted[i].weight, 1e-6);
    }
  }
}

TEST(Adjacency, AdminSquares) {
  const Partition p = admin_of({Polygon::rectangle({0, 0, 1, 1}), Polygon::rectangle({1, 0, 2, 1}),
                                Polygon::rectangle({2, 1, 3, 2}), Polygon::rectangle({5, 5, 6, 6})});
  const auto e = build_adjacency(p);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0], (GraphEdge{0, 1, 1.0}));
}

TEST(Adjacency, VoronoiBisector) {
  const auto e = build_adjacency(two_voronoi());
  ASSERT_EQ(e.size(), 1u);
  EXPECT_NEAR(e[0].weight, 20.0, 1e-9);
}

TEST(Adjacency, VoronoiSymmetricAndValid) {
  Rng rng(42);
  std::vector<PlanarPoint> seeds;
  for (int k = 0; k < 50; ++k) seeds.push_back({uniform(rng, 0, 2000), uniform(rng, 0, 2000)});
  const Partition p = voronoi_partition(seeds, BoundingBox(0, 0, 2000, 2000));
  const auto e = build_adjacency(p);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& x : e) {
    ASSERT_LT(x.u, x.v);
    ASSERT_GT(x.weight, 0.0);
    ASSERT_TRUE(seen.insert({x.u, x.v}).second);
    ASSERT_EQ(shared_boundary_length(p.regions[x.v].geometry, p.regions[x.u].geometry), x.weight);
  }
  // Planar Voronoi graph: at least n-1 and at most 3n-6 edges.
  EXPECT_GE(e.size(), seeds.size() - 1);
  EXPECT_LE(e.size(), 3 * seeds.size() - 6);
}

TEST(RoadWeights, SingleCrossingSegment) {
  const auto e = build_road_weights(two_voronoi(), network({{0, 1}, {7, 1}}, {{0, 1}}));
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].u, 0u);
  EXPECT_EQ(e[0].v, 1u);
  EXPECT_DOUBLE_EQ(e[0].weight, 7.0);
}

TEST(RoadWeights, InternalSegmentsIgnoredAndSums) {
  EXPECT_TRUE(build_road_weights(two_voronoi(), network({{-5, 0}, {-1, 0}, {-1, 3}}, {{0, 1}, {1, 2}})).empty());
  // 6 m and 8 m crossings between the same pair sum to 14.
  const auto e = build_road_weights(two_voronoi(), network({{1, 0}, {7, 0}, {1, 5}, {1, -3}, {9, 5}}, {{0, 1}, {2, 4}, {3, 0}}));
  ASSERT_EQ(e.size(), 1u);
  EXPECT_DOUBLE_EQ(e[0].weight, 14.0);
}

TEST(RoadWeights, OutsideEndpointIgnored) {
  EXPECT_TRUE(build_road_weights(two_voronoi(), network({{1, 0}, {30, 0}}, {{0, 1}})).empty());
}

TEST(RoadWeights, RequiresVoronoi) {
  EXPECT_THROW(build_road_weights(grid_partition(BoundingBox(0, 0, 10, 10), 5), network({{1, 1}, {2, 2}}, {{0, 1}})), Error);
}

TEST(RoadWeights, ConservationBoundAndPairs) {
  Rng rng(43);
  for (int t = 0; t < 5; ++t) {
    std::vector<PlanarPoint> nodes;
    std::vector<std::pair<std::size_t, std::size_t>> segs;
    for (int i = 0; i <= 10; ++i)
      for (int j = 0; j <= 10; ++j) nodes.push_back({i * 200.0, j * 200.0});
    for (int i = 0; i <= 10; ++i)
      for (int j = 0; j <= 10; ++j) {
        const std::size_t id = i * 11 + j;
        if (i < 10) segs.emplace_back(id, id + 11);
        if (j < 10) segs.emplace_back(id, id + 1);
      }
    const RoadNetwork net = network(nodes, segs);
    std::vector<PlanarPoint> seeds;
    for (int k = 0; k < 12; ++k) seeds.push_back({uniform(rng, 1, 1999), uniform(rng, 1, 1999)});
    const Partition p = voronoi_partition(seeds, BoundingBox(0, 0, 2000, 2000));
    const auto road = build_road_weights(p, net);
    double total = 0.0;
    for (const auto& e : road) total += e.weight;
    EXPECT_LE(total, net.total_length());
    // A road crossing between two cells implies they are connected by a segment.
    const BucketIndex idx(p);
    for (const auto& e : road) {
      bool found = false;
      for (const auto& s : net.segments) {
        const auto a = locate(net.nodes[s.u].pos, p, idx), b = locate(net.nodes[s.v].pos, p, idx);
        found |= (std::min(a, b) == e.u && std::max(a, b) == e.v);
      }
      ASSERT_TRUE(found);
    }
  }
}

TEST(Assemble, Examples) {
  const Partition p = grid_partition(BoundingBox(0, 0, 2000, 2000), 500);
  const RegionGraph g = assemble_graph(p, build_adjacency(p));
  EXPECT_EQ(g.size(), 16u);
  EXPECT_EQ(g.edges.size(), 24u);
  UrbanFeatures f;
  f.categories = {"a"};
  f.rows = 3;
  f.matrix = {1, 2, 3};
  EXPECT_THROW(assemble_graph(p, {}, f), Error);
  const RegionGraph single = assemble_graph(grid_partition(BoundingBox(0, 0, 1, 1), 5), {});
  EXPECT_TRUE(single.edges.empty());
}

TEST(Assemble, ValidatesAndCanonicalizes) {
  const Partition p = grid_partition(BoundingBox(0, 0, 1500, 500), 500);
  EXPECT_THROW(assemble_graph(p, {{0, 7, 1.0}}), Error);
  EXPECT_THROW(assemble_graph(p, {{1, 1, 1.0}}), Error);
  EXPECT_THROW(assemble_graph(p, {{0, 1, 0.0}}), Error);
  EXPECT_THROW(assemble_graph(p, {{0, 1, 1.0}, {1, 0, 2.0}}), Error);
  const RegionGraph g = assemble_graph(p, {{2, 1, 3.0}, {1, 0, 2.0}});
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.edges[0], (GraphEdge{0, 1, 2.0}));
  EXPECT_EQ(g.edges[1], (GraphEdge{1, 2, 3.0}));
}

TEST(GraphJson, FieldOrderAndRoundTrip) {
  Rng rng(44);
  std::vector<PlanarPoint> seeds;
  for (int k = 0; k < 15; ++k) seeds.push_back({uniform(rng, 0, 900), uniform(rng, 0, 900)});
  const Partition p = voronoi_partition(seeds, BoundingBox(0, 0, 900, 900), Projection(-73.9, 40.7));
  UrbanFeatures f;
  f.categories = {"cafe", "park"};
  f.rows = p.size();
  for (std::size_t i = 0; i < 2 * p.size(); ++i) f.matrix.push_back(static_cast<double>(i % 7));
  const RegionGraph g = assemble_graph(p, build_adjacency(p), f);
  const auto j = to_json(g);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  ASSERT_GE(keys.size(), 4u);
  EXPECT_EQ((std::vector<std::string>(keys.begin(), keys.begin() + 4)),
            (std::vector<std::string>{"regions", "edges", "feature_categories", "features"}));
  const std::string text = j.dump();
  const RegionGraph back = graph_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.edges, g.edges);
  EXPECT_EQ(back.static_features.matrix, g.static_features.matrix);
  EXPECT_EQ(back.static_features.categories, g.static_features.categories);
  EXPECT_EQ(to_json(back).dump(), text);
}

TEST(GraphJson, RejectsCorrupt) {
  EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"regions":[]})")), Error);
}
