#include <random>
#include <set>
#include <vector>

#include "gtest/gtest.h"

#include "ctxgnn/dataset.h"
#include "ctxgnn/sampler.h"
#include "oracles.h"
#include "test_util.h"

namespace ctxgnn {
namespace {

using testing::BipartiteRaw;

const std::vector<std::size_t> kOneHop{kUnlimitedFanout};

TEST(SampleSubgraph, OneHopRespectsTime) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 2, {{0, 0, 1}, {0, 1, 5}}, 5, 10, 15));
  const Subgraph s = SampleSubgraph(d.graph, 0, 3, kOneHop);
  EXPECT_EQ(s.nodes[d.graph.user_type()], std::vector<NodeId>{0});
  EXPECT_EQ(s.nodes[d.graph.item_type()], std::vector<NodeId>{0});
  ASSERT_EQ(s.edges[0].size(), 1u);
  EXPECT_EQ(s.edges[0].time[0], 1);
  EXPECT_EQ(s.hop[d.graph.item_type()][0], 1);
}

TEST(SampleSubgraph, IsolatedSeed) {
  const Dataset d = BuildDataset(BipartiteRaw(2, 2, {{1, 0, 1}}, 5, 10, 15));
  const Subgraph s = SampleSubgraph(d.graph, 0, 10, std::vector<std::size_t>{4, 4});
  EXPECT_EQ(s.num_nodes(), 1u);
  EXPECT_EQ(s.num_edges(), 0u);
  EXPECT_EQ(s.seed_local, 0u);
}

TEST(SampleSubgraph, TwoHopChain) {
  const Dataset d = BuildDataset(BipartiteRaw(2, 1, {{0, 0, 1}, {1, 0, 2}}, 5, 10, 15));
  const Subgraph s = SampleSubgraph(d.graph, 0, 10, std::vector<std::size_t>{4, 4});
  const auto& users = s.nodes[d.graph.user_type()];
  ASSERT_EQ(users.size(), 2u);
  EXPECT_EQ(users[1], 1u);
  EXPECT_EQ(s.hop[d.graph.user_type()][1], 2);
}

TEST(SampleSubgraph, InvalidSeed) {
  const Dataset d = BuildDataset(BipartiteRaw(2, 1, {}, 5, 10, 15));
  try {
    SampleSubgraph(d.graph, 2, 10, kOneHop);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidSeed);
  }
}

TEST(SampleSubgraph, FanoutKeepsMostRecent) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 4, {{0, 0, 1}, {0, 1, 2}, {0, 2, 3}, {0, 3, 4}}, 5, 10, 15));
  const Subgraph s = SampleSubgraph(d.graph, 0, 10, std::vector<std::size_t>{2});
  EXPECT_EQ(LocalItemSet(s), (std::vector<NodeId>{2, 3}));
}

TEST(SampleSubgraph, SizeBound) {
  for (std::uint64_t g = 0; g < 30; ++g) {
    const Dataset d = BuildDataset(testing::RandomRaw(g));
    const std::vector<std::size_t> fanouts{2, 3};
    const std::size_t types = 2 * d.graph.edge_types().size();
    const std::size_t bound = 1 + 2 * types + 2 * types * 3 * types;
    for (NodeId u = 0; u < d.graph.num_users(); ++u) {
      EXPECT_LE(SampleSubgraph(d.graph, u, 20, fanouts).num_nodes(), bound);
    }
  }
}

TEST(SampleSubgraph, NoLeakageOnRandomGraphs) {
  for (std::uint64_t g = 0; g < 100; ++g) {
    const Dataset d = BuildDataset(testing::RandomRaw(300 + g));
    const Timestamp t = static_cast<Timestamp>(g % 25);
    const Subgraph s = Bidirectionalize(SampleSubgraph(d.graph, g % 8, t, std::vector<std::size_t>{3, 3, 3}));
    for (const auto& e : s.edges) {
      for (Timestamp ts : e.time) ASSERT_LE(ts, t);
    }
    for (const auto& hops : s.hop) {
      for (auto h : hops) EXPECT_LE(h, 3);
    }
  }
}

TEST(SampleSubgraph, EqualsBfsClosure) {
  for (std::uint64_t g = 0; g < 50; ++g) {
    const RawTables raw = testing::RandomRaw(700 + g);
    const Dataset d = BuildDataset(raw);
    for (std::size_t depth = 1; depth <= 3; ++depth) {
      const std::vector<std::size_t> fanouts(depth, kUnlimitedFanout);
      const Subgraph s = SampleSubgraph(d.graph, g % 8, 18, fanouts);
      const auto oracle = testing::ExactClosure(raw, g % 8, 18, depth);
      EXPECT_EQ(testing::SampledNodes(d.graph, s), oracle.nodes);
      EXPECT_EQ(testing::SampledEdges(d.graph, s), oracle.edges);
    }
  }
}

TEST(Bidirectionalize, AddsReverse) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 1, {{0, 0, 1}}, 5, 10, 15));
  const Subgraph s = Bidirectionalize(SampleSubgraph(d.graph, 0, 10, kOneHop));
  ASSERT_EQ(s.edges.size(), 2u);
  ASSERT_EQ(s.edges[1].size(), 1u);
  EXPECT_EQ(s.edges[1].src[0], s.edges[0].dst[0]);
  EXPECT_EQ(s.edges[1].dst[0], s.edges[0].src[0]);
  EXPECT_EQ(DirectedEdgeName(d.graph, 1), "rev_buys");
}

TEST(Bidirectionalize, Idempotent) {
  const Dataset d = BuildDataset(testing::RandomRaw(5));
  const Subgraph once = Bidirectionalize(SampleSubgraph(d.graph, 1, 20, std::vector<std::size_t>{3, 3}));
  const Subgraph twice = Bidirectionalize(once);
  for (std::size_t r = 0; r < once.edges.size(); ++r) {
    EXPECT_EQ(once.edges[r].src, twice.edges[r].src);
    EXPECT_EQ(once.edges[r].dst, twice.edges[r].dst);
    EXPECT_EQ(once.edges[r].time, twice.edges[r].time);
  }
}

TEST(Bidirectionalize, PathDoubles) {
  // u0 -> i0 <- u1 -> i1
  const Dataset d = BuildDataset(BipartiteRaw(2, 2, {{0, 0, 1}, {1, 0, 2}, {1, 1, 3}}, 5, 10, 15));
  const Subgraph s = Bidirectionalize(SampleSubgraph(d.graph, 0, 10, std::vector<std::size_t>{5, 5, 5}));
  EXPECT_EQ(s.num_edges(), 6u);
}

TEST(LocalItemSet, Cases) {
  const Dataset d = BuildDataset(BipartiteRaw(2, 3, {{0, 2, 1}, {0, 0, 2}}, 5, 10, 15));
  EXPECT_EQ(LocalItemSet(SampleSubgraph(d.graph, 0, 10, kOneHop)), (std::vector<NodeId>{0, 2}));
  EXPECT_TRUE(LocalItemSet(SampleSubgraph(d.graph, 1, 10, kOneHop)).empty());
}

TEST(LocalItemSet, DepthThreeMatchesOracle) {
  const RawTables raw = testing::RandomRaw(42);
  const Dataset d = BuildDataset(raw);
  const auto oracle = testing::ExactClosure(raw, 2, 25, 3);
  std::vector<NodeId> expect;
  for (const auto& [type, id, hop] : oracle.nodes) {
    if (type == "item") expect.push_back(id);
  }
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(LocalItemSet(SampleSubgraph(d.graph, 2, 25, std::vector<std::size_t>(3, kUnlimitedFanout))),
            expect);
}

}  // namespace
}  // namespace ctxgnn
