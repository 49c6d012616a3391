#include <algorithm>
#include <random>
#include <vector>

#include "gtest/gtest.h"

#include "ctxgnn/dataset.h"
#include "ctxgnn/serving.h"
#include "test_util.h"

namespace ctxgnn {
namespace {

using testing::BipartiteRaw;

TEST(MipsTopK, HandExample) {
  const auto m = Tensor<double>::Matrix(3, 2, {1, 0, 0, 1, 1, 1});
  const std::vector<double> q{2, 1};
  const auto top = MipsTopK(m, std::span<const double>(q), 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0], (std::pair<NodeId, double>{2, 3.0}));
  EXPECT_EQ(top[1], (std::pair<NodeId, double>{0, 2.0}));
}

TEST(MipsTopK, EdgeCases) {
  const auto one = Tensor<double>::Matrix(1, 2, {1, 2});
  const std::vector<double> q{1, 1};
  EXPECT_EQ(MipsTopK(one, std::span<const double>(q), 1).size(), 1u);
  const auto m = Tensor<double>::Matrix(3, 2, {1, 0, 0, 1, 1, 1});
  const std::vector<NodeId> all{0, 1, 2};
  EXPECT_TRUE(MipsTopK(m, std::span<const double>(q), 2, all).empty());
}

TEST(MipsTopK, TiesByAscendingId) {
  const auto m = Tensor<double>::Matrix(4, 1, {1, 2, 2, 1});
  const std::vector<double> q{1};
  const std::vector<NodeId> exclude{1};
  const auto top = MipsTopK(m, std::span<const double>(q), 3, exclude);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].first, 2u);
  EXPECT_EQ(top[1].first, 0u);
  EXPECT_EQ(top[2].first, 3u);
}

TEST(MipsTopK, MatchesArgsort) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> m({30, 4});
    for (double& v : m.values()) v = std::round(g(rng) * 2) / 2;  // coarse values -> ties
    std::vector<double> q(4);
    for (double& v : q) v = std::round(g(rng));
    std::vector<std::pair<NodeId, double>> all;
    for (NodeId i = 0; i < 30; ++i) all.push_back({i, Dot<double>(m.row(i), q)});
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return RanksBefore(a.second, a.first, b.second, b.first);
    });
    all.resize(7);
    EXPECT_EQ(MipsTopK(m, std::span<const double>(q), 7), all);
  }
}

// One user with one local item (0); items 1..3 are only reachable via the
// tower. Hidden state comes from biases alone.
struct HandFixture {
  Dataset data = BuildDataset(BipartiteRaw(1, 4, {{0, 0, 1}}, 5, 10, 15));
  ModelConfig config;
  ModelParams<double> params;
  std::unique_ptr<ContextGnn<double>> model;

  HandFixture() {
    config.hidden_dim = 2;
    config.num_layers = 1;
    config.fusion_hidden = 1;
    model = std::make_unique<ContextGnn<double>>(data.graph, config);
    params = model->Init(0);
    for (auto& t : params.tensors) t.Fill(0.0);
    params.at("layer1.self.user.b") = Tensor<double>::Vector({1, 0});
    params.at("layer1.self.item.b") = Tensor<double>::Vector({2, 0});
    params.at("fusion.b2")[0] = 0.5;
    params.at("shallow_items") = Tensor<double>::Matrix(4, 2, {9, 9, -1, 0, 1, 0, 0.5, 0});
  }
};

TEST(Recommend, HandMerge) {
  HandFixture f;
  const std::vector<std::size_t> fanouts{1};
  const auto r = RecommendTopK(*f.model, f.params, fanouts, 0, 10, 2);
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_EQ(r.items[0], (ScoredItem{0, 2.5, ScoreSource::kPair}));
  EXPECT_EQ(r.items[1], (ScoredItem{2, 1.0, ScoreSource::kTower}));
  EXPECT_EQ(FormatRankingCsv(r), "0,1,0,2.5,pair\n0,2,2,1,tower\n");
}

TEST(Recommend, LargeKReturnsEverything) {
  HandFixture f;
  const std::vector<std::size_t> fanouts{1};
  const auto r = RecommendTopK(*f.model, f.params, fanouts, 0, 10, 50);
  std::vector<NodeId> ids;
  for (const auto& s : r.items) ids.push_back(s.item);
  EXPECT_EQ(ids, (std::vector<NodeId>{0, 2, 3, 1}));
}

TEST(Recommend, InvalidUser) {
  HandFixture f;
  const std::vector<std::size_t> fanouts{1};
  try {
    RecommendTopK(*f.model, f.params, fanouts, 3, 10, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidUser);
  }
}

TEST(Recommend, PreviouslySeenItemsStay) {
  HandFixture f;
  const std::vector<std::size_t> fanouts{1};
  // Item 0 was bought at t=1 and is still the top recommendation.
  EXPECT_EQ(RecommendTopK(*f.model, f.params, fanouts, 0, 10, 1).items[0].item, 0u);
}

TEST(Recommend, EquivalentToExhaustiveOnRandomFixtures) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    testing::RandomGraphSpec spec;
    spec.items = 40;
    spec.edges_per_type = 60;
    const Dataset d = BuildDataset(testing::RandomRaw(s, spec));
    ModelConfig c;
    c.hidden_dim = 6;
    c.pair_only = s % 3 == 1;
    c.tower_only = s % 3 == 2;
    const ContextGnn<double> model(d.graph, c);
    const auto params = model.Init(s);
    const std::vector<std::size_t> fanouts{3, 3};
    const Recommender<double> rec(model, params, fanouts);
    for (NodeId u = 0; u < d.graph.num_users(); ++u) {
      for (std::size_t k : {1u, 5u, 60u}) {
        EXPECT_EQ(rec.Recommend(u, 20, k).items,
                  RecommendExhaustive(model, params, fanouts, u, 20, k).items);
      }
    }
  }
}

TEST(Recommend, RaisingOffsetNeverDemotesPairItems) {
  const Dataset d = BuildDataset(testing::RandomRaw(3, {8, 30, 4, 60, 30, true}));
  ModelConfig c;
  c.hidden_dim = 6;
  const ContextGnn<double> model(d.graph, c);
  auto params = model.Init(2);
  const std::vector<std::size_t> fanouts{3, 3};
  auto towers_above = [&](const ScoredRanking& r) {
    std::map<NodeId, int> out;
    int towers = 0;
    for (const auto& s : r.items) {
      if (s.source == ScoreSource::kPair) {
        out[s.item] = towers;
      } else {
        ++towers;
      }
    }
    return out;
  };
  for (NodeId u = 0; u < d.graph.num_users(); ++u) {
    const auto before = towers_above(RecommendTopK(model, params, fanouts, u, 25, 100));
    params.at("fusion.b2")[0] += 0.3;
    const auto after = towers_above(RecommendTopK(model, params, fanouts, u, 25, 100));
    params.at("fusion.b2")[0] -= 0.3;
    for (const auto& [item, n] : before) EXPECT_LE(after.at(item), n);
  }
}

TEST(Recommend, SingleGnnPassPerRequest) {
  const Dataset d = BuildDataset(testing::RandomRaw(5));
  const ContextGnn<float> model(d.graph, ModelConfig{});
  const auto params = model.Init(1);
  const Recommender<float> rec(model, params, {4, 4});
  instrumentation().Reset();
  rec.Recommend(0, 20, 100);
  EXPECT_EQ(instrumentation().gnn_forward_calls, 1u);
}

}  // namespace
}  // namespace ctxgnn
