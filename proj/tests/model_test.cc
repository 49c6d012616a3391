#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "gtest/gtest.h"

#include "ctxgnn/dataset.h"
#include "ctxgnn/model.h"
#include "ctxgnn/sampler.h"
#include "grad_fixture.h"
#include "test_util.h"

namespace ctxgnn {
namespace {

using testing::BipartiteRaw;

ModelConfig SmallConfig(std::size_t d = 2, std::size_t layers = 1) {
  ModelConfig c;
  c.hidden_dim = d;
  c.num_layers = layers;
  c.fusion_hidden = 2;
  c.precision = Precision::kFloat64;
  return c;
}

void Zero(ModelParams<double>& p) {
  for (auto& t : p.tensors) t.Fill(0.0);
}

void Identity(Tensor<double>& t) {
  t.Fill(0.0);
  for (std::size_t i = 0; i < t.rows(); ++i) t(i, i) = 1.0;
}

Subgraph Sample(const Dataset& d, NodeId user, Timestamp t, std::vector<std::size_t> fanouts) {
  return Bidirectionalize(SampleSubgraph(d.graph, user, t, fanouts));
}

TEST(ModelConfig, Validation) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 1, {}, 5, 10, 15));
  ModelConfig c = SmallConfig();
  c.hidden_dim = 0;
  EXPECT_THROW(ContextGnn<double>(d.graph, c), Error);
  c = SmallConfig();
  c.pair_only = c.tower_only = true;
  EXPECT_THROW(ContextGnn<double>(d.graph, c), Error);
}

TEST(ModelParams, InitShapesAndDeterminism) {
  const Dataset d = BuildDataset(testing::RandomRaw(1));
  const ContextGnn<double> model(d.graph, SmallConfig(6, 2));
  const auto a = model.Init(3), b = model.Init(3);
  EXPECT_EQ(a.tensors, b.tensors);
  EXPECT_NE(a.tensors, model.Init(4).tensors);
  model.CheckParams(a);
  EXPECT_EQ(a.at("indicator").size(), 6u);
  EXPECT_EQ(a.at("shallow_items").rows(), d.graph.num_items());
  EXPECT_TRUE(a.AllFinite());
}

TEST(ModelParams, MissingAndMisshapen) {
  const Dataset d = BuildDataset(testing::RandomRaw(1));
  const ContextGnn<double> model(d.graph, SmallConfig(4, 2));
  ModelParams<double> p = model.Init(1);
  try {
    p.at("encoder.shop.w1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingEncoder);
  }
  p.at("indicator") = Tensor<double>({5});
  EXPECT_THROW(model.CheckParams(p), Error);
  const Subgraph s = Sample(d, 0, 20, {3, 3});
  try {
    model.EncodeInputs(s, ModelParams<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingEncoder);
  }
}

TEST(EncodeInputs, ShapesAndIdenticalFeatures) {
  RawTables raw = BipartiteRaw(2, 3, {{0, 0, 1}, {0, 1, 2}, {1, 2, 3}, {0, 2, 4}}, 5, 10, 15);
  raw.nodes[1] = {"item", {"id", "price"}, {{"0", "2"}, {"1", "2"}, {"2", "7"}}, std::nullopt};
  const Dataset d = BuildDataset(raw);
  const ContextGnn<double> model(d.graph, SmallConfig(5, 2));
  const auto p = model.Init(2);
  const Subgraph s = Sample(d, 0, 10, {4, 4});
  const auto h0 = model.EncodeInputs(s, p);
  const auto& items = s.nodes[d.graph.item_type()];
  ASSERT_EQ(h0[d.graph.item_type()].rows(), items.size());
  EXPECT_EQ(h0[d.graph.item_type()].cols(), 5u);
  EXPECT_EQ(h0[d.graph.user_type()].rows(), s.nodes[d.graph.user_type()].size());
  const auto row_of = [&](NodeId g) {
    return static_cast<std::size_t>(std::find(items.begin(), items.end(), g) - items.begin());
  };
  const auto& hi = h0[d.graph.item_type()];
  EXPECT_TRUE(std::ranges::equal(hi.row(row_of(0)), hi.row(row_of(1))));
  EXPECT_FALSE(std::ranges::equal(hi.row(row_of(0)), hi.row(row_of(2))));
  // Feature-less users only see the bias path.
  const auto& hu = h0[d.graph.user_type()];
  EXPECT_TRUE(std::ranges::equal(hu.row(0), hu.row(1)));
}

TEST(InjectContext, HandExample) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 2, {{0, 1, 1}}, 5, 10, 15));
  const ContextGnn<double> model(d.graph, SmallConfig());
  ModelParams<double> p = model.Init(0);
  Zero(p);
  p.at("indicator") = Tensor<double>::Vector({1, 0});
  p.at("shallow_items")(1, 1) = 1.0;
  const Subgraph s = Sample(d, 0, 10, {1});
  std::vector<Tensor<double>> h0{Tensor<double>({1, 2}), Tensor<double>({1, 2})};
  const auto h = model.InjectContext(h0, s, p);
  EXPECT_EQ(h[d.graph.user_type()], Tensor<double>::Matrix(1, 2, {1, 0}));
  EXPECT_EQ(h[d.graph.item_type()], Tensor<double>::Matrix(1, 2, {0, 1}));
}

TEST(InjectContext, ZeroInjectionsAndItemFreeSubgraph) {
  const Dataset d = BuildDataset(BipartiteRaw(2, 2, {{0, 1, 1}}, 5, 10, 15));
  const ContextGnn<double> model(d.graph, SmallConfig());
  ModelParams<double> p = model.Init(0);
  p.at("indicator").Fill(0.0);
  p.at("shallow_items").Fill(0.0);
  const Subgraph s = Sample(d, 0, 10, {1});
  const auto h0 = model.EncodeInputs(s, p);
  EXPECT_EQ(model.InjectContext(h0, s, p), h0);

  p = model.Init(0);
  const Subgraph lone = Sample(d, 1, 10, {1});
  const auto l0 = model.EncodeInputs(lone, p);
  const auto l1 = model.InjectContext(l0, lone, p);
  EXPECT_EQ(l1[d.graph.item_type()], l0[d.graph.item_type()]);
  EXPECT_NE(l1[d.graph.user_type()], l0[d.graph.user_type()]);
}

TEST(GnnForward, HandExample) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 1, {{0, 0, 1}}, 5, 10, 15));
  const ContextGnn<double> model(d.graph, SmallConfig());
  ModelParams<double> p = model.Init(0);
  Zero(p);
  for (const char* w : {"layer1.self.user.w", "layer1.self.item.w", "layer1.msg.buys.w",
                        "layer1.msg.rev_buys.w"}) {
    Identity(p.at(w));
  }
  const Subgraph s = Sample(d, 0, 10, {1});
  std::vector<Tensor<double>> h0{Tensor<double>::Matrix(1, 2, {1, 0}),
                                 Tensor<double>::Matrix(1, 2, {0, 1})};
  instrumentation().Reset();
  const auto out = model.GnnForward(s, h0, p);
  EXPECT_EQ(instrumentation().gnn_forward_calls, 1u);
  EXPECT_EQ(out.user, Tensor<double>::Vector({1, 1}));
  EXPECT_EQ(out.items, Tensor<double>::Matrix(1, 2, {1, 1}));
}

TEST(GnnForward, IsolatedSeedComposesSelfTransforms) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 1, {}, 5, 10, 15));
  const ContextGnn<double> model(d.graph, SmallConfig(2, 2));
  ModelParams<double> p = model.Init(0);
  Zero(p);
  p.at("layer1.self.user.w") = Tensor<double>::Matrix(2, 2, {2, 0, 0, 2});
  p.at("layer2.self.user.w") = Tensor<double>::Matrix(2, 2, {0, 1, 1, 0});
  p.at("layer2.self.user.b") = Tensor<double>::Vector({-10, 0});
  const Subgraph s = Sample(d, 0, 10, {1, 1});
  std::vector<Tensor<double>> h0{Tensor<double>::Matrix(1, 2, {1, -1}), Tensor<double>({0, 2})};
  const auto out = model.GnnForward(s, h0, p);
  // layer 1: relu([2, -2]) = [2, 0]; layer 2 (no relu): [0, 2] + [-10, 0].
  EXPECT_EQ(out.user, Tensor<double>::Vector({-10, 2}));
  EXPECT_EQ(out.items.rows(), 0u);
}

TEST(GnnForward, Errors) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 1, {{0, 0, 1}}, 5, 10, 15));
  const ContextGnn<double> model(d.graph, SmallConfig(2, 1));
  const auto p = model.Init(0);
  const Subgraph deep = Sample(d, 0, 10, {1, 1});
  try {
    model.Forward(deep, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDepthMismatch);
  }
  const Subgraph one_way = SampleSubgraph(d.graph, 0, 10, std::vector<std::size_t>{1});
  EXPECT_THROW(model.Forward(one_way, p), Error);
}

// Reorders the local item rows of a subgraph.
Subgraph PermuteItems(const Subgraph& s, const std::vector<std::uint32_t>& new_pos,
                      const TemporalHeteroGraph& g) {
  Subgraph out = s;
  const TypeId it = s.item_type;
  for (std::size_t i = 0; i < new_pos.size(); ++i) {
    out.nodes[it][new_pos[i]] = s.nodes[it][i];
    out.hop[it][new_pos[i]] = s.hop[it][i];
  }
  for (std::size_t r = 0; r < s.edges.size(); ++r) {
    for (std::size_t e = 0; e < s.edges[r].size(); ++e) {
      if (DirectedSrcType(g, r) == it) out.edges[r].src[e] = new_pos[s.edges[r].src[e]];
      if (DirectedDstType(g, r) == it) out.edges[r].dst[e] = new_pos[s.edges[r].dst[e]];
    }
  }
  return out;
}

TEST(GnnForward, LocalOrderDoesNotMatter) {
  const Dataset d = BuildDataset(testing::RandomRaw(17));
  const ContextGnn<double> model(d.graph, SmallConfig(4, 2));
  const auto p = model.Init(5);
  const Subgraph s = Sample(d, 3, 25, {4, 4});
  const std::size_t n = s.nodes[s.item_type].size();
  ASSERT_GT(n, 2u);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Subgraph q = PermuteItems(s, perm, d.graph);
  const auto a = model.Forward(s, p), b = model.Forward(q, p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.readout.user[i], b.readout.user[i], 1e-12);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(a.readout.items(i, j), b.readout.items(perm[i], j), 1e-12);
    }
  }
}

TEST(ScoreCandidates, HandExample) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 3, {{0, 0, 1}}, 5, 10, 15));
  const ContextGnn<double> model(d.graph, SmallConfig());
  ModelParams<double> p = model.Init(0);
  Zero(p);
  p.at("fusion.b2")[0] = 0.5;
  p.at("shallow_items") = Tensor<double>::Matrix(3, 2, {0, 0, 0, 0, 0, 3});
  const Subgraph s = Sample(d, 0, 10, {1});
  const GnnOutput<double> out{Tensor<double>::Vector({1, 0}), Tensor<double>::Matrix(1, 2, {2, 0})};
  const auto scored = model.ScoreCandidates(out, s, p, std::vector<NodeId>{0, 2});
  ASSERT_EQ(scored.size(), 2u);
  EXPECT_EQ(scored[0], (ScoredItem{0, 2.5, ScoreSource::kPair}));
  EXPECT_EQ(scored[1], (ScoredItem{2, 0.0, ScoreSource::kTower}));
  EXPECT_THROW(model.ScoreCandidates(out, s, p, std::vector<NodeId>{9}), Error);
}

TEST(ScoreCandidates, ZeroFusionGivesRawDots) {
  const Dataset d = BuildDataset(testing::RandomRaw(3));
  const ContextGnn<double> model(d.graph, SmallConfig(4, 2));
  ModelParams<double> p = model.Init(1);
  for (const char* n : {"fusion.w1", "fusion.b1", "fusion.w2", "fusion.b2"}) p.at(n).Fill(0.0);
  const Subgraph s = Sample(d, 0, 25, {4, 4});
  const auto cache = model.Forward(s, p);
  EXPECT_EQ(cache.offset, 0.0);
  const auto& items = s.nodes[s.item_type];
  const auto scored = model.ScoreCandidates(cache.readout, s, p, items);
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(scored[i].source, ScoreSource::kPair);
    EXPECT_DOUBLE_EQ(scored[i].score, Dot<double>(cache.readout.user.values(), cache.readout.items.row(i)));
  }
}

TEST(ScoreCandidates, OffsetShiftMovesOnlyPairScores) {
  const Dataset d = BuildDataset(testing::RandomRaw(9));
  const ContextGnn<double> model(d.graph, SmallConfig(4, 2));
  ModelParams<double> p = model.Init(2);
  const Subgraph s = Sample(d, 1, 25, {3, 3});
  std::vector<NodeId> all(d.graph.num_items());
  std::iota(all.begin(), all.end(), 0u);
  const auto out = model.Forward(s, p).readout;
  const auto before = model.ScoreCandidates(out, s, p, all);
  p.at("fusion.b2")[0] += 0.75;
  const auto after = model.ScoreCandidates(out, s, p, all);
  std::size_t pairs = 0, towers = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    ASSERT_EQ(before[i].source, after[i].source);
    if (before[i].source == ScoreSource::kPair) {
      ++pairs;
      EXPECT_NEAR(after[i].score - before[i].score, 0.75, 1e-12);
    } else {
      ++towers;
      EXPECT_EQ(after[i].score, before[i].score);
    }
  }
  EXPECT_GT(pairs, 0u);
  EXPECT_GT(towers, 0u);
}

TEST(FusionOffset, ZeroWeightsAndDeterminism) {
  const Dataset d = BuildDataset(BipartiteRaw(1, 1, {}, 5, 10, 15));
  const ContextGnn<double> model(d.graph, SmallConfig(3));
  ModelParams<double> p = model.Init(4);
  const std::vector<double> h{0.3, -1.0, 2.0};
  EXPECT_EQ(model.FusionOffset(h, p), model.FusionOffset(h, p));
  Zero(p);
  EXPECT_EQ(model.FusionOffset(h, p), 0.0);
}

TEST(Forward, SingleGnnPassForAnyNumberOfCandidates) {
  const Dataset d = BuildDataset(testing::RandomRaw(6));
  const ContextGnn<float> model(d.graph, SmallConfig(4, 2));
  const auto p = model.Init(1);
  const Subgraph s = Sample(d, 2, 25, {4, 4});
  instrumentation().Reset();
  const auto cache = model.Forward(s, p);
  std::vector<NodeId> all(d.graph.num_items());
  std::iota(all.begin(), all.end(), 0u);
  model.ScoreCandidates(cache.readout, s, p, all);
  model.ScoreCandidates(cache.readout, s, p, std::vector<NodeId>{0});
  EXPECT_EQ(instrumentation().gnn_forward_calls, 1u);
}

TEST(Forward, InductiveModeNeverReadsShallowItems) {
  const Dataset d = BuildDataset(testing::RandomRaw(6));
  ModelConfig c = SmallConfig(4, 2);
  c.item_encoder_mode = ItemEncoderMode::kInductiveFeature;
  const ContextGnn<float> model(d.graph, c);
  const auto p = model.Init(1);
  std::vector<NodeId> all(d.graph.num_items());
  std::iota(all.begin(), all.end(), 0u);
  instrumentation().Reset();
  for (NodeId u = 0; u < d.graph.num_users(); ++u) {
    const Subgraph s = Sample(d, u, 25, {4, 4});
    model.ScoreCandidates(model.Forward(s, p).readout, s, p, all);
  }
  EXPECT_EQ(instrumentation().shallow_item_reads, 0u);

  const ContextGnn<float> shallow(d.graph, SmallConfig(4, 2));
  const auto ps = shallow.Init(1);
  const Subgraph s = Sample(d, 0, 25, {4, 4});
  shallow.ScoreCandidates(shallow.Forward(s, ps).readout, s, ps, all);
  EXPECT_GT(instrumentation().shallow_item_reads, 0u);
}

TEST(Backward, EndToEndFiniteDifferences) {
  for (int mode = 0; mode < 4; ++mode) {
    ModelConfig c;
    if (mode == 1) c.item_encoder_mode = ItemEncoderMode::kInductiveFeature;
    if (mode == 2) c.pair_only = true;
    if (mode == 3) c.tower_only = true;
    const auto r = testing::EndToEndGradCheck(c, 11 + mode);
    EXPECT_LE(r.max_error, 1e-4) << "mode " << mode;
    if (mode == 0) {
      for (const char* name : {"indicator", "shallow_items", "fusion.w1", "fusion.b2", "encoder.user.w1"}) {
        EXPECT_EQ(std::count(r.untouched.begin(), r.untouched.end(), name), 0) << name;
      }
    }
  }
}

}  // namespace
}  // namespace ctxgnn
