#include <cmath>
#include <set>

#include "gtest/gtest.h"

#include "ctxgnn/dataset.h"
#include "ctxgnn/eval.h"
#include "ctxgnn/synth.h"

namespace ctxgnn {
namespace {

SynthConfig Small(std::uint64_t seed = 0) {
  SynthConfig c;
  c.num_users = 50;
  c.num_items = 80;
  c.num_train_interactions = 800;
  c.seed = seed;
  return c;
}

TEST(GenerateSynthetic, Deterministic) {
  const auto a = GenerateSynthetic(Small(4));
  const auto b = GenerateSynthetic(Small(4));
  EXPECT_EQ(a.raw.edges[0].rows, b.raw.edges[0].rows);
  EXPECT_EQ(a.raw.nodes[0].rows, b.raw.nodes[0].rows);
  EXPECT_EQ(a.raw.nodes[1].rows, b.raw.nodes[1].rows);
  EXPECT_EQ(BuildDataset(a.raw).graph.Serialize(), BuildDataset(b.raw).graph.Serialize());
  EXPECT_NE(GenerateSynthetic(Small(5)).raw.edges[0].rows, a.raw.edges[0].rows);
}

TEST(GenerateSynthetic, Shape) {
  const auto d = GenerateSynthetic(Small());
  const auto& rows = d.raw.edges[0].rows;
  // 800 training + two evaluation horizons of 100 each.
  EXPECT_EQ(rows.size(), 1000u);
  EXPECT_EQ(d.raw.task.val_cutoff, 800 * 60);
  EXPECT_EQ(d.raw.task.interval, 100 * 60);
  EXPECT_EQ(d.raw.task.test_cutoff, 900 * 60);
  // Every user appears before the first evaluation cutoff.
  std::set<std::string> early;
  for (std::size_t i = 0; i < 50; ++i) early.insert(rows[i].src_id);
  EXPECT_EQ(early.size(), 50u);
}

TEST(GenerateSynthetic, RepeatFractionMatches) {
  for (double rp : {0.2, 0.5, 0.9}) {
    SynthConfig c;
    c.num_users = 100;
    c.num_items = 500;
    c.num_train_interactions = 12000;
    c.repeat_prob = rp;
    const auto d = GenerateSynthetic(c);
    ASSERT_GE(d.repeater_draws, 10000u);
    const double got = static_cast<double>(d.repeat_events) / static_cast<double>(d.repeater_draws);
    EXPECT_NEAR(got, rp, 0.02);
  }
}

TEST(GenerateSynthetic, RepeaterFraction) {
  SynthConfig c = Small();
  c.repeater_fraction = 0.3;
  const auto d = GenerateSynthetic(c);
  std::size_t n = 0;
  for (bool r : d.is_repeater) n += r;
  EXPECT_EQ(n, 15u);
}

TEST(GenerateSynthetic, ExtremeRepeatProbabilities) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    SynthConfig c = Small(s);
    c.repeat_prob = 1.0;
    Dataset d = BuildDataset(GenerateSynthetic(c).raw);
    EXPECT_EQ(LocalityScore(d.graph, d.task, Split::kVal, 1), 1.0);
    EXPECT_EQ(LocalityScore(d.graph, d.task, Split::kTest, 1), 1.0);
    c.repeat_prob = 0.0;
    d = BuildDataset(GenerateSynthetic(c).raw);
    EXPECT_EQ(LocalityScore(d.graph, d.task, Split::kVal, 1), 0.0);
    EXPECT_EQ(LocalityScore(d.graph, d.task, Split::kTest, 1), 0.0);
  }
}

TEST(SynthConfig, Parse) {
  const SynthConfig c = ParseSynthConfig(
      "# comment\nnum_users = 7\nnum_items=9\nnum_train_interactions=70\nrepeat_prob=0.25\n"
      "community_count=3\ntime_step=5\nseed=11  # trailing\n");
  EXPECT_EQ(c.num_users, 7u);
  EXPECT_EQ(c.num_items, 9u);
  EXPECT_EQ(c.repeat_prob, 0.25);
  EXPECT_EQ(c.community_count, 3u);
  EXPECT_EQ(c.time_step, 5);
  EXPECT_EQ(c.seed, 11u);
}

TEST(SynthConfig, Rejects) {
  for (const char* text : {"bogus=1", "num_users", "num_users=abc", "repeat_prob=1.5",
                           "num_users=0", "num_users=100\nnum_train_interactions=50"}) {
    try {
      ParseSynthConfig(text);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig) << text;
    }
  }
  EXPECT_THROW(LoadSynthConfig("/nonexistent/synth.cfg"), Error);
}

}  // namespace
}  // namespace ctxgnn
