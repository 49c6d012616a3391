#include "ctxgnn/serving.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ctxgnn/sampler.h"

namespace ctxgnn {
namespace {

void CheckUser(const TemporalHeteroGraph& graph, NodeId user) {
  if (user >= graph.num_users()) {
    throw Error(ErrorKind::kInvalidUser,
                "user " + std::to_string(user) + " >= " + std::to_string(graph.num_users()));
  }
}

void SortAndTruncate(std::vector<ScoredItem>& items, std::size_t k) {
  auto before = [](const ScoredItem& a, const ScoredItem& b) {
    return RanksBefore(a.score, a.item, b.score, b.item);
  };
  if (items.size() > k) {
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(),
                      before);
    items.resize(k);
  } else {
    std::sort(items.begin(), items.end(), before);
  }
}

template <typename Real>
GnnOutput<Real> Readout(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                        const Subgraph& sub) {
  return model.GnnForward(sub, model.InjectContext(model.EncodeInputs(sub, params), sub, params),
                          params);
}

}  // namespace

template <typename Real>
std::vector<std::pair<NodeId, double>> MipsTopK(const Tensor<Real>& item_matrix,
                                                std::span<const Real> query, std::size_t k,
                                                std::span<const NodeId> exclude) {
  std::vector<std::pair<NodeId, double>> scored;
  if (k == 0) return scored;
  const std::size_t n = item_matrix.empty() ? 0 : item_matrix.rows();
  scored.reserve(n);
  std::size_t skip = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (skip < exclude.size() && exclude[skip] < i) ++skip;
    if (skip < exclude.size() && exclude[skip] == i) continue;
    const Real s = Dot<Real>(query, item_matrix.row(i));
    scored.emplace_back(static_cast<NodeId>(i), static_cast<double>(s));
  }
  auto before = [](const auto& a, const auto& b) {
    return RanksBefore(a.second, a.first, b.second, b.first);
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), before);
  scored.resize(keep);
  return scored;
}

template <typename Real>
Recommender<Real>::Recommender(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                               std::vector<std::size_t> fanouts)
    : model_(&model), params_(&params), fanouts_(std::move(fanouts)) {
  model.CheckParams(params);
  if (!model.config().pair_only) {
    std::vector<NodeId> all(model.graph().num_items());
    std::iota(all.begin(), all.end(), NodeId{0});
    item_matrix_ = model.TowerEmbed(params, all).out;
  }
}

template <typename Real>
ScoredRanking Recommender<Real>::Recommend(NodeId user, Timestamp t, std::size_t k) const {
  const auto& graph = model_->graph();
  const auto& config = model_->config();
  CheckUser(graph, user);
  const Subgraph sub = Bidirectionalize(SampleSubgraph(graph, user, t, fanouts_));
  const GnnOutput<Real> out = Readout(*model_, *params_, sub);
  const std::span<const Real> query = out.user.values();

  ScoredRanking ranking{user, t, {}};
  std::vector<NodeId> local;
  if (!config.tower_only) {
    const Real offset = model_->FusionOffset(query, *params_);
    const auto& items = sub.nodes[sub.item_type];
    for (std::size_t i = 0; i < items.size(); ++i) {
      const Real s = Dot<Real>(query, out.items.row(i)) + offset;
      ranking.items.push_back({items[i], static_cast<double>(s), ScoreSource::kPair});
    }
    local = LocalItemSet(sub);
  }
  if (!config.pair_only) {
    for (const auto& [id, s] : MipsTopK(item_matrix_, query, k, local)) {
      ranking.items.push_back({id, s, ScoreSource::kTower});
    }
  }
  SortAndTruncate(ranking.items, k);
  return ranking;
}

template <typename Real>
ScoredRanking RecommendTopK(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                            std::span<const std::size_t> fanouts, NodeId user, Timestamp t,
                            std::size_t k) {
  CheckUser(model.graph(), user);
  Recommender<Real> rec(model, params, std::vector<std::size_t>(fanouts.begin(), fanouts.end()));
  return rec.Recommend(user, t, k);
}

template <typename Real>
ScoredRanking RecommendExhaustive(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                                  std::span<const std::size_t> fanouts, NodeId user, Timestamp t,
                                  std::size_t k) {
  CheckUser(model.graph(), user);
  const Subgraph sub = Bidirectionalize(SampleSubgraph(model.graph(), user, t, fanouts));
  const GnnOutput<Real> out = Readout(model, params, sub);
  std::vector<NodeId> all(model.graph().num_items());
  std::iota(all.begin(), all.end(), NodeId{0});
  ScoredRanking ranking{user, t, model.ScoreCandidates(out, sub, params, all)};
  // pair_only leaves non-local items at -inf; they are not recommendable.
  std::erase_if(ranking.items, [](const ScoredItem& s) { return std::isinf(s.score) && s.score < 0; });
  SortAndTruncate(ranking.items, k);
  return ranking;
}

std::string FormatRankingCsv(const ScoredRanking& ranking) {
  std::string out;
  char buf[64];
  for (std::size_t r = 0; r < ranking.items.size(); ++r) {
    const ScoredItem& s = ranking.items[r];
    std::snprintf(buf, sizeof(buf), "%.9g", s.score);
    out += std::to_string(ranking.user) + "," + std::to_string(r + 1) + "," +
           std::to_string(s.item) + "," + buf + "," +
           (s.source == ScoreSource::kPair ? "pair" : "tower") + "\n";
  }
  return out;
}

#define CTXGNN_INSTANTIATE(Real)                                                                 \
  template std::vector<std::pair<NodeId, double>> MipsTopK(const Tensor<Real>&,                  \
                                                           std::span<const Real>, std::size_t,   \
                                                           std::span<const NodeId>);             \
  template class Recommender<Real>;                                                              \
  template ScoredRanking RecommendTopK(const ContextGnn<Real>&, const ModelParams<Real>&,        \
                                       std::span<const std::size_t>, NodeId, Timestamp,         \
                                       std::size_t);                                             \
  template ScoredRanking RecommendExhaustive(const ContextGnn<Real>&, const ModelParams<Real>&,  \
                                             std::span<const std::size_t>, NodeId, Timestamp,   \
                                             std::size_t);

CTXGNN_INSTANTIATE(float)
CTXGNN_INSTANTIATE(double)

}  // namespace ctxgnn
