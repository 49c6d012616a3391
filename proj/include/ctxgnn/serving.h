#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxgnn/graph.h"
#include "ctxgnn/model.h"
#include "ctxgnn/tensor.h"

namespace ctxgnn {

struct ScoredRanking {
  NodeId user = 0;
  Timestamp seed_time = 0;
  std::vector<ScoredItem> items;  // score descending, ties by ascending id
};

// Exact full-scan top-k by inner product. `exclude` must be sorted.
template <typename Real>
std::vector<std::pair<NodeId, double>> MipsTopK(const Tensor<Real>& item_matrix,
                                                std::span<const Real> query, std::size_t k,
                                                std::span<const NodeId> exclude = {});

// (score desc, id asc); the single ordering shared by every ranking path.
inline bool RanksBefore(double score_a, NodeId a, double score_b, NodeId b) {
  return score_a != score_b ? score_a > score_b : a < b;
}

// Holds the tower-side item matrix so repeated requests against the same
// parameters only pay for the per-user subgraph.
template <typename Real>
class Recommender {
 public:
  Recommender(const ContextGnn<Real>& model, const ModelParams<Real>& params,
              std::vector<std::size_t> fanouts);

  ScoredRanking Recommend(NodeId user, Timestamp t, std::size_t k) const;

  const Tensor<Real>& item_matrix() const { return item_matrix_; }

 private:
  const ContextGnn<Real>* model_;
  const ModelParams<Real>* params_;
  std::vector<std::size_t> fanouts_;
  Tensor<Real> item_matrix_;
};

template <typename Real>
ScoredRanking RecommendTopK(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                            std::span<const std::size_t> fanouts, NodeId user, Timestamp t,
                            std::size_t k);

// Brute-force reference: scores every item through ScoreCandidates and sorts.
template <typename Real>
ScoredRanking RecommendExhaustive(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                                  std::span<const std::size_t> fanouts, NodeId user, Timestamp t,
                                  std::size_t k);

// user_id,rank,item_id,score,source rows, rank starting at 1. No header.
std::string FormatRankingCsv(const ScoredRanking& ranking);

}  // namespace ctxgnn
