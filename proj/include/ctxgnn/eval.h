#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxgnn/graph.h"
#include "ctxgnn/model.h"

namespace ctxgnn {

enum class Split { kVal, kTest };

const char* SplitName(Split split);
Split ParseSplit(const std::string& name);
Timestamp SplitTime(const TaskSpec& task, Split split);

// gt lists must be non-empty (EmptyGroundTruth otherwise). Duplicate ids in
// a ranking count once.
double MapAtK(const std::vector<std::vector<NodeId>>& rankings,
              const std::vector<std::vector<NodeId>>& gt, std::size_t k);

struct RankMetricValues {
  double ndcg = 0;
  double hit_rate = 0;
  double recall = 0;
};

RankMetricValues RankMetrics(const std::vector<std::vector<NodeId>>& rankings,
                             const std::vector<std::vector<NodeId>>& gt, std::size_t k);

// Mean over users with non-empty ground truth of the fraction of it inside
// the exact depth_k-hop neighborhood at the split time.
double LocalityScore(const TemporalHeteroGraph& graph, const TaskSpec& task, Split split,
                     std::size_t depth_k);

// Users with non-empty ground truth at the split time, ascending.
std::vector<NodeId> EligibleUsers(const TemporalHeteroGraph& graph, const TaskSpec& task,
                                  Split split);

struct EvalReport {
  std::string split;
  std::size_t k = 0;
  std::size_t num_users = 0;
  double map = 0;
  double ndcg = 0;
  double hit_rate = 0;
  double recall = 0;
  std::optional<std::vector<double>> locality;  // s_1, s_2, s_3

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

std::string FormatEvalReport(const EvalReport& report);
// metric,value lines.
std::string FormatEvalCsv(const EvalReport& report);

// Ranks every eligible user (or the eligible members of `users`) at the
// split time and aggregates in ascending user order.
template <typename Real>
EvalReport EvaluateSplit(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                         const TaskSpec& task, Split split, std::span<const std::size_t> fanouts,
                         const std::vector<NodeId>* users = nullptr);

// Runs fn(i) for i in [0, n) on up to CTXGNN_THREADS threads (default: the
// hardware concurrency). Each index is handled exactly once.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);
std::size_t WorkerThreads();

}  // namespace ctxgnn
