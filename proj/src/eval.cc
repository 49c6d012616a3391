#include "ctxgnn/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "ctxgnn/sampler.h"
#include "ctxgnn/serving.h"

namespace ctxgnn {
namespace {

void CheckInputs(const std::vector<std::vector<NodeId>>& rankings,
                 const std::vector<std::vector<NodeId>>& gt) {
  if (rankings.size() != gt.size()) {
    throw Error(ErrorKind::kShapeMismatch, std::to_string(rankings.size()) + " rankings vs " +
                                               std::to_string(gt.size()) + " ground-truth sets");
  }
  if (gt.empty()) throw Error(ErrorKind::kNoEligibleUsers, "nothing to evaluate");
  for (std::size_t u = 0; u < gt.size(); ++u) {
    if (gt[u].empty()) {
      throw Error(ErrorKind::kEmptyGroundTruth, "user at position " + std::to_string(u));
    }
  }
}

// Positions (0-based, within the first k distinct entries) that hit gt.
std::vector<std::size_t> HitPositions(const std::vector<NodeId>& ranking,
                                      const std::vector<NodeId>& gt, std::size_t k) {
  std::vector<NodeId> sorted_gt = gt;
  std::sort(sorted_gt.begin(), sorted_gt.end());
  std::vector<NodeId> seen;
  std::vector<std::size_t> hits;
  std::size_t pos = 0;
  for (NodeId item : ranking) {
    if (pos >= k) break;
    if (std::find(seen.begin(), seen.end(), item) != seen.end()) continue;
    seen.push_back(item);
    if (std::binary_search(sorted_gt.begin(), sorted_gt.end(), item)) hits.push_back(pos);
    ++pos;
  }
  return hits;
}

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

const char* SplitName(Split split) { return split == Split::kVal ? "val" : "test"; }

Split ParseSplit(const std::string& name) {
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorKind::kInvalidConfig, "split must be val or test, got '" + name + "'");
}

Timestamp SplitTime(const TaskSpec& task, Split split) {
  return split == Split::kVal ? task.val_cutoff : task.test_cutoff;
}

double MapAtK(const std::vector<std::vector<NodeId>>& rankings,
              const std::vector<std::vector<NodeId>>& gt, std::size_t k) {
  CheckInputs(rankings, gt);
  double total = 0;
  for (std::size_t u = 0; u < gt.size(); ++u) {
    const auto hits = HitPositions(rankings[u], gt[u], k);
    double ap = 0;
    for (std::size_t h = 0; h < hits.size(); ++h) {
      ap += static_cast<double>(h + 1) / static_cast<double>(hits[h] + 1);
    }
    total += ap / static_cast<double>(std::min(gt[u].size(), k));
  }
  return total / static_cast<double>(gt.size());
}

RankMetricValues RankMetrics(const std::vector<std::vector<NodeId>>& rankings,
                             const std::vector<std::vector<NodeId>>& gt, std::size_t k) {
  CheckInputs(rankings, gt);
  RankMetricValues m;
  for (std::size_t u = 0; u < gt.size(); ++u) {
    const auto hits = HitPositions(rankings[u], gt[u], k);
    double dcg = 0, ideal = 0;
    for (std::size_t p : hits) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    const std::size_t slots = std::min(gt[u].size(), k);
    for (std::size_t p = 0; p < slots; ++p) ideal += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    m.ndcg += dcg / ideal;
    m.hit_rate += hits.empty() ? 0.0 : 1.0;
    m.recall += static_cast<double>(hits.size()) / static_cast<double>(gt[u].size());
  }
  const auto n = static_cast<double>(gt.size());
  m.ndcg /= n;
  m.hit_rate /= n;
  m.recall /= n;
  return m;
}

std::vector<NodeId> EligibleUsers(const TemporalHeteroGraph& graph, const TaskSpec& task,
                                  Split split) {
  const Timestamp t = SplitTime(task, split);
  std::vector<NodeId> users;
  for (NodeId u = 0; u < graph.num_users(); ++u) {
    if (!GroundTruthItems(graph, u, t, task).empty()) users.push_back(u);
  }
  return users;
}

double LocalityScore(const TemporalHeteroGraph& graph, const TaskSpec& task, Split split,
                     std::size_t depth_k) {
  if (depth_k < 1 || depth_k > 3) {
    throw Error(ErrorKind::kInvalidConfig, "depth_k must be 1, 2 or 3");
  }
  const Timestamp t = SplitTime(task, split);
  const std::vector<NodeId> users = EligibleUsers(graph, task, split);
  if (users.empty()) throw Error(ErrorKind::kNoEligibleUsers, SplitName(split));
  const std::vector<std::size_t> fanouts(depth_k, kUnlimitedFanout);
  std::vector<double> frac(users.size());
  ParallelFor(users.size(), [&](std::size_t i) {
    const auto gt = GroundTruthItems(graph, users[i], t, task);
    const auto local = LocalItemSet(SampleSubgraph(graph, users[i], t, fanouts));
    std::size_t inside = 0;
    for (NodeId item : gt) inside += std::binary_search(local.begin(), local.end(), item);
    frac[i] = static_cast<double>(inside) / static_cast<double>(gt.size());
  });
  double total = 0;
  for (double f : frac) total += f;
  return total / static_cast<double>(users.size());
}

std::string FormatEvalReport(const EvalReport& r) {
  std::string out;
  out += "split=" + r.split + "\n";
  out += "k=" + std::to_string(r.k) + "\n";
  out += "num_users=" + std::to_string(r.num_users) + "\n";
  out += "map_at_k=" + Fmt(r.map) + "\n";
  out += "ndcg_at_k=" + Fmt(r.ndcg) + "\n";
  out += "hit_rate_at_k=" + Fmt(r.hit_rate) + "\n";
  out += "recall_at_k=" + Fmt(r.recall) + "\n";
  if (r.locality) {
    for (std::size_t i = 0; i < r.locality->size(); ++i) {
      out += "locality_s" + std::to_string(i + 1) + "=" + Fmt((*r.locality)[i]) + "\n";
    }
  }
  return out;
}

std::string FormatEvalCsv(const EvalReport& r) {
  std::string out = "metric,value\n";
  out += "map@" + std::to_string(r.k) + "," + Fmt(r.map) + "\n";
  out += "ndcg@" + std::to_string(r.k) + "," + Fmt(r.ndcg) + "\n";
  out += "hit_rate@" + std::to_string(r.k) + "," + Fmt(r.hit_rate) + "\n";
  out += "recall@" + std::to_string(r.k) + "," + Fmt(r.recall) + "\n";
  return out;
}

template <typename Real>
EvalReport EvaluateSplit(const ContextGnn<Real>& model, const ModelParams<Real>& params,
                         const TaskSpec& task, Split split, std::span<const std::size_t> fanouts,
                         const std::vector<NodeId>* users) {
  const auto& graph = model.graph();
  const Timestamp t = SplitTime(task, split);
  std::vector<NodeId> eval_users;
  std::vector<std::vector<NodeId>> gt;
  auto consider = [&](NodeId u) {
    auto items = GroundTruthItems(graph, u, t, task);
    if (items.empty()) return;
    eval_users.push_back(u);
    gt.push_back(std::move(items));
  };
  if (users) {
    std::vector<NodeId> subset = *users;
    std::sort(subset.begin(), subset.end());
    subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
    for (NodeId u : subset) consider(u);
  } else {
    for (NodeId u = 0; u < graph.num_users(); ++u) consider(u);
  }
  if (eval_users.empty()) throw Error(ErrorKind::kNoEligibleUsers, SplitName(split));

  const std::size_t k = task.eval_k;
  const Recommender<Real> rec(model, params, std::vector<std::size_t>(fanouts.begin(), fanouts.end()));
  std::vector<std::vector<NodeId>> rankings(eval_users.size());
  ParallelFor(eval_users.size(), [&](std::size_t i) {
    for (const ScoredItem& s : rec.Recommend(eval_users[i], t, k).items) rankings[i].push_back(s.item);
  });

  EvalReport report;
  report.split = SplitName(split);
  report.k = k;
  report.num_users = eval_users.size();
  report.map = MapAtK(rankings, gt, k);
  const RankMetricValues m = RankMetrics(rankings, gt, k);
  report.ndcg = m.ndcg;
  report.hit_rate = m.hit_rate;
  report.recall = m.recall;
  return report;
}

std::size_t WorkerThreads() {
  if (const char* env = std::getenv("CTXGNN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min(WorkerThreads(), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i + 1 < threads; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

template EvalReport EvaluateSplit(const ContextGnn<float>&, const ModelParams<float>&,
                                  const TaskSpec&, Split, std::span<const std::size_t>,
                                  const std::vector<NodeId>*);
template EvalReport EvaluateSplit(const ContextGnn<double>&, const ModelParams<double>&,
                                  const TaskSpec&, Split, std::span<const std::size_t>,
                                  const std::vector<NodeId>*);

}  // namespace ctxgnn
