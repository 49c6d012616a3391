#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctxgnn/graph.h"
#include "ctxgnn/model.h"
#include "ctxgnn/sampler.h"
#include "ctxgnn/tensor.h"

namespace ctxgnn {

using Rng = std::mt19937_64;

struct TrainConfig {
  ModelConfig model;
  std::vector<std::size_t> fanouts{12, 12};
  std::size_t classes_c = 4096;
  std::size_t batch_size = 256;
  double lr = 0.01;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  // Most recent training snapshots to use; 0 means all of them.
  std::size_t train_snapshots = 0;

  void Validate() const;
};

// Flat key=value text; '#' starts a comment. Unknown keys are rejected.
TrainConfig ParseTrainConfig(const std::string& text);
TrainConfig LoadTrainConfig(const std::string& path);
std::string FormatTrainConfig(const TrainConfig& config);

// One softmax row: a user at a snapshot time and one item it links to in
// the following interval.
struct TrainRow {
  NodeId user;
  Timestamp seed_time;
  NodeId item;

  friend bool operator==(const TrainRow&, const TrainRow&) = default;
};

// Snapshot boundaries sit interval apart and end at val_cutoff; every target
// edge at time t <= val_cutoff becomes a row at the latest boundary < t.
// Distinct (user, boundary, item) only, sorted by (boundary, user, item).
std::vector<TrainRow> BuildTrainingRows(const TemporalHeteroGraph& graph, const TaskSpec& task,
                                        std::size_t train_snapshots = 0);

// All positives of a (user, seed time), used to mask alternative positives.
class PositiveIndex {
 public:
  explicit PositiveIndex(std::span<const TrainRow> rows);
  const std::vector<NodeId>& Positives(NodeId user, Timestamp t) const;

 private:
  std::map<std::pair<NodeId, Timestamp>, std::vector<NodeId>> positives_;
  std::vector<NodeId> empty_;
};

struct BatchClasses {
  std::vector<NodeId> class_ids;
  std::unordered_map<NodeId, std::uint32_t> position_of;
  std::vector<std::uint32_t> target;               // per row
  std::vector<std::vector<std::uint32_t>> masked;  // per row
};

// Priority order: every ground-truth item of the batch, then the union of
// subgraph items (uniformly subsampled on overflow), then a uniform fill
// without replacement from the remaining items, up to min(C, num_items).
BatchClasses SampleClasses(std::span<const TrainRow> batch, std::span<const NodeId> subgraph_items,
                           std::size_t c, std::size_t num_items, Rng& rng);

// Fills target and masked columns. Alternative positives of the same
// (user, seed time) that are in the class set get masked.
void AssignRows(BatchClasses& classes, std::span<const TrainRow> batch,
                const PositiveIndex& positives);

// Mean sampled-softmax loss of a batch with fixed classes; accumulates the
// gradient into `grads` when non-null. One GNN forward per distinct
// (user, seed time).
template <typename Real>
double BatchLoss(const ContextGnn<Real>& model, std::span<const TrainRow> batch,
                 const BatchClasses& classes, std::span<const Subgraph> subgraphs,
                 std::span<const std::uint32_t> group_of_row, const ModelParams<Real>& params,
                 ModelParams<Real>* grads);

// Groups rows by (user, seed time) in first-seen order and samples one
// bidirectional subgraph per group.
struct BatchGroups {
  std::vector<Subgraph> subgraphs;
  std::vector<std::uint32_t> group_of_row;
};
BatchGroups GroupBatch(const TemporalHeteroGraph& graph, std::span<const TrainRow> batch,
                       std::span<const std::size_t> fanouts);

struct StepResult {
  double loss = 0;
  std::size_t rows_used = 0;
};

// Samples classes, computes the loss and applies one Adam step over every
// parameter.
template <typename Real>
StepResult TrainStep(const ContextGnn<Real>& model, std::span<const TrainRow> batch,
                     const PositiveIndex& positives, const TrainConfig& config,
                     ModelParams<Real>& params, AdamState<Real>& adam, Rng& rng);

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> val_map;
  int best_epoch = -1;
  std::uint64_t seed = 0;
  std::vector<double> epoch_seconds;
};

std::string FormatTrainReport(const TrainReport& report);

template <typename Real>
std::pair<ModelParams<Real>, TrainReport> Fit(const TemporalHeteroGraph& graph,
                                              const TaskSpec& task, const TrainConfig& config);

// Checkpoint layout: "CGN1", u32 version, u32-length config text, u32
// parameter count, then per parameter (u32-length name, u8 dtype code,
// u32 rank, u64 dims) and finally the raw little-endian arrays in the same
// order.
template <typename Real>
void SaveCheckpoint(const ModelParams<Real>& params, const TrainConfig& config,
                    const std::string& path);

template <typename Real>
std::pair<ModelParams<Real>, TrainConfig> LoadCheckpoint(const std::string& path);

Precision CheckpointPrecision(const std::string& path);

template <typename Real>
std::vector<std::uint8_t> EncodeCheckpoint(const ModelParams<Real>& params,
                                           const TrainConfig& config);
template <typename Real>
std::pair<ModelParams<Real>, TrainConfig> DecodeCheckpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace ctxgnn
