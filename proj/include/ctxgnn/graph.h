#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ctxgnn/error.h"

namespace ctxgnn {

using NodeId = std::uint32_t;
using Timestamp = std::int64_t;
using TypeId = std::uint32_t;

inline constexpr std::size_t kUnlimitedFanout = std::numeric_limits<std::size_t>::max();

struct EdgeTypeKey {
  std::string src;
  std::string rel;
  std::string dst;

  friend bool operator==(const EdgeTypeKey&, const EdgeTypeKey&) = default;
};

struct TaskSpec {
  EdgeTypeKey target_edge;
  std::int64_t interval = 0;  // seconds
  Timestamp val_cutoff = 0;
  Timestamp test_cutoff = 0;
  std::uint32_t eval_k = 10;

  void Validate() const;
};

// Declares which node and edge types exist and which two play the user and
// item roles.
struct GraphSchema {
  std::vector<std::string> node_types;
  std::vector<EdgeTypeKey> edge_types;
  std::string user_type;
  std::string item_type;
};

// Raw tabular input. A node table either has a header with an `id` column
// plus feature columns, or (for feature-less types) only a node count.
struct NodeTable {
  std::string type;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::optional<std::size_t> count;
};

struct EdgeRow {
  std::string src_id;
  std::string dst_id;
  std::string timestamp;

  friend bool operator==(const EdgeRow&, const EdgeRow&) = default;
};

struct EdgeTable {
  EdgeTypeKey key;
  std::vector<EdgeRow> rows;
};

// How one raw column maps onto encoded feature columns. Numeric columns are
// standardized into a single column; categoricals become a one-hot block
// whose slot 0 is reserved for missing or unseen values.
struct FeatureColumn {
  std::string name;
  bool categorical = false;
  double mean = 0.0;
  double stddev = 1.0;
  std::vector<std::string> categories;  // slot i + 1
  std::size_t offset = 0;

  std::size_t width() const { return categorical ? categories.size() + 1 : 1; }
};

struct FeatureCodec {
  // Indexed like GraphSchema::node_types.
  std::vector<std::vector<FeatureColumn>> columns;
};

struct NodeTypeStore {
  std::string name;
  std::size_t count = 0;
  std::vector<FeatureColumn> columns;
  std::size_t feature_width = 0;
  std::vector<double> features;  // count x feature_width, row-major

  const double* feature_row(NodeId id) const { return features.data() + id * feature_width; }
};

// Compressed adjacency for one direction of one edge type. Each node's
// slice is sorted ascending by timestamp, ties in input row order.
struct Adjacency {
  std::vector<std::uint64_t> offsets;
  std::vector<NodeId> neighbor;
  std::vector<Timestamp> time;
  std::vector<std::uint32_t> edge_id;  // row index in the edge table

  std::size_t degree(NodeId n) const { return offsets[n + 1] - offsets[n]; }
};

struct EdgeTypeStore {
  EdgeTypeKey key;
  TypeId src_type = 0;
  TypeId dst_type = 0;
  std::size_t num_edges = 0;
  Adjacency out;  // indexed by source node
  Adjacency in;   // indexed by destination node, for traversal against the edge direction
};

enum class Direction { kForward, kReverse };

struct Neighbor {
  NodeId id;
  Timestamp time;
  std::uint32_t edge_id;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

class TemporalHeteroGraph {
 public:
  TemporalHeteroGraph() = default;

  const std::vector<NodeTypeStore>& node_types() const { return node_types_; }
  const std::vector<EdgeTypeStore>& edge_types() const { return edge_types_; }
  const NodeTypeStore& node_type(TypeId t) const { return node_types_.at(t); }
  const EdgeTypeStore& edge_type(TypeId e) const { return edge_types_.at(e); }

  TypeId user_type() const { return user_type_; }
  TypeId item_type() const { return item_type_; }
  std::size_t num_users() const { return node_types_[user_type_].count; }
  std::size_t num_items() const { return node_types_[item_type_].count; }

  TypeId NodeTypeId(const std::string& name) const;
  TypeId EdgeTypeId(const EdgeTypeKey& key) const;
  FeatureCodec codec() const;

  // Deterministic byte image of the whole index (also the on-disk cache).
  std::vector<std::uint8_t> Serialize() const;
  static TemporalHeteroGraph Deserialize(const std::vector<std::uint8_t>& bytes);

 private:
  friend TemporalHeteroGraph BuildGraph(const GraphSchema&, const std::vector<NodeTable>&,
                                        const std::vector<EdgeTable>&, const FeatureCodec*);

  std::vector<NodeTypeStore> node_types_;
  std::vector<EdgeTypeStore> edge_types_;
  TypeId user_type_ = 0;
  TypeId item_type_ = 0;
};

// Builds the immutable graph. When `frozen` is given, its standardization
// statistics and category dictionaries are reused instead of refit.
TemporalHeteroGraph BuildGraph(const GraphSchema& schema, const std::vector<NodeTable>& nodes,
                               const std::vector<EdgeTable>& edges,
                               const FeatureCodec* frozen = nullptr);

// The at most `fanout` most recent neighbors with timestamp <= t, most
// recent first.
std::vector<Neighbor> NeighborsBefore(const TemporalHeteroGraph& graph, NodeId node,
                                      TypeId edge_type, Timestamp t, std::size_t fanout,
                                      Direction dir = Direction::kForward);

// Distinct items the user links to through the task's target edge type in
// the window (t, t + interval], ascending.
std::vector<NodeId> GroundTruthItems(const TemporalHeteroGraph& graph, NodeId user, Timestamp t,
                                     const TaskSpec& task);

}  // namespace ctxgnn
