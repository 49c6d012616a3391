#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctxgnn/graph.h"

namespace ctxgnn {

// Local edge list of one directed edge type inside a subgraph.
struct LocalEdges {
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  std::vector<Timestamp> time;

  std::size_t size() const { return src.size(); }
};

// A temporal k-hop neighborhood around one seed user. Edge slots
// [0, E) hold the stored edge types, [E, 2E) their synthesized reverses.
struct Subgraph {
  NodeId seed_user = 0;
  std::uint32_t seed_local = 0;
  Timestamp seed_time = 0;
  std::size_t depth = 0;  // number of sampled hops
  TypeId user_type = 0;
  TypeId item_type = 0;
  std::vector<std::vector<NodeId>> nodes;        // per node type, local -> global
  std::vector<std::vector<std::uint8_t>> hop;    // per node type, BFS depth
  std::vector<LocalEdges> edges;                 // per directed edge type
  bool bidirectional = false;

  std::size_t num_nodes() const;
  std::size_t num_edges() const;
};

// Directed edge types: the stored ones followed by their reverses.
std::size_t NumDirectedEdgeTypes(const TemporalHeteroGraph& graph);
TypeId DirectedSrcType(const TemporalHeteroGraph& graph, std::size_t r);
TypeId DirectedDstType(const TemporalHeteroGraph& graph, std::size_t r);
std::string DirectedEdgeName(const TemporalHeteroGraph& graph, std::size_t r);

// Level-synchronous temporal BFS. Hop j expands each frontier node along
// every incident edge type in both directions, keeping the fanouts[j] most
// recent edges with timestamp <= t. A node keeps the first hop it is seen at.
Subgraph SampleSubgraph(const TemporalHeteroGraph& graph, NodeId seed_user, Timestamp t,
                        std::span<const std::size_t> fanouts);

// Mirrors every edge into the reverse slot. Idempotent on the edge multiset.
Subgraph Bidirectionalize(Subgraph sub);

// Global ids of the item-type nodes in the subgraph, ascending.
std::vector<NodeId> LocalItemSet(const Subgraph& sub);

}  // namespace ctxgnn
