#include "ctxgnn/sampler.h"

#include <algorithm>
#include <numeric>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace ctxgnn {

std::size_t Subgraph::num_nodes() const {
  std::size_t n = 0;
  for (const auto& v : nodes) n += v.size();
  return n;
}

std::size_t Subgraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

std::size_t NumDirectedEdgeTypes(const TemporalHeteroGraph& graph) {
  return 2 * graph.edge_types().size();
}

TypeId DirectedSrcType(const TemporalHeteroGraph& graph, std::size_t r) {
  const std::size_t e = graph.edge_types().size();
  return r < e ? graph.edge_type(r).src_type : graph.edge_type(r - e).dst_type;
}

TypeId DirectedDstType(const TemporalHeteroGraph& graph, std::size_t r) {
  const std::size_t e = graph.edge_types().size();
  return r < e ? graph.edge_type(r).dst_type : graph.edge_type(r - e).src_type;
}

std::string DirectedEdgeName(const TemporalHeteroGraph& graph, std::size_t r) {
  const std::size_t e = graph.edge_types().size();
  return r < e ? graph.edge_type(r).key.rel : "rev_" + graph.edge_type(r - e).key.rel;
}

Subgraph SampleSubgraph(const TemporalHeteroGraph& graph, NodeId seed_user, Timestamp t,
                        std::span<const std::size_t> fanouts) {
  if (seed_user >= graph.num_users()) {
    throw Error(ErrorKind::kInvalidSeed, "seed user " + std::to_string(seed_user) + " >= " +
                                             std::to_string(graph.num_users()));
  }
  if (fanouts.empty()) throw Error(ErrorKind::kInvalidConfig, "at least one hop is required");

  const std::size_t num_types = graph.node_types().size();
  const std::size_t num_edge_types = graph.edge_types().size();
  Subgraph sub;
  sub.seed_user = seed_user;
  sub.seed_time = t;
  sub.depth = fanouts.size();
  sub.user_type = graph.user_type();
  sub.item_type = graph.item_type();
  sub.nodes.resize(num_types);
  sub.hop.resize(num_types);
  sub.edges.resize(2 * num_edge_types);

  std::vector<std::unordered_map<NodeId, std::uint32_t>> local_of(num_types);
  std::vector<std::unordered_set<std::uint32_t>> taken_edges(num_edge_types);

  auto add_node = [&](TypeId type, NodeId global, std::uint8_t hop) -> std::pair<std::uint32_t, bool> {
    auto [it, inserted] =
        local_of[type].try_emplace(global, static_cast<std::uint32_t>(sub.nodes[type].size()));
    if (inserted) {
      sub.nodes[type].push_back(global);
      sub.hop[type].push_back(hop);
    }
    return {it->second, inserted};
  };

  using FrontierNode = std::pair<TypeId, std::uint32_t>;
  std::vector<FrontierNode> frontier{{graph.user_type(), add_node(graph.user_type(), seed_user, 0).first}};
  for (std::size_t j = 0; j < fanouts.size(); ++j) {
    std::vector<FrontierNode> next;
    const auto hop = static_cast<std::uint8_t>(j + 1);
    for (const auto& [type, local] : frontier) {
      const NodeId global = sub.nodes[type][local];
      for (TypeId e = 0; e < num_edge_types; ++e) {
        const EdgeTypeStore& et = graph.edge_type(e);
        for (Direction dir : {Direction::kForward, Direction::kReverse}) {
          const TypeId from = dir == Direction::kForward ? et.src_type : et.dst_type;
          const TypeId to = dir == Direction::kForward ? et.dst_type : et.src_type;
          if (from != type) continue;
          for (const Neighbor& n : NeighborsBefore(graph, global, e, t, fanouts[j], dir)) {
            auto [nbr_local, fresh] = add_node(to, n.id, hop);
            if (fresh) next.emplace_back(to, nbr_local);
            if (!taken_edges[e].insert(n.edge_id).second) continue;
            LocalEdges& out = sub.edges[e];
            if (dir == Direction::kForward) {
              out.src.push_back(local);
              out.dst.push_back(nbr_local);
            } else {
              out.src.push_back(nbr_local);
              out.dst.push_back(local);
            }
            out.time.push_back(n.time);
          }
        }
      }
    }
    frontier = std::move(next);
  }
  return sub;
}

namespace {

using EdgeTriple = std::tuple<std::uint32_t, std::uint32_t, Timestamp>;

std::vector<EdgeTriple> Triples(const LocalEdges& e, bool flip) {
  std::vector<EdgeTriple> out;
  out.reserve(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    out.emplace_back(flip ? e.dst[i] : e.src[i], flip ? e.src[i] : e.dst[i], e.time[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

LocalEdges FromTriples(const std::vector<EdgeTriple>& triples, bool flip) {
  LocalEdges e;
  for (const auto& [a, b, t] : triples) {
    e.src.push_back(flip ? b : a);
    e.dst.push_back(flip ? a : b);
    e.time.push_back(t);
  }
  return e;
}

}  // namespace

Subgraph Bidirectionalize(Subgraph sub) {
  const std::size_t num_edge_types = sub.edges.size() / 2;
  for (std::size_t e = 0; e < num_edge_types; ++e) {
    const auto forward = Triples(sub.edges[e], false);
    const auto mirrored = Triples(sub.edges[e + num_edge_types], true);
    // Multiset union by max multiplicity, so an already mirrored pair is
    // left as is.
    std::vector<EdgeTriple> merged;
    std::set_union(forward.begin(), forward.end(), mirrored.begin(), mirrored.end(),
                   std::back_inserter(merged));
    sub.edges[e] = FromTriples(merged, false);
    sub.edges[e + num_edge_types] = FromTriples(merged, true);
  }
  sub.bidirectional = true;
  return sub;
}

std::vector<NodeId> LocalItemSet(const Subgraph& sub) {
  std::vector<NodeId> items = sub.nodes[sub.item_type];
  std::sort(items.begin(), items.end());
  return items;
}

}  // namespace ctxgnn
