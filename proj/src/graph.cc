#include "ctxgnn/graph.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <unordered_map>

#include "bytes.h"

namespace ctxgnn {
namespace {

constexpr std::uint32_t kGraphMagic = 0x48475443;  // "CTGH"
constexpr std::uint32_t kGraphVersion = 1;

std::string KeyString(const EdgeTypeKey& k) { return k.src + ":" + k.rel + ":" + k.dst; }

bool ParseInt64(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool ParseDouble(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::vector<FeatureColumn> FitColumns(const NodeTable& table, std::size_t id_col) {
  std::vector<FeatureColumn> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == id_col) continue;
    FeatureColumn col;
    col.name = table.header[c];
    bool numeric = true;
    double sum = 0, sum_sq = 0;
    std::size_t present = 0;
    for (const auto& row : table.rows) {
      const std::string& cell = row[c];
      if (cell.empty()) continue;
      double v;
      if (!ParseDouble(cell, v)) {
        numeric = false;
        break;
      }
      sum += v;
      sum_sq += v * v;
      ++present;
    }
    if (numeric) {
      if (present > 0) {
        col.mean = sum / static_cast<double>(present);
        const double var = std::max(0.0, sum_sq / static_cast<double>(present) - col.mean * col.mean);
        col.stddev = var > 1e-24 ? std::sqrt(var) : 1.0;
      }
    } else {
      col.categorical = true;
      std::unordered_map<std::string, bool> seen;
      for (const auto& row : table.rows) {
        const std::string& cell = row[c];
        if (cell.empty() || seen.count(cell)) continue;
        seen.emplace(cell, true);
        col.categories.push_back(cell);
      }
    }
    cols.push_back(std::move(col));
  }
  return cols;
}

void EncodeFeatures(const NodeTable& table, std::size_t id_col, NodeTypeStore& store) {
  std::size_t offset = 0;
  for (auto& col : store.columns) {
    col.offset = offset;
    offset += col.width();
  }
  store.feature_width = offset;
  store.features.assign(store.count * store.feature_width, 0.0);
  if (table.header.empty()) return;

  std::vector<std::ptrdiff_t> source(store.columns.size(), -1);
  for (std::size_t k = 0; k < store.columns.size(); ++k) {
    auto it = std::find(table.header.begin(), table.header.end(), store.columns[k].name);
    if (it != table.header.end()) source[k] = std::distance(table.header.begin(), it);
  }
  for (const auto& row : table.rows) {
    std::int64_t id = 0;
    ParseInt64(row[id_col], id);
    double* out = store.features.data() + static_cast<std::size_t>(id) * store.feature_width;
    for (std::size_t k = 0; k < store.columns.size(); ++k) {
      const FeatureColumn& col = store.columns[k];
      if (source[k] < 0) continue;
      const std::string& cell = row[static_cast<std::size_t>(source[k])];
      if (col.categorical) {
        std::size_t slot = 0;
        auto it = std::find(col.categories.begin(), col.categories.end(), cell);
        if (!cell.empty() && it != col.categories.end()) {
          slot = static_cast<std::size_t>(std::distance(col.categories.begin(), it)) + 1;
        }
        out[col.offset + slot] = 1.0;
      } else {
        double v;
        if (ParseDouble(cell, v)) out[col.offset] = (v - col.mean) / col.stddev;
      }
    }
  }
}

Adjacency BuildAdjacency(std::size_t num_nodes, const std::vector<NodeId>& key,
                         const std::vector<NodeId>& other, const std::vector<Timestamp>& time) {
  const std::size_t m = key.size();
  std::vector<std::uint32_t> order(m);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (key[a] != key[b]) return key[a] < key[b];
    return time[a] < time[b];
  });
  Adjacency adj;
  adj.offsets.assign(num_nodes + 1, 0);
  for (NodeId k : key) adj.offsets[k + 1] += 1;
  for (std::size_t i = 0; i < num_nodes; ++i) adj.offsets[i + 1] += adj.offsets[i];
  adj.neighbor.reserve(m);
  adj.time.reserve(m);
  adj.edge_id.reserve(m);
  for (std::uint32_t e : order) {
    adj.neighbor.push_back(other[e]);
    adj.time.push_back(time[e]);
    adj.edge_id.push_back(e);
  }
  return adj;
}

void PutAdjacency(internal::ByteWriter& w, const Adjacency& a) {
  w.PutVector(a.offsets);
  w.PutVector(a.neighbor);
  w.PutVector(a.time);
  w.PutVector(a.edge_id);
}

Adjacency GetAdjacency(internal::ByteReader& r) {
  Adjacency a;
  a.offsets = r.GetVector<std::uint64_t>();
  a.neighbor = r.GetVector<NodeId>();
  a.time = r.GetVector<Timestamp>();
  a.edge_id = r.GetVector<std::uint32_t>();
  return a;
}

}  // namespace

void TaskSpec::Validate() const {
  if (!(val_cutoff < test_cutoff)) {
    throw Error(ErrorKind::kInvalidConfig, "val_cutoff must precede test_cutoff");
  }
  if (interval <= 0) throw Error(ErrorKind::kInvalidConfig, "interval must be positive");
  if (eval_k < 1) throw Error(ErrorKind::kInvalidConfig, "eval_k must be >= 1");
}

TypeId TemporalHeteroGraph::NodeTypeId(const std::string& name) const {
  for (TypeId t = 0; t < node_types_.size(); ++t) {
    if (node_types_[t].name == name) return t;
  }
  throw Error(ErrorKind::kUnknownType, "node type '" + name + "'");
}

TypeId TemporalHeteroGraph::EdgeTypeId(const EdgeTypeKey& key) const {
  for (TypeId e = 0; e < edge_types_.size(); ++e) {
    if (edge_types_[e].key == key) return e;
  }
  throw Error(ErrorKind::kUnknownType, "edge type " + KeyString(key));
}

FeatureCodec TemporalHeteroGraph::codec() const {
  FeatureCodec c;
  for (const auto& nt : node_types_) c.columns.push_back(nt.columns);
  return c;
}

TemporalHeteroGraph BuildGraph(const GraphSchema& schema, const std::vector<NodeTable>& nodes,
                               const std::vector<EdgeTable>& edges, const FeatureCodec* frozen) {
  TemporalHeteroGraph g;
  auto type_index = [&](const std::string& name) -> TypeId {
    auto it = std::find(schema.node_types.begin(), schema.node_types.end(), name);
    if (it == schema.node_types.end()) {
      throw Error(ErrorKind::kUnknownType, "node type '" + name + "' is not declared");
    }
    return static_cast<TypeId>(std::distance(schema.node_types.begin(), it));
  };
  g.user_type_ = type_index(schema.user_type);
  g.item_type_ = type_index(schema.item_type);
  if (g.user_type_ == g.item_type_) {
    throw Error(ErrorKind::kInvalidConfig, "user and item types must differ");
  }
  if (frozen && frozen->columns.size() != schema.node_types.size()) {
    throw Error(ErrorKind::kInvalidConfig, "frozen feature codec does not match schema");
  }

  g.node_types_.resize(schema.node_types.size());
  std::vector<bool> seen_table(schema.node_types.size(), false);
  for (const auto& table : nodes) {
    const TypeId t = type_index(table.type);
    if (seen_table[t]) throw Error(ErrorKind::kBadTable, "duplicate node table for " + table.type);
    seen_table[t] = true;
    NodeTypeStore& store = g.node_types_[t];
    store.name = table.type;
    std::size_t id_col = 0;
    if (table.header.empty()) {
      store.count = table.count.value_or(0);
    } else {
      auto it = std::find(table.header.begin(), table.header.end(), "id");
      if (it == table.header.end()) {
        throw Error(ErrorKind::kBadTable, "node table " + table.type + " lacks an id column");
      }
      id_col = static_cast<std::size_t>(std::distance(table.header.begin(), it));
      store.count = table.rows.size();
      std::vector<bool> present(store.count, false);
      for (const auto& row : table.rows) {
        std::int64_t id;
        if (row.size() != table.header.size()) {
          throw Error(ErrorKind::kBadTable, "ragged row in node table " + table.type);
        }
        if (!ParseInt64(row[id_col], id) || id < 0 || static_cast<std::size_t>(id) >= store.count ||
            present[static_cast<std::size_t>(id)]) {
          throw Error(ErrorKind::kBadTable,
                      "node ids of " + table.type + " must be dense 0-based integers");
        }
        present[static_cast<std::size_t>(id)] = true;
      }
    }
    store.columns = frozen ? frozen->columns[t] : FitColumns(table, id_col);
    EncodeFeatures(table, id_col, store);
  }
  for (TypeId t = 0; t < schema.node_types.size(); ++t) {
    if (!seen_table[t]) {
      g.node_types_[t].name = schema.node_types[t];
      if (frozen) g.node_types_[t].columns = frozen->columns[t];
      EncodeFeatures(NodeTable{}, 0, g.node_types_[t]);
    }
  }

  for (const auto& key : schema.edge_types) {
    EdgeTypeStore store;
    store.key = key;
    store.src_type = type_index(key.src);
    store.dst_type = type_index(key.dst);
    const EdgeTable* table = nullptr;
    for (const auto& e : edges) {
      if (e.key == key) table = &e;
    }
    std::vector<NodeId> src, dst;
    std::vector<Timestamp> time;
    if (table) {
      const std::size_t ns = g.node_types_[store.src_type].count;
      const std::size_t nd = g.node_types_[store.dst_type].count;
      for (const auto& row : table->rows) {
        std::int64_t s, d, ts;
        if (!ParseInt64(row.src_id, s) || !ParseInt64(row.dst_id, d)) {
          throw Error(ErrorKind::kBadTable, "unparseable endpoint in " + KeyString(key));
        }
        if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= ns ||
            static_cast<std::size_t>(d) >= nd) {
          throw Error(ErrorKind::kDanglingEdge, KeyString(key) + " edge (" + row.src_id + ", " +
                                                    row.dst_id + ") references a missing node");
        }
        if (!ParseInt64(row.timestamp, ts)) {
          throw Error(ErrorKind::kBadTimestamp, "'" + row.timestamp + "' in " + KeyString(key));
        }
        src.push_back(static_cast<NodeId>(s));
        dst.push_back(static_cast<NodeId>(d));
        time.push_back(ts);
      }
    }
    store.num_edges = src.size();
    store.out = BuildAdjacency(g.node_types_[store.src_type].count, src, dst, time);
    store.in = BuildAdjacency(g.node_types_[store.dst_type].count, dst, src, time);
    g.edge_types_.push_back(std::move(store));
  }
  for (const auto& e : edges) {
    if (std::find(schema.edge_types.begin(), schema.edge_types.end(), e.key) ==
        schema.edge_types.end()) {
      throw Error(ErrorKind::kUnknownType, "edge table " + KeyString(e.key) + " is not declared");
    }
  }
  return g;
}

std::vector<Neighbor> NeighborsBefore(const TemporalHeteroGraph& graph, NodeId node,
                                      TypeId edge_type, Timestamp t, std::size_t fanout,
                                      Direction dir) {
  const EdgeTypeStore& et = graph.edge_type(edge_type);
  const Adjacency& adj = dir == Direction::kForward ? et.out : et.in;
  if (node + 1 >= adj.offsets.size()) {
    throw Error(ErrorKind::kIndexOutOfRange, "node " + std::to_string(node) + " out of range");
  }
  const auto begin = adj.time.begin() + static_cast<std::ptrdiff_t>(adj.offsets[node]);
  const auto end = adj.time.begin() + static_cast<std::ptrdiff_t>(adj.offsets[node + 1]);
  const auto stop = std::upper_bound(begin, end, t);
  std::vector<Neighbor> result;
  auto qualifying = static_cast<std::size_t>(stop - begin);
  const std::size_t take = std::min(qualifying, fanout);
  result.reserve(take);
  std::size_t pos = static_cast<std::size_t>(stop - adj.time.begin());
  for (std::size_t i = 0; i < take; ++i) {
    --pos;
    result.push_back({adj.neighbor[pos], adj.time[pos], adj.edge_id[pos]});
  }
  return result;
}

std::vector<NodeId> GroundTruthItems(const TemporalHeteroGraph& graph, NodeId user, Timestamp t,
                                     const TaskSpec& task) {
  const TypeId e = graph.EdgeTypeId(task.target_edge);
  const Adjacency& adj = graph.edge_type(e).out;
  if (user >= graph.num_users()) {
    throw Error(ErrorKind::kInvalidUser, "user " + std::to_string(user));
  }
  const auto begin = adj.time.begin() + static_cast<std::ptrdiff_t>(adj.offsets[user]);
  const auto end = adj.time.begin() + static_cast<std::ptrdiff_t>(adj.offsets[user + 1]);
  const auto lo = std::upper_bound(begin, end, t);
  const auto hi = std::upper_bound(lo, end, t + task.interval);
  std::vector<NodeId> items;
  for (auto it = lo; it != hi; ++it) {
    items.push_back(adj.neighbor[static_cast<std::size_t>(it - adj.time.begin())]);
  }
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

std::vector<std::uint8_t> TemporalHeteroGraph::Serialize() const {
  internal::ByteWriter w;
  w.Put(kGraphMagic);
  w.Put(kGraphVersion);
  w.Put<std::uint32_t>(user_type_);
  w.Put<std::uint32_t>(item_type_);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(node_types_.size()));
  for (const auto& nt : node_types_) {
    w.PutString(nt.name);
    w.Put<std::uint64_t>(nt.count);
    w.Put<std::uint32_t>(static_cast<std::uint32_t>(nt.columns.size()));
    for (const auto& c : nt.columns) {
      w.PutString(c.name);
      w.Put<std::uint8_t>(c.categorical ? 1 : 0);
      w.Put(c.mean);
      w.Put(c.stddev);
      w.Put<std::uint64_t>(c.offset);
      w.Put<std::uint32_t>(static_cast<std::uint32_t>(c.categories.size()));
      for (const auto& s : c.categories) w.PutString(s);
    }
    w.Put<std::uint64_t>(nt.feature_width);
    w.PutVector(nt.features);
  }
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(edge_types_.size()));
  for (const auto& et : edge_types_) {
    w.PutString(et.key.src);
    w.PutString(et.key.rel);
    w.PutString(et.key.dst);
    w.Put<std::uint32_t>(et.src_type);
    w.Put<std::uint32_t>(et.dst_type);
    w.Put<std::uint64_t>(et.num_edges);
    PutAdjacency(w, et.out);
    PutAdjacency(w, et.in);
  }
  return std::move(w.bytes());
}

TemporalHeteroGraph TemporalHeteroGraph::Deserialize(const std::vector<std::uint8_t>& bytes) {
  internal::ByteReader r(bytes);
  if (r.Get<std::uint32_t>() != kGraphMagic) throw Error(ErrorKind::kBadMagic, "not a graph cache");
  if (r.Get<std::uint32_t>() != kGraphVersion) {
    throw Error(ErrorKind::kVersionMismatch, "unsupported graph cache version");
  }
  TemporalHeteroGraph g;
  g.user_type_ = r.Get<std::uint32_t>();
  g.item_type_ = r.Get<std::uint32_t>();
  g.node_types_.resize(r.Get<std::uint32_t>());
  for (auto& nt : g.node_types_) {
    nt.name = r.GetString();
    nt.count = r.Get<std::uint64_t>();
    nt.columns.resize(r.Get<std::uint32_t>());
    for (auto& c : nt.columns) {
      c.name = r.GetString();
      c.categorical = r.Get<std::uint8_t>() != 0;
      c.mean = r.Get<double>();
      c.stddev = r.Get<double>();
      c.offset = r.Get<std::uint64_t>();
      c.categories.resize(r.Get<std::uint32_t>());
      for (auto& s : c.categories) s = r.GetString();
    }
    nt.feature_width = r.Get<std::uint64_t>();
    nt.features = r.GetVector<double>();
  }
  g.edge_types_.resize(r.Get<std::uint32_t>());
  for (auto& et : g.edge_types_) {
    et.key.src = r.GetString();
    et.key.rel = r.GetString();
    et.key.dst = r.GetString();
    et.src_type = r.Get<std::uint32_t>();
    et.dst_type = r.Get<std::uint32_t>();
    et.num_edges = r.Get<std::uint64_t>();
    et.out = GetAdjacency(r);
    et.in = GetAdjacency(r);
  }
  if (!r.AtEnd()) throw Error(ErrorKind::kBadTable, "trailing bytes in graph cache");
  return g;
}

namespace internal {

std::vector<std::uint8_t> ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFileBytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path);
}

}  // namespace internal
}  // namespace ctxgnn
