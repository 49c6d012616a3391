#include "ctxgnn/dataset.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "bytes.h"

namespace ctxgnn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string TableName(const EdgeTypeKey& k) { return k.src + "__" + k.rel + "__" + k.dst + ".csv"; }

template <typename T>
T Required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) {
    throw Error(ErrorKind::kInvalidConfig, where + " is missing '" + key + "'");
  }
  return j.at(key).get<T>();
}

}  // namespace

std::vector<std::vector<std::string>> ReadCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(SplitCsvLine(line));
  }
  return rows;
}

std::string FormatCsvRow(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") == std::string::npos) {
      out += c;
      continue;
    }
    out += '"';
    for (char ch : c) {
      if (ch == '"') out += '"';
      out += ch;
    }
    out += '"';
  }
  return out;
}

RawTables ReadManifest(const std::string& manifest_path, bool load_tables) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + manifest_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("manifest: ") + e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  RawTables raw;
  try {
    for (const auto& nt : Required<json>(j, "node_types", "manifest")) {
      NodeTable table;
      table.type = Required<std::string>(nt, "name", "node type");
      raw.schema.node_types.push_back(table.type);
      if (nt.contains("table") && load_tables) {
        auto rows = ReadCsv((base / nt.at("table").get<std::string>()).string());
        if (rows.empty()) throw Error(ErrorKind::kBadTable, "empty node table for " + table.type);
        table.header = std::move(rows.front());
        table.rows.assign(std::make_move_iterator(rows.begin() + 1),
                          std::make_move_iterator(rows.end()));
      } else if (!nt.contains("table")) {
        table.count = Required<std::size_t>(nt, "count", "feature-less node type " + table.type);
      }
      raw.nodes.push_back(std::move(table));
    }
    for (const auto& et : Required<json>(j, "edge_types", "manifest")) {
      EdgeTable table;
      table.key = {Required<std::string>(et, "src", "edge type"),
                   Required<std::string>(et, "rel", "edge type"),
                   Required<std::string>(et, "dst", "edge type")};
      raw.schema.edge_types.push_back(table.key);
      if (et.contains("table") && load_tables) {
        auto rows = ReadCsv((base / et.at("table").get<std::string>()).string());
        if (rows.empty() || rows.front() != std::vector<std::string>{"src_id", "dst_id", "timestamp"}) {
          throw Error(ErrorKind::kBadTable, "edge table for " + table.key.rel +
                                                " must have header src_id,dst_id,timestamp");
        }
        for (std::size_t i = 1; i < rows.size(); ++i) {
          if (rows[i].size() != 3) throw Error(ErrorKind::kBadTable, "edge row needs 3 cells");
          table.rows.push_back({rows[i][0], rows[i][1], rows[i][2]});
        }
      }
      raw.edges.push_back(std::move(table));
    }
    raw.schema.user_type = Required<std::string>(j, "user_type", "manifest");
    raw.schema.item_type = Required<std::string>(j, "item_type", "manifest");
    const json& task = Required<json>(j, "task", "manifest");
    const auto target = Required<std::vector<std::string>>(task, "target_edge", "task");
    if (target.size() != 3) throw Error(ErrorKind::kInvalidConfig, "target_edge needs 3 names");
    raw.task.target_edge = {target[0], target[1], target[2]};
    raw.task.interval = Required<std::int64_t>(task, "interval", "task");
    raw.task.val_cutoff = Required<std::int64_t>(task, "val_cutoff", "task");
    raw.task.test_cutoff = Required<std::int64_t>(task, "test_cutoff", "task");
    raw.task.eval_k = Required<std::uint32_t>(task, "eval_k", "task");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("manifest: ") + e.what());
  }
  raw.task.Validate();
  return raw;
}

void WriteManifest(const std::string& dir, const RawTables& raw) {
  fs::create_directories(dir);
  json j;
  j["node_types"] = json::array();
  for (const auto& table : raw.nodes) {
    json nt;
    nt["name"] = table.type;
    if (table.header.empty()) {
      nt["count"] = table.count.value_or(0);
    } else {
      const std::string file = table.type + ".csv";
      nt["table"] = file;
      std::ofstream out(fs::path(dir) / file, std::ios::binary | std::ios::trunc);
      out << FormatCsvRow(table.header) << '\n';
      for (const auto& row : table.rows) out << FormatCsvRow(row) << '\n';
    }
    j["node_types"].push_back(nt);
  }
  j["edge_types"] = json::array();
  for (const auto& table : raw.edges) {
    const std::string file = TableName(table.key);
    j["edge_types"].push_back(
        {{"src", table.key.src}, {"rel", table.key.rel}, {"dst", table.key.dst}, {"table", file}});
    std::ofstream out(fs::path(dir) / file, std::ios::binary | std::ios::trunc);
    out << "src_id,dst_id,timestamp\n";
    for (const auto& row : table.rows) {
      out << row.src_id << ',' << row.dst_id << ',' << row.timestamp << '\n';
    }
  }
  j["user_type"] = raw.schema.user_type;
  j["item_type"] = raw.schema.item_type;
  const auto& t = raw.task;
  j["task"] = {{"target_edge", {t.target_edge.src, t.target_edge.rel, t.target_edge.dst}},
               {"interval", t.interval},
               {"val_cutoff", t.val_cutoff},
               {"test_cutoff", t.test_cutoff},
               {"eval_k", t.eval_k}};
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write manifest in " + dir);
  out << j.dump(2) << '\n';
}

Dataset BuildDataset(const RawTables& raw) {
  raw.task.Validate();
  Dataset ds{raw.schema, raw.task, BuildGraph(raw.schema, raw.nodes, raw.edges)};
  ds.graph.EdgeTypeId(raw.task.target_edge);
  return ds;
}

Dataset LoadDataset(const std::string& manifest_path) {
  return BuildDataset(ReadManifest(manifest_path));
}

Dataset LoadDataset(const std::string& manifest_path, const std::string& graph_cache) {
  RawTables raw = ReadManifest(manifest_path, false);
  return Dataset{raw.schema, raw.task, LoadGraphCache(graph_cache)};
}

void SaveGraphCache(const TemporalHeteroGraph& graph, const std::string& path) {
  internal::WriteFileBytes(path, graph.Serialize());
}

TemporalHeteroGraph LoadGraphCache(const std::string& path) {
  return TemporalHeteroGraph::Deserialize(internal::ReadFileBytes(path));
}

}  // namespace ctxgnn
