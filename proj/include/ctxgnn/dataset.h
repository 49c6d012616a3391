#pragma once

#include <string>
#include <vector>

#include "ctxgnn/graph.h"

namespace ctxgnn {

// Everything a manifest describes, before the graph index is built.
struct RawTables {
  GraphSchema schema;
  TaskSpec task;
  std::vector<NodeTable> nodes;
  std::vector<EdgeTable> edges;
};

struct Dataset {
  GraphSchema schema;
  TaskSpec task;
  TemporalHeteroGraph graph;
};

// Manifest layout (paths relative to the manifest's directory):
// {
//   "node_types": [{"name": "user", "table": "user.csv"}, {"name": "x", "count": 4}],
//   "edge_types": [{"src": "user", "rel": "buys", "dst": "item", "table": "buys.csv"}],
//   "user_type": "user", "item_type": "item",
//   "task": {"target_edge": ["user", "buys", "item"], "interval": 86400,
//            "val_cutoff": 0, "test_cutoff": 86400, "eval_k": 10}
// }
// With load_tables = false only the schema and task are read.
RawTables ReadManifest(const std::string& manifest_path, bool load_tables = true);

// Writes `manifest.json` plus one CSV per table into `dir`. Output bytes
// depend only on the tables.
void WriteManifest(const std::string& dir, const RawTables& raw);

Dataset BuildDataset(const RawTables& raw);
Dataset LoadDataset(const std::string& manifest_path);

// Swaps in a prebuilt graph cache instead of re-parsing CSVs.
Dataset LoadDataset(const std::string& manifest_path, const std::string& graph_cache);

void SaveGraphCache(const TemporalHeteroGraph& graph, const std::string& path);
TemporalHeteroGraph LoadGraphCache(const std::string& path);

std::vector<std::vector<std::string>> ReadCsv(const std::string& path);
std::string FormatCsvRow(const std::vector<std::string>& cells);

}  // namespace ctxgnn
