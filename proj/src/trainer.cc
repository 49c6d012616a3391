#include "ctxgnn/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "bytes.h"
#include "ctxgnn/eval.h"

namespace ctxgnn {
namespace {

constexpr char kCheckpointMagic[4] = {'C', 'G', 'N', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t ParseCount(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v[0] == '-') {
    throw Error(ErrorKind::kInvalidConfig, key + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(n);
}

double ParseReal(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) {
    throw Error(ErrorKind::kInvalidConfig, key + ": expected a number, got '" + v + "'");
  }
  return x;
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorKind::kInvalidConfig, key + ": expected true or false, got '" + v + "'");
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint8_t DtypeCode(Precision p) { return p == Precision::kFloat32 ? 1 : 2; }

template <typename Real>
constexpr Precision PrecisionOf() {
  return sizeof(Real) == 4 ? Precision::kFloat32 : Precision::kFloat64;
}

}  // namespace

void TrainConfig::Validate() const {
  model.Validate();
  if (fanouts.size() != model.num_layers) {
    throw Error(ErrorKind::kInvalidConfig, "fanouts has " + std::to_string(fanouts.size()) +
                                               " hops but num_layers is " +
                                               std::to_string(model.num_layers));
  }
  for (std::size_t f : fanouts) {
    if (f < 1) throw Error(ErrorKind::kInvalidConfig, "fanouts must be >= 1");
  }
  if (classes_c < 1) throw Error(ErrorKind::kInvalidConfig, "classes_C must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kInvalidConfig, "batch_size must be >= 1");
  if (!(lr >= 0) || !std::isfinite(lr)) throw Error(ErrorKind::kInvalidConfig, "lr must be >= 0");
}

TrainConfig ParseTrainConfig(const std::string& text) {
  TrainConfig c;
  bool saw_layers = false, saw_fanouts = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kInvalidConfig, "line " + std::to_string(lineno) + ": missing '='");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string v = Trim(line.substr(eq + 1));
    if (key == "hidden_dim") {
      c.model.hidden_dim = ParseCount(key, v);
    } else if (key == "num_layers") {
      c.model.num_layers = ParseCount(key, v);
      saw_layers = true;
    } else if (key == "fanouts") {
      c.fanouts.clear();
      std::istringstream parts(v);
      std::string p;
      while (std::getline(parts, p, ',')) c.fanouts.push_back(ParseCount(key, Trim(p)));
      saw_fanouts = true;
    } else if (key == "classes_C") {
      c.classes_c = ParseCount(key, v);
    } else if (key == "batch_size") {
      c.batch_size = ParseCount(key, v);
    } else if (key == "lr") {
      c.lr = ParseReal(key, v);
    } else if (key == "max_epochs") {
      c.max_epochs = ParseCount(key, v);
    } else if (key == "patience") {
      c.patience = ParseCount(key, v);
    } else if (key == "seed") {
      c.seed = ParseCount(key, v);
    } else if (key == "item_encoder_mode") {
      if (v == "transductive_shallow") {
        c.model.item_encoder_mode = ItemEncoderMode::kTransductiveShallow;
      } else if (v == "inductive_feature") {
        c.model.item_encoder_mode = ItemEncoderMode::kInductiveFeature;
      } else {
        throw Error(ErrorKind::kInvalidConfig, "unknown item_encoder_mode '" + v + "'");
      }
    } else if (key == "precision") {
      if (v == "float32" || v == "32") {
        c.model.precision = Precision::kFloat32;
      } else if (v == "float64" || v == "64") {
        c.model.precision = Precision::kFloat64;
      } else {
        throw Error(ErrorKind::kInvalidConfig, "unknown precision '" + v + "'");
      }
    } else if (key == "pair_only") {
      c.model.pair_only = ParseBool(key, v);
    } else if (key == "tower_only") {
      c.model.tower_only = ParseBool(key, v);
    } else if (key == "fusion_hidden") {
      c.model.fusion_hidden = ParseCount(key, v);
    } else if (key == "train_snapshots") {
      c.train_snapshots = ParseCount(key, v);
    } else {
      throw Error(ErrorKind::kInvalidConfig, "unknown key '" + key + "'");
    }
  }
  // One of the two implies the other.
  if (saw_fanouts && !saw_layers) c.model.num_layers = c.fanouts.size();
  if (saw_layers && !saw_fanouts) {
    c.fanouts.assign(c.model.num_layers, c.fanouts.empty() ? 12 : c.fanouts.front());
  }
  c.Validate();
  return c;
}

TrainConfig LoadTrainConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseTrainConfig(ss.str());
}

std::string FormatTrainConfig(const TrainConfig& c) {
  std::string fanouts;
  for (std::size_t i = 0; i < c.fanouts.size(); ++i) {
    fanouts += (i ? "," : "") + std::to_string(c.fanouts[i]);
  }
  std::string out;
  out += "hidden_dim=" + std::to_string(c.model.hidden_dim) + "\n";
  out += "num_layers=" + std::to_string(c.model.num_layers) + "\n";
  out += "fanouts=" + fanouts + "\n";
  out += "classes_C=" + std::to_string(c.classes_c) + "\n";
  out += "batch_size=" + std::to_string(c.batch_size) + "\n";
  out += "lr=" + FormatDouble(c.lr) + "\n";
  out += "max_epochs=" + std::to_string(c.max_epochs) + "\n";
  out += "patience=" + std::to_string(c.patience) + "\n";
  out += "seed=" + std::to_string(c.seed) + "\n";
  out += std::string("item_encoder_mode=") +
         (c.model.item_encoder_mode == ItemEncoderMode::kTransductiveShallow ? "transductive_shallow"
                                                                             : "inductive_feature") +
         "\n";
  out += std::string("precision=") +
         (c.model.precision == Precision::kFloat32 ? "float32" : "float64") + "\n";
  out += std::string("pair_only=") + (c.model.pair_only ? "true" : "false") + "\n";
  out += std::string("tower_only=") + (c.model.tower_only ? "true" : "false") + "\n";
  out += "fusion_hidden=" + std::to_string(c.model.fusion_hidden) + "\n";
  out += "train_snapshots=" + std::to_string(c.train_snapshots) + "\n";
  return out;
}

std::vector<TrainRow> BuildTrainingRows(const TemporalHeteroGraph& graph, const TaskSpec& task,
                                        std::size_t train_snapshots) {
  task.Validate();
  const EdgeTypeStore& et = graph.edge_type(graph.EdgeTypeId(task.target_edge));
  if (et.src_type != graph.user_type() || et.dst_type != graph.item_type()) {
    throw Error(ErrorKind::kInvalidConfig, "target edge must run from users to items");
  }
  const Adjacency& adj = et.out;
  std::vector<TrainRow> rows;
  for (NodeId u = 0; u < graph.num_users(); ++u) {
    for (std::uint64_t p = adj.offsets[u]; p < adj.offsets[u + 1]; ++p) {
      const Timestamp t = adj.time[p];
      if (t > task.val_cutoff) break;
      // Latest boundary val_cutoff - j * interval that is strictly before t.
      const std::int64_t j = (task.val_cutoff - t) / task.interval + 1;
      if (train_snapshots != 0 && static_cast<std::size_t>(j) > train_snapshots) continue;
      rows.push_back({u, task.val_cutoff - j * task.interval, adj.neighbor[p]});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const TrainRow& a, const TrainRow& b) {
    return std::tie(a.seed_time, a.user, a.item) < std::tie(b.seed_time, b.user, b.item);
  });
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

PositiveIndex::PositiveIndex(std::span<const TrainRow> rows) {
  for (const TrainRow& r : rows) positives_[{r.user, r.seed_time}].push_back(r.item);
  for (auto& [key, items] : positives_) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
}

const std::vector<NodeId>& PositiveIndex::Positives(NodeId user, Timestamp t) const {
  auto it = positives_.find({user, t});
  return it == positives_.end() ? empty_ : it->second;
}

BatchClasses SampleClasses(std::span<const TrainRow> batch, std::span<const NodeId> subgraph_items,
                           std::size_t c, std::size_t num_items, Rng& rng) {
  std::vector<NodeId> gt;
  for (const TrainRow& r : batch) gt.push_back(r.item);
  std::sort(gt.begin(), gt.end());
  gt.erase(std::unique(gt.begin(), gt.end()), gt.end());
  if (c < gt.size()) {
    throw Error(ErrorKind::kClassBudgetTooSmall, "C=" + std::to_string(c) + " < " +
                                                     std::to_string(gt.size()) +
                                                     " distinct ground-truth items");
  }
  const std::size_t budget = std::min(c, num_items);

  BatchClasses out;
  std::vector<char> taken(num_items, 0);
  auto add = [&](NodeId id) {
    out.position_of.emplace(id, static_cast<std::uint32_t>(out.class_ids.size()));
    out.class_ids.push_back(id);
    taken[id] = 1;
  };
  for (NodeId id : gt) {
    if (id >= num_items) throw Error(ErrorKind::kUnknownItem, "item " + std::to_string(id));
    add(id);
  }

  std::vector<NodeId> extra;
  for (NodeId id : subgraph_items) {
    if (id < num_items && !taken[id]) extra.push_back(id);
  }
  std::sort(extra.begin(), extra.end());
  extra.erase(std::unique(extra.begin(), extra.end()), extra.end());
  auto partial_shuffle = [&](std::vector<NodeId>& pool, std::size_t want) {
    for (std::size_t i = 0; i < want; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(want);
  };
  const std::size_t room = budget - out.class_ids.size();
  if (extra.size() > room) partial_shuffle(extra, room);
  for (NodeId id : extra) add(id);

  const std::size_t fill = budget - out.class_ids.size();
  if (fill > 0) {
    std::vector<NodeId> rest;
    rest.reserve(num_items - out.class_ids.size());
    for (NodeId id = 0; id < num_items; ++id) {
      if (!taken[id]) rest.push_back(id);
    }
    partial_shuffle(rest, fill);
    for (NodeId id : rest) add(id);
  }
  return out;
}

void AssignRows(BatchClasses& classes, std::span<const TrainRow> batch,
                const PositiveIndex& positives) {
  classes.target.clear();
  classes.masked.clear();
  for (const TrainRow& r : batch) {
    auto it = classes.position_of.find(r.item);
    if (it == classes.position_of.end()) {
      throw Error(ErrorKind::kTargetOutOfRange, "target item " + std::to_string(r.item) +
                                                    " is not among the sampled classes");
    }
    classes.target.push_back(it->second);
    std::vector<std::uint32_t> masked;
    for (NodeId other : positives.Positives(r.user, r.seed_time)) {
      if (other == r.item) continue;
      if (auto m = classes.position_of.find(other); m != classes.position_of.end()) {
        masked.push_back(m->second);
      }
    }
    classes.masked.push_back(std::move(masked));
  }
}

BatchGroups GroupBatch(const TemporalHeteroGraph& graph, std::span<const TrainRow> batch,
                       std::span<const std::size_t> fanouts) {
  BatchGroups out;
  std::map<std::pair<NodeId, Timestamp>, std::uint32_t> group_of;
  for (const TrainRow& r : batch) {
    auto [it, fresh] =
        group_of.try_emplace({r.user, r.seed_time}, static_cast<std::uint32_t>(out.subgraphs.size()));
    if (fresh) {
      out.subgraphs.push_back(Bidirectionalize(SampleSubgraph(graph, r.user, r.seed_time, fanouts)));
    }
    out.group_of_row.push_back(it->second);
  }
  return out;
}

template <typename Real>
double BatchLoss(const ContextGnn<Real>& model, std::span<const TrainRow> batch,
                 const BatchClasses& classes, std::span<const Subgraph> subgraphs,
                 std::span<const std::uint32_t> group_of_row, const ModelParams<Real>& params,
                 ModelParams<Real>* grads) {
  const ModelConfig& config = model.config();
  const std::size_t n = batch.size();
  const std::size_t c = classes.class_ids.size();
  const std::size_t d = config.hidden_dim;
  if (classes.target.size() != n || group_of_row.size() != n) {
    throw Error(ErrorKind::kShapeMismatch, "batch rows and class assignment disagree");
  }
  if (n == 0) return 0.0;

  std::vector<std::vector<std::size_t>> rows_of(subgraphs.size());
  for (std::size_t i = 0; i < n; ++i) rows_of[group_of_row[i]].push_back(i);

  TowerEmbeddings<Real> tower;
  if (!config.pair_only) tower = model.TowerEmbed(params, classes.class_ids);

  struct Group {
    ForwardCache<Real> cache;
    std::vector<std::int64_t> local_row;  // per class column, -1 if not local
  };
  std::vector<Group> groups(subgraphs.size());
  constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();
  Tensor<Real> logits({n, c});
  for (std::size_t g = 0; g < subgraphs.size(); ++g) {
    if (rows_of[g].empty()) continue;
    const Subgraph& sub = subgraphs[g];
    Group& grp = groups[g];
    grp.cache = model.Forward(sub, params);
    grp.local_row.assign(c, -1);
    if (!config.tower_only) {
      const auto& items = sub.nodes[sub.item_type];
      for (std::size_t r = 0; r < items.size(); ++r) {
        if (auto it = classes.position_of.find(items[r]); it != classes.position_of.end()) {
          grp.local_row[it->second] = static_cast<std::int64_t>(r);
        }
      }
    }
    const std::span<const Real> user = grp.cache.readout.user.values();
    const Real offset = config.tower_only ? Real(0) : grp.cache.offset;
    for (std::size_t i : rows_of[g]) {
      for (std::size_t col = 0; col < c; ++col) {
        Real z;
        if (grp.local_row[col] >= 0) {
          z = Dot<Real>(user, grp.cache.readout.items.row(static_cast<std::size_t>(grp.local_row[col]))) +
              offset;
        } else if (config.pair_only) {
          z = kNegInf;
        } else {
          z = Dot<Real>(user, tower.out.row(col));
        }
        logits(i, col) = z;
      }
      for (std::uint32_t m : classes.masked[i]) logits(i, m) = kNegInf;
    }
  }

  XentResult<Real> xent = SoftmaxXent(logits, classes.target);
  if (!grads) return static_cast<double>(xent.loss);

  Tensor<Real> grad_tower;
  if (!config.pair_only) grad_tower = Tensor<Real>({c, d});
  for (std::size_t g = 0; g < subgraphs.size(); ++g) {
    if (rows_of[g].empty()) continue;
    const Group& grp = groups[g];
    const Subgraph& sub = subgraphs[g];
    const std::span<const Real> user = grp.cache.readout.user.values();
    Tensor<Real> grad_user({d});
    Tensor<Real> grad_items({sub.nodes[sub.item_type].size(), d});
    Real grad_offset = 0;
    for (std::size_t i : rows_of[g]) {
      for (std::size_t col = 0; col < c; ++col) {
        const Real gz = xent.grad_logits(i, col);
        if (gz == Real(0)) continue;
        if (grp.local_row[col] >= 0) {
          const auto r = static_cast<std::size_t>(grp.local_row[col]);
          const auto h_item = grp.cache.readout.items.row(r);
          auto gi = grad_items.row(r);
          for (std::size_t j = 0; j < d; ++j) {
            grad_user[j] += gz * h_item[j];
            gi[j] += gz * user[j];
          }
          grad_offset += gz;
        } else {
          const auto w = tower.out.row(col);
          auto gw = grad_tower.row(col);
          for (std::size_t j = 0; j < d; ++j) {
            grad_user[j] += gz * w[j];
            gw[j] += gz * user[j];
          }
        }
      }
    }
    if (config.tower_only) grad_offset = 0;
    model.Backward(grp.cache, sub, params, grad_user, grad_items, grad_offset, *grads);
  }
  if (!config.pair_only) model.TowerBackward(tower, params, grad_tower, *grads);
  return static_cast<double>(xent.loss);
}

template <typename Real>
StepResult TrainStep(const ContextGnn<Real>& model, std::span<const TrainRow> batch,
                     const PositiveIndex& positives, const TrainConfig& config,
                     ModelParams<Real>& params, AdamState<Real>& adam, Rng& rng) {
  const auto& graph = model.graph();
  BatchGroups groups = GroupBatch(graph, batch, config.fanouts);

  // Pair-only has no way to score an item outside the subgraph, so such rows
  // carry no signal.
  std::vector<TrainRow> rows;
  std::vector<std::uint32_t> group_of_row;
  std::vector<std::vector<NodeId>> local(groups.subgraphs.size());
  for (std::size_t g = 0; g < groups.subgraphs.size(); ++g) local[g] = LocalItemSet(groups.subgraphs[g]);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& items = local[groups.group_of_row[i]];
    if (model.config().pair_only && !std::binary_search(items.begin(), items.end(), batch[i].item)) {
      continue;
    }
    rows.push_back(batch[i]);
    group_of_row.push_back(groups.group_of_row[i]);
  }
  if (rows.empty()) return {};

  std::vector<NodeId> union_items;
  for (const auto& items : local) union_items.insert(union_items.end(), items.begin(), items.end());
  std::sort(union_items.begin(), union_items.end());
  union_items.erase(std::unique(union_items.begin(), union_items.end()), union_items.end());

  BatchClasses classes =
      SampleClasses(rows, union_items, config.classes_c, graph.num_items(), rng);
  AssignRows(classes, rows, positives);

  ModelParams<Real> grads = params.ZerosLike();
  const double loss =
      BatchLoss(model, rows, classes, groups.subgraphs, group_of_row, params, &grads);
  AdamStep(params.tensors, grads.tensors, adam);
  return {loss, rows.size()};
}

std::string FormatTrainReport(const TrainReport& r) {
  std::string out;
  out += "seed=" + std::to_string(r.seed) + "\n";
  out += "epochs=" + std::to_string(r.epoch_loss.size()) + "\n";
  out += "best_epoch=" + std::to_string(r.best_epoch) + "\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
    out += "epoch" + std::to_string(e) + ".loss=" + FormatDouble(r.epoch_loss[e]) + "\n";
    out += "epoch" + std::to_string(e) + ".val_map=" + FormatDouble(r.val_map[e]) + "\n";
    out += "epoch" + std::to_string(e) + ".seconds=" + FormatDouble(r.epoch_seconds[e]) + "\n";
  }
  return out;
}

template <typename Real>
std::pair<ModelParams<Real>, TrainReport> Fit(const TemporalHeteroGraph& graph,
                                              const TaskSpec& task, const TrainConfig& config) {
  config.Validate();
  task.Validate();
  const ContextGnn<Real> model(graph, config.model);
  ModelParams<Real> params = model.Init(config.seed);
  TrainReport report;
  report.seed = config.seed;
  if (config.max_epochs == 0) return {std::move(params), std::move(report)};

  std::vector<TrainRow> rows = BuildTrainingRows(graph, task, config.train_snapshots);
  if (rows.empty()) throw Error(ErrorKind::kEmptyTrainingSet, "no target edges before val_cutoff");
  const PositiveIndex positives(rows);
  const bool have_val = !EligibleUsers(graph, task, Split::kVal).empty();

  AdamOptions opts;
  opts.lr = config.lr;
  AdamState<Real> adam(params.tensors, opts);
  Rng rng(config.seed);
  ModelParams<Real> best = params;
  double best_map = -1;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(rows.begin(), rows.end(), rng);
    double loss_sum = 0;
    std::size_t used = 0;
    for (std::size_t b = 0; b < rows.size(); b += config.batch_size) {
      const std::size_t e = std::min(rows.size(), b + config.batch_size);
      const StepResult step = TrainStep(model, std::span<const TrainRow>(rows).subspan(b, e - b),
                                        positives, config, params, adam, rng);
      loss_sum += step.loss * static_cast<double>(step.rows_used);
      used += step.rows_used;
    }
    const double val_map =
        have_val ? EvaluateSplit(model, params, task, Split::kVal, config.fanouts).map : 0.0;
    report.epoch_loss.push_back(used ? loss_sum / static_cast<double>(used) : 0.0);
    report.val_map.push_back(val_map);
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (val_map > best_map) {
      best_map = val_map;
      best = params;
      report.best_epoch = static_cast<int>(epoch);
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return {std::move(best), std::move(report)};
}

template <typename Real>
std::vector<std::uint8_t> EncodeCheckpoint(const ModelParams<Real>& params,
                                           const TrainConfig& config) {
  internal::ByteWriter w;
  w.PutRaw(kCheckpointMagic, 4);
  w.Put<std::uint32_t>(kCheckpointVersion);
  w.PutString(FormatTrainConfig(config));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(params.tensors.size()));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    w.PutString(params.names[i]);
    w.Put<std::uint8_t>(DtypeCode(PrecisionOf<Real>()));
    const auto& shape = params.tensors[i].shape();
    w.Put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t dim : shape) w.Put<std::uint64_t>(dim);
  }
  for (const auto& t : params.tensors) w.PutRaw(t.data(), t.size() * sizeof(Real));
  return std::move(w.bytes());
}

namespace {

struct CheckpointHeader {
  TrainConfig config;
  std::vector<std::string> names;
  std::vector<std::uint8_t> dtypes;
  std::vector<std::vector<std::size_t>> shapes;
};

CheckpointHeader ReadHeader(internal::ByteReader& r) {
  char magic[4];
  r.GetRaw(magic, 4);
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw Error(ErrorKind::kBadMagic, "not a checkpoint file");
  }
  const auto version = r.Get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kVersionMismatch, "checkpoint version " + std::to_string(version));
  }
  CheckpointHeader h;
  h.config = ParseTrainConfig(r.GetString());
  const auto count = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    h.names.push_back(r.GetString());
    h.dtypes.push_back(r.Get<std::uint8_t>());
    if (h.dtypes.back() != 1 && h.dtypes.back() != 2) {
      throw Error(ErrorKind::kBadMagic, "unknown dtype code " + std::to_string(h.dtypes.back()));
    }
    const auto rank = r.Get<std::uint32_t>();
    std::vector<std::size_t> shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.Get<std::uint64_t>());
    h.shapes.push_back(std::move(shape));
  }
  return h;
}

}  // namespace

template <typename Real>
std::pair<ModelParams<Real>, TrainConfig> DecodeCheckpoint(const std::vector<std::uint8_t>& bytes) {
  internal::ByteReader r(bytes);
  CheckpointHeader h = ReadHeader(r);
  ModelParams<Real> params;
  params.names = h.names;
  for (std::size_t i = 0; i < h.names.size(); ++i) {
    if (h.dtypes[i] != DtypeCode(PrecisionOf<Real>())) {
      throw Error(ErrorKind::kShapeMismatch, "parameter " + h.names[i] + " has another precision");
    }
    std::size_t n = 1;
    for (std::size_t dim : h.shapes[i]) n *= dim;
    if (n > r.remaining() / sizeof(Real)) {
      throw Error(ErrorKind::kTruncatedFile, "parameter " + h.names[i] + " is cut short");
    }
    std::vector<Real> data(n);
    r.GetRaw(data.data(), n * sizeof(Real));
    params.tensors.emplace_back(h.shapes[i], std::move(data));
  }
  if (!r.AtEnd()) throw Error(ErrorKind::kTruncatedFile, "trailing bytes after the last tensor");
  return {std::move(params), std::move(h.config)};
}

template <typename Real>
void SaveCheckpoint(const ModelParams<Real>& params, const TrainConfig& config,
                    const std::string& path) {
  internal::WriteFileBytes(path, EncodeCheckpoint(params, config));
}

template <typename Real>
std::pair<ModelParams<Real>, TrainConfig> LoadCheckpoint(const std::string& path) {
  return DecodeCheckpoint<Real>(internal::ReadFileBytes(path));
}

Precision CheckpointPrecision(const std::string& path) {
  const auto bytes = internal::ReadFileBytes(path);
  internal::ByteReader r(bytes);
  return ReadHeader(r).config.model.precision;
}

#define CTXGNN_INSTANTIATE(Real)                                                                   \
  template double BatchLoss(const ContextGnn<Real>&, std::span<const TrainRow>,                    \
                            const BatchClasses&, std::span<const Subgraph>,                        \
                            std::span<const std::uint32_t>, const ModelParams<Real>&,              \
                            ModelParams<Real>*);                                                   \
  template StepResult TrainStep(const ContextGnn<Real>&, std::span<const TrainRow>,                \
                                const PositiveIndex&, const TrainConfig&, ModelParams<Real>&,      \
                                AdamState<Real>&, Rng&);                                           \
  template std::pair<ModelParams<Real>, TrainReport> Fit<Real>(                                    \
      const TemporalHeteroGraph&, const TaskSpec&, const TrainConfig&);                            \
  template std::vector<std::uint8_t> EncodeCheckpoint(const ModelParams<Real>&, const TrainConfig&); \
  template std::pair<ModelParams<Real>, TrainConfig> DecodeCheckpoint<Real>(                       \
      const std::vector<std::uint8_t>&);                                                           \
  template void SaveCheckpoint(const ModelParams<Real>&, const TrainConfig&, const std::string&);  \
  template std::pair<ModelParams<Real>, TrainConfig> LoadCheckpoint<Real>(const std::string&);

CTXGNN_INSTANTIATE(float)
CTXGNN_INSTANTIATE(double)

}  // namespace ctxgnn
