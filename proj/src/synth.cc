#include "ctxgnn/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace ctxgnn {
namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void SynthConfig::Validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::kInvalidConfig, std::string(name) + " must lie in [0, 1]");
    }
  };
  prob(repeat_prob, "repeat_prob");
  prob(repeater_fraction, "repeater_fraction");
  prob(community_affinity, "community_affinity");
  if (num_users < 1 || num_items < 1 || community_count < 1 || num_intervals < 1 || time_step < 1 ||
      eval_k < 1) {
    throw Error(ErrorKind::kInvalidConfig, "counts must be >= 1");
  }
  if (num_train_interactions < num_users) {
    throw Error(ErrorKind::kInvalidConfig, "num_train_interactions must cover one warm-up per user");
  }
  if (num_train_interactions / num_intervals < 1) {
    throw Error(ErrorKind::kInvalidConfig, "fewer training interactions than intervals");
  }
}

SynthData GenerateSynthetic(const SynthConfig& cfg) {
  cfg.Validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto below = [&](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };

  const std::size_t nu = cfg.num_users, ni = cfg.num_items;
  const std::size_t per_interval = cfg.num_train_interactions / cfg.num_intervals;
  const std::size_t total = cfg.num_train_interactions + 2 * per_interval;

  SynthData out;
  std::vector<std::size_t> user_comm(nu);
  for (auto& c : user_comm) c = below(cfg.community_count);
  std::vector<std::vector<NodeId>> comm_items(cfg.community_count);
  for (NodeId i = 0; i < ni; ++i) comm_items[i % cfg.community_count].push_back(i);

  std::vector<std::size_t> perm(nu);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto num_repeaters =
      static_cast<std::size_t>(std::llround(cfg.repeater_fraction * static_cast<double>(nu)));
  out.is_repeater.assign(nu, false);
  for (std::size_t i = 0; i < num_repeaters; ++i) out.is_repeater[perm[i]] = true;

  std::vector<std::vector<char>> touched(nu, std::vector<char>(ni, 0));
  std::vector<std::vector<NodeId>> history(nu);

  // Rejection sampling first; an exhaustive scan only when the pool is
  // nearly used up.
  auto novel_from = [&](std::size_t u, const std::vector<NodeId>& pool) -> std::int64_t {
    for (int tries = 0; tries < 32; ++tries) {
      const NodeId c = pool[below(pool.size())];
      if (!touched[u][c]) return c;
    }
    std::vector<NodeId> left;
    for (NodeId c : pool) {
      if (!touched[u][c]) left.push_back(c);
    }
    if (left.empty()) return -1;
    return left[below(left.size())];
  };
  std::vector<NodeId> all_items(ni);
  std::iota(all_items.begin(), all_items.end(), NodeId{0});
  auto draw_novel = [&](std::size_t u) -> std::int64_t {
    if (unit(rng) < cfg.community_affinity) {
      if (auto c = novel_from(u, comm_items[user_comm[u] % cfg.community_count]); c >= 0) return c;
    }
    return novel_from(u, all_items);
  };

  EdgeTable edges{{"user", "buys", "item"}, {}};
  for (std::size_t s = 0; s < total; ++s) {
    const bool warmup = s < nu;
    const std::size_t u = warmup ? perm[s] : below(nu);
    std::int64_t item = -1;
    if (!warmup) {
      const double p = out.is_repeater[u] ? cfg.repeat_prob : 0.0;
      const bool repeat = unit(rng) < p;
      if (out.is_repeater[u]) {
        ++out.repeater_draws;
        out.repeat_events += repeat;
      }
      if (repeat) item = history[u][below(history[u].size())];
    }
    if (item < 0) item = draw_novel(u);
    if (item < 0) item = history[u][below(history[u].size())];  // user has seen every item
    const auto id = static_cast<NodeId>(item);
    if (!touched[u][id]) {
      touched[u][id] = 1;
      history[u].push_back(id);
    }
    edges.rows.push_back({std::to_string(u), std::to_string(id),
                          std::to_string(static_cast<std::int64_t>(s + 1) * cfg.time_step)});
  }

  RawTables& raw = out.raw;
  raw.schema.node_types = {"user", "item"};
  raw.schema.edge_types = {edges.key};
  raw.schema.user_type = "user";
  raw.schema.item_type = "item";
  raw.task.target_edge = edges.key;
  raw.task.interval = static_cast<std::int64_t>(per_interval) * cfg.time_step;
  raw.task.val_cutoff = static_cast<std::int64_t>(cfg.num_train_interactions) * cfg.time_step;
  raw.task.test_cutoff = raw.task.val_cutoff + raw.task.interval;
  raw.task.eval_k = cfg.eval_k;

  NodeTable users{"user", {"id", "activity"}, {}, std::nullopt};
  for (std::size_t u = 0; u < nu; ++u) users.rows.push_back({std::to_string(u), Num(gauss(rng))});
  NodeTable items{"item", {"id", "category", "price"}, {}, std::nullopt};
  for (std::size_t i = 0; i < ni; ++i) {
    items.rows.push_back({std::to_string(i), "c" + std::to_string(i % cfg.community_count),
                          Num(std::exp(gauss(rng)))});
  }
  raw.nodes = {std::move(users), std::move(items)};
  raw.edges = {std::move(edges)};
  return out;
}

SynthConfig ParseSynthConfig(const std::string& text) {
  SynthConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kInvalidConfig, "missing '=' in: " + line);
    const std::string key = Trim(line.substr(0, eq)), v = Trim(line.substr(eq + 1));
    try {
      if (key == "num_users") c.num_users = std::stoull(v);
      else if (key == "num_items") c.num_items = std::stoull(v);
      else if (key == "num_train_interactions") c.num_train_interactions = std::stoull(v);
      else if (key == "repeat_prob") c.repeat_prob = std::stod(v);
      else if (key == "repeater_fraction") c.repeater_fraction = std::stod(v);
      else if (key == "community_count") c.community_count = std::stoull(v);
      else if (key == "community_affinity") c.community_affinity = std::stod(v);
      else if (key == "num_intervals") c.num_intervals = std::stoull(v);
      else if (key == "time_step") c.time_step = std::stoll(v);
      else if (key == "eval_k") c.eval_k = static_cast<std::uint32_t>(std::stoul(v));
      else if (key == "seed") c.seed = std::stoull(v);
      else throw Error(ErrorKind::kInvalidConfig, "unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kInvalidConfig, key + ": bad value '" + v + "'");
    }
  }
  c.Validate();
  return c;
}

SynthConfig LoadSynthConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseSynthConfig(ss.str());
}

}  // namespace ctxgnn
