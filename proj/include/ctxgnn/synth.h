#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxgnn/dataset.h"

namespace ctxgnn {

struct SynthConfig {
  std::size_t num_users = 200;
  std::size_t num_items = 100;
  std::size_t num_train_interactions = 2000;  // up to val_cutoff, warm-up included
  double repeat_prob = 0.5;
  // Share of users that repeat at all; the rest never re-target a past item.
  double repeater_fraction = 1.0;
  std::size_t community_count = 4;
  double community_affinity = 0.5;
  std::size_t num_intervals = 8;  // training history length, in horizons
  std::int64_t time_step = 60;    // seconds between consecutive interactions
  std::uint32_t eval_k = 10;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct SynthData {
  RawTables raw;
  std::vector<bool> is_repeater;  // per user, not exposed as a feature
  std::size_t repeat_events = 0;  // realized repeats among repeaters' non-first draws
  std::size_t repeater_draws = 0;
};

// Interactions are drawn one at a time with increasing timestamps. Every
// user first makes one novel warm-up interaction early on, so each user has
// history before the first evaluation cutoff. Afterwards a random user
// repeats a uniformly chosen past item with its repeat probability;
// otherwise it draws a novel item (never one it has touched before) from its
// own community with probability community_affinity, else from all items.
SynthData GenerateSynthetic(const SynthConfig& config);

// key=value text with the field names above.
SynthConfig ParseSynthConfig(const std::string& text);
SynthConfig LoadSynthConfig(const std::string& path);

}  // namespace ctxgnn
