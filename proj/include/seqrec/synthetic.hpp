#pragma once

// Seeded synthetic interaction logs with planted item communities and
// flagged cross-community noise.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "seqrec/corpus.hpp"

namespace seqrec {

struct SyntheticSpec {
  std::size_t users = 20;
  std::size_t items = 30;
  std::size_t communities = 3;
  double noise_rate = 0.0;     // per event, replaced by an out-of-community item
  double drift = 0.0;          // per interval, chance a user switches community
  double inactive_rate = 0.0;  // per input interval, chance a user has no events
  std::size_t intervals = 4;   // including the final target interval
  std::size_t events_per_interval = 3;
  Timestamp interval_length = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  InteractionLog log;
  std::vector<std::size_t> item_community;               // [item]
  std::vector<std::vector<std::size_t>> user_community;  // [user][interval]
  std::vector<char> noise;                               // aligned with log.interactions
};

/// Items form contiguous equal blocks, one per community. Event timestamps of
/// interval t fall strictly inside [t*L, (t+1)*L] and the log spans exactly
/// [0, intervals*L], so slicing the log into `intervals` parts recovers the
/// generating intervals.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace seqrec
