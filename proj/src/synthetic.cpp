#include "seqrec/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <tuple>

#include "seqrec/error.hpp"

namespace seqrec {

void SyntheticSpec::validate() const {
  if (users == 0 || items == 0) throw ConfigError("synthetic spec needs users and items");
  if (communities == 0 || communities > items) throw ConfigError("communities must lie in [1, items]");
  for (double r : {noise_rate, drift, inactive_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("synthetic rates must lie in [0, 1]");
  if (noise_rate > 0.0 && communities < 2) throw ConfigError("noise needs at least two communities");
  if (intervals < 2) throw ConfigError("synthetic logs need at least two intervals");
  if (events_per_interval == 0) throw ConfigError("events_per_interval must be positive");
  if (interval_length < static_cast<Timestamp>(events_per_interval) + 2) {
    throw ConfigError("interval_length too short for events_per_interval");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticData data;
  data.item_community.resize(spec.items);
  std::vector<std::vector<ItemId>> members(spec.communities);
  for (ItemId j = 0; j < spec.items; ++j) {
    const std::size_t c = j * spec.communities / spec.items;
    data.item_community[j] = c;
    members[c].push_back(j);
  }

  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  std::vector<Interaction> events;
  std::set<std::tuple<UserId, ItemId, Timestamp>> noisy;
  data.user_community.assign(spec.users, std::vector<std::size_t>(spec.intervals));
  const Timestamp span = spec.interval_length;
  for (UserId u = 0; u < spec.users; ++u) {
    std::size_t c = pick(spec.communities);
    for (std::size_t t = 0; t < spec.intervals; ++t) {
      if (t > 0 && spec.communities > 1 && unit(rng) < spec.drift) {
        c = (c + 1 + pick(spec.communities - 1)) % spec.communities;
      }
      data.user_community[u][t] = c;
      const bool target = t + 1 == spec.intervals;
      if (!target && unit(rng) < spec.inactive_rate) continue;

      // Distinct in-community items where possible, in random order.
      std::vector<ItemId> pool = members[c];
      std::shuffle(pool.begin(), pool.end(), rng);
      std::vector<Timestamp> stamps;
      std::uniform_int_distribution<Timestamp> when(static_cast<Timestamp>(t) * span + 1,
                                                    static_cast<Timestamp>(t + 1) * span - 1);
      while (stamps.size() < spec.events_per_interval) {
        const Timestamp ts = when(rng);
        if (std::find(stamps.begin(), stamps.end(), ts) == stamps.end()) stamps.push_back(ts);
      }
      std::sort(stamps.begin(), stamps.end());
      for (std::size_t k = 0; k < spec.events_per_interval; ++k) {
        ItemId item = pool[k % pool.size()];
        bool flagged = false;
        if (spec.noise_rate > 0.0 && unit(rng) < spec.noise_rate) {
          const std::size_t other = (c + 1 + pick(spec.communities - 1)) % spec.communities;
          item = members[other][pick(members[other].size())];
          flagged = true;
        }
        events.push_back({u, item, stamps[k]});
        if (flagged) noisy.insert({u, item, stamps[k]});
      }
    }
  }
  if (events.empty()) throw DataError("synthetic spec produced no events");

  // Pin the log's extent to [0, intervals * L] so slicing is exact.
  auto first = std::min_element(events.begin(), events.end(),
                                [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
  auto last = std::max_element(events.begin(), events.end(),
                               [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
  auto pin = [&](Interaction& x, Timestamp ts) {
    if (noisy.erase({x.user, x.item, x.timestamp}) > 0) noisy.insert({x.user, x.item, ts});
    x.timestamp = ts;
  };
  pin(*first, 0);
  pin(*last, static_cast<Timestamp>(spec.intervals) * span);

  data.log = make_log(std::move(events));
  data.log.num_users = std::max(data.log.num_users, spec.users);
  data.log.num_items = std::max(data.log.num_items, spec.items);
  data.log.user_names.resize(data.log.num_users);
  data.log.item_names.resize(data.log.num_items);
  for (std::size_t u = 0; u < data.log.num_users; ++u) data.log.user_names[u] = std::to_string(u);
  for (std::size_t i = 0; i < data.log.num_items; ++i) data.log.item_names[i] = std::to_string(i);
  data.noise.reserve(data.log.interactions.size());
  for (const Interaction& x : data.log.interactions)
    data.noise.push_back(noisy.count({x.user, x.item, x.timestamp}) ? 1 : 0);
  return data;
}

}  // namespace seqrec
