#include "seqrec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "seqrec/error.hpp"

namespace seqrec {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

bool parse_int(std::string_view s, Timestamp& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct IdMap {
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::string> names;

  std::uint32_t get(std::string_view key) {
    auto [it, inserted] = index.try_emplace(std::string(key), static_cast<std::uint32_t>(names.size()));
    if (inserted) names.emplace_back(key);
    return it->second;
  }
};

struct TripleHash {
  std::size_t operator()(const Interaction& x) const noexcept {
    std::size_t h = std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(x.user) << 32) | x.item);
    return h ^ (std::hash<Timestamp>{}(x.timestamp) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  }
};

void finalize(InteractionLog& log) {
  std::unordered_set<Interaction, TripleHash> seen;
  seen.reserve(log.interactions.size());
  std::vector<Interaction> unique;
  unique.reserve(log.interactions.size());
  for (const Interaction& x : log.interactions) {
    if (seen.insert(x).second) unique.push_back(x);
  }
  std::stable_sort(unique.begin(), unique.end(), [](const Interaction& a, const Interaction& b) {
    if (a.user != b.user) return a.user < b.user;
    return a.timestamp < b.timestamp;
  });
  log.interactions = std::move(unique);
  if (log.interactions.empty()) throw DataError("interaction log is empty");
  std::size_t max_user = 0;
  std::size_t max_item = 0;
  log.t_a = log.interactions.front().timestamp;
  log.t_b = log.t_a;
  for (const Interaction& x : log.interactions) {
    max_user = std::max<std::size_t>(max_user, x.user);
    max_item = std::max<std::size_t>(max_item, x.item);
    log.t_a = std::min(log.t_a, x.timestamp);
    log.t_b = std::max(log.t_b, x.timestamp);
  }
  log.num_users = std::max(log.num_users, max_user + 1);
  log.num_items = std::max(log.num_items, max_item + 1);
}

}  // namespace

InteractionLog parse_log(std::istream& in, const ParseOptions& options) {
  const std::size_t needed =
      std::max({options.user_column, options.item_column, options.timestamp_column}) + 1;
  IdMap users;
  IdMap items;
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(view, options.delimiter);
    if (fields.size() < needed) {
      throw DataError("line " + std::to_string(line_no) + ": expected at least " +
                      std::to_string(needed) + " fields, got " + std::to_string(fields.size()));
    }
    Timestamp ts = 0;
    if (!parse_int(fields[options.timestamp_column], ts)) {
      if (!seen_data && line_no == 1) continue;  // header row
      throw DataError("line " + std::to_string(line_no) + ": timestamp '" +
                      std::string(fields[options.timestamp_column]) + "' is not an integer");
    }
    if (fields[options.user_column].empty() || fields[options.item_column].empty()) {
      throw DataError("line " + std::to_string(line_no) + ": empty user or item id");
    }
    seen_data = true;
    log.interactions.push_back(
        {users.get(fields[options.user_column]), items.get(fields[options.item_column]), ts});
  }
  if (!seen_data) throw DataError("interaction log is empty");
  log.user_names = std::move(users.names);
  log.item_names = std::move(items.names);
  log.num_users = log.user_names.size();
  log.num_items = log.item_names.size();
  finalize(log);
  return log;
}

InteractionLog parse_log_file(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction log '" + path + "'");
  return parse_log(in, options);
}

InteractionLog make_log(std::vector<Interaction> interactions) {
  InteractionLog log;
  log.interactions = std::move(interactions);
  finalize(log);
  log.user_names.resize(log.num_users);
  log.item_names.resize(log.num_items);
  for (std::size_t u = 0; u < log.num_users; ++u) log.user_names[u] = std::to_string(u);
  for (std::size_t i = 0; i < log.num_items; ++i) log.item_names[i] = std::to_string(i);
  return log;
}

// ---------------------------------------------------------------------------

UserItemGraph::UserItemGraph(std::size_t num_users, std::size_t num_items)
    : num_items_(num_items), rows_(num_users) {}

std::size_t UserItemGraph::nnz() const {
  std::size_t n = 0;
  for (const auto& row : rows_) n += row.size();
  return n;
}

double UserItemGraph::weight(UserId user, ItemId item) const {
  const auto& row = rows_.at(user);
  auto it = std::lower_bound(row.begin(), row.end(), item,
                             [](const Entry& e, ItemId i) { return e.item < i; });
  return (it != row.end() && it->item == item) ? it->weight : 0.0;
}

bool UserItemGraph::contains(UserId user, ItemId item) const {
  const auto& row = rows_.at(user);
  auto it = std::lower_bound(row.begin(), row.end(), item,
                             [](const Entry& e, ItemId i) { return e.item < i; });
  return it != row.end() && it->item == item;
}

void UserItemGraph::set(UserId user, ItemId item, double weight) {
  if (item >= num_items_) throw DataError("item index out of range in user-item graph");
  auto& row = rows_.at(user);
  auto it = std::lower_bound(row.begin(), row.end(), item,
                             [](const Entry& e, ItemId i) { return e.item < i; });
  if (it != row.end() && it->item == item) {
    it->weight = weight;
  } else {
    row.insert(it, Entry{item, weight});
  }
}

ItemItemGraph::ItemItemGraph(std::size_t num_items) : adjacency_(num_items) {}

std::size_t ItemItemGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& adj : adjacency_) n += adj.size();
  return n / 2;
}

double ItemItemGraph::weight(ItemId a, ItemId b) const {
  const auto& adj = adjacency_.at(a);
  auto it = std::lower_bound(adj.begin(), adj.end(), b,
                             [](const Neighbor& n, ItemId i) { return n.item < i; });
  return (it != adj.end() && it->item == b) ? it->weight : 0.0;
}

void ItemItemGraph::set(ItemId a, ItemId b, double weight) {
  if (a == b) throw DataError("self-loops are not stored in the item-item graph");
  auto put = [](std::vector<Neighbor>& adj, ItemId other, double w) {
    auto it = std::lower_bound(adj.begin(), adj.end(), other,
                               [](const Neighbor& n, ItemId i) { return n.item < i; });
    if (it != adj.end() && it->item == other) {
      it->weight = w;
    } else {
      adj.insert(it, Neighbor{other, w});
    }
  };
  put(adjacency_.at(a), b, weight);
  put(adjacency_.at(b), a, weight);
}

std::vector<ItemItemGraph::Edge> ItemItemGraph::edges() const {
  std::vector<Edge> out;
  for (ItemId a = 0; a < adjacency_.size(); ++a) {
    for (const Neighbor& n : adjacency_[a]) {
      if (a < n.item) out.push_back({a, n.item, n.weight});
    }
  }
  return out;
}

double ItemItemGraph::max_weight() const {
  double m = 0.0;
  for (const auto& adj : adjacency_)
    for (const Neighbor& n : adj) m = std::max(m, n.weight);
  return m;
}

// ---------------------------------------------------------------------------

std::size_t IntervalGraphs::event_count(std::size_t interval) const {
  std::size_t n = 0;
  for (const auto& seq : sequences.at(interval)) n += seq.size();
  return n;
}

std::vector<ItemId> IntervalGraphs::items_of(UserId user, std::size_t interval) const {
  std::vector<ItemId> items;
  for (const Event& e : sequences.at(interval).at(user)) items.push_back(e.item);
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

std::size_t interval_of(Timestamp ts, Timestamp t_a, Timestamp t_b, std::size_t num_intervals) {
  if (t_b <= t_a || num_intervals <= 1 || ts <= t_a) return 0;
  if (ts >= t_b) return num_intervals - 1;
  // floor((ts - t_a) / ((t_b - t_a) / T)) in exact integer arithmetic.
  const __int128 num = static_cast<__int128>(ts - t_a) * static_cast<__int128>(num_intervals);
  const auto idx = static_cast<std::size_t>(num / static_cast<__int128>(t_b - t_a));
  return std::min(idx, num_intervals - 1);
}

IntervalGraphs slice_time(const InteractionLog& log, std::size_t num_intervals) {
  if (num_intervals == 0) throw ConfigError("number of intervals must be at least 1");
  if (log.interactions.empty()) throw DataError("interaction log is empty");
  IntervalGraphs g;
  g.num_users = log.num_users;
  g.num_items = log.num_items;
  g.num_intervals = num_intervals;
  g.t_a = log.t_a;
  g.t_b = log.t_b;
  g.sequences.assign(num_intervals, std::vector<std::vector<Event>>(log.num_users));
  // Log order is (user, timestamp) with stable ties, so appending keeps order.
  for (const Interaction& x : log.interactions) {
    const std::size_t t = interval_of(x.timestamp, log.t_a, log.t_b, num_intervals);
    g.sequences[t][x.user].push_back({x.item, x.timestamp});
  }
  g.user_item.assign(num_intervals, UserItemGraph(log.num_users, log.num_items));
  g.item_item.assign(num_intervals, ItemItemGraph(log.num_items));
  return g;
}

void build_user_item(IntervalGraphs& graphs) {
  graphs.user_item.assign(graphs.num_intervals, UserItemGraph(graphs.num_users, graphs.num_items));
  for (std::size_t t = 0; t < graphs.num_intervals; ++t) {
    auto& a = graphs.user_item[t];
    for (UserId u = 0; u < graphs.num_users; ++u) {
      auto& row = a.mutable_row(u);
      for (ItemId item : graphs.items_of(u, t)) row.push_back({item, 1.0});
    }
  }
}

void build_item_item(IntervalGraphs& graphs) {
  graphs.item_item.assign(graphs.num_intervals, ItemItemGraph(graphs.num_items));
  for (std::size_t t = 0; t < graphs.num_intervals; ++t) {
    // Integer counts first so accumulation order cannot affect the result.
    std::unordered_map<std::uint64_t, std::uint64_t> counts;
    for (const auto& seq : graphs.sequences[t]) {
      for (std::size_t k = 1; k < seq.size(); ++k) {
        ItemId a = seq[k - 1].item;
        ItemId b = seq[k].item;
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        ++counts[(static_cast<std::uint64_t>(a) << 32) | b];
      }
    }
    if (counts.empty()) continue;
    std::uint64_t max_count = 0;
    for (const auto& [key, c] : counts) max_count = std::max(max_count, c);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end());
    auto& z = graphs.item_item[t];
    for (const auto& [key, c] : sorted) {
      z.set(static_cast<ItemId>(key >> 32), static_cast<ItemId>(key & 0xffffffffULL),
            static_cast<double>(c) / static_cast<double>(max_count));
    }
  }
}

IntervalGraphs build_interval_graphs(const InteractionLog& log, std::size_t num_intervals) {
  IntervalGraphs g = slice_time(log, num_intervals);
  build_user_item(g);
  build_item_item(g);
  return g;
}

std::vector<UserId> SplitData::target_users() const {
  std::vector<UserId> users;
  for (UserId u = 0; u < targets.size(); ++u)
    if (!targets[u].empty()) users.push_back(u);
  return users;
}

SplitData split_log(const InteractionLog& log, std::size_t num_input_intervals) {
  if (num_input_intervals == 0) throw ConfigError("number of input intervals must be at least 1");
  IntervalGraphs all = slice_time(log, num_input_intervals + 1);
  SplitData split;
  split.targets = std::move(all.sequences.back());
  all.sequences.pop_back();
  all.num_intervals = num_input_intervals;
  const __int128 span = static_cast<__int128>(log.t_b - log.t_a);
  all.t_b = log.t_a + static_cast<Timestamp>(span * num_input_intervals / (num_input_intervals + 1));
  build_user_item(all);
  build_item_item(all);
  split.inputs = std::move(all);
  return split;
}

std::vector<ItemId> recent_items(const IntervalGraphs& graphs, UserId user, std::size_t max_len) {
  std::vector<ItemId> items;
  for (std::size_t t = 0; t < graphs.num_intervals; ++t)
    for (const Event& e : graphs.sequences[t][user]) items.push_back(e.item);
  if (items.size() > max_len) items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(max_len));
  return items;
}

}  // namespace seqrec
