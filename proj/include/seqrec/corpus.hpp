#pragma once

// Interaction logs, time slicing and the per-interval user-item / item-item
// graphs that everything downstream consumes.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace seqrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using Timestamp = std::int64_t;

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  Timestamp timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Dense-indexed interaction log, sorted by (user, timestamp). Equal
/// timestamps of one user keep input order.
struct InteractionLog {
  std::vector<Interaction> interactions;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  Timestamp t_a = 0;
  Timestamp t_b = 0;
  // Original identifiers, indexed by dense id.
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
};

struct ParseOptions {
  char delimiter = ',';
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t timestamp_column = 2;
};

/// Parses `user,item,timestamp` rows (header optional). Ids are remapped to
/// dense indices in first-seen order and duplicate rows are collapsed.
/// Throws DataError with the offending line number on malformed input.
InteractionLog parse_log(std::istream& in, const ParseOptions& options = {});
InteractionLog parse_log_file(const std::string& path, const ParseOptions& options = {});

/// Builds a log from already-dense interactions (sorts and deduplicates).
InteractionLog make_log(std::vector<Interaction> interactions);

struct Event {
  ItemId item = 0;
  Timestamp timestamp = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Sparse user-item adjacency for one interval. Rows are kept sorted by item.
class UserItemGraph {
 public:
  struct Entry {
    ItemId item = 0;
    double weight = 0.0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  UserItemGraph() = default;
  UserItemGraph(std::size_t num_users, std::size_t num_items);

  std::size_t num_users() const { return rows_.size(); }
  std::size_t num_items() const { return num_items_; }
  std::size_t nnz() const;

  /// Weight of (user, item), 0 when absent.
  double weight(UserId user, ItemId item) const;
  bool contains(UserId user, ItemId item) const;
  /// Inserts or overwrites an entry.
  void set(UserId user, ItemId item, double weight);
  const std::vector<Entry>& row(UserId user) const { return rows_.at(user); }
  std::vector<Entry>& mutable_row(UserId user) { return rows_.at(user); }

  friend bool operator==(const UserItemGraph&, const UserItemGraph&) = default;

 private:
  std::size_t num_items_ = 0;
  std::vector<std::vector<Entry>> rows_;
};

/// Symmetric weighted item-item graph for one interval, no self-loops.
/// Both directions are stored; each adjacency list is sorted by item.
class ItemItemGraph {
 public:
  struct Neighbor {
    ItemId item = 0;
    double weight = 0.0;
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
  };
  struct Edge {
    ItemId a = 0;
    ItemId b = 0;
    double weight = 0.0;
  };

  ItemItemGraph() = default;
  explicit ItemItemGraph(std::size_t num_items);

  std::size_t num_items() const { return adjacency_.size(); }
  /// Number of undirected edges.
  std::size_t num_edges() const;
  double weight(ItemId a, ItemId b) const;
  /// Sets the undirected edge {a, b}; a == b is rejected.
  void set(ItemId a, ItemId b, double weight);
  const std::vector<Neighbor>& neighbors(ItemId item) const { return adjacency_.at(item); }
  /// Undirected edges with a < b, in ascending (a, b) order.
  std::vector<Edge> edges() const;
  double max_weight() const;

  friend bool operator==(const ItemItemGraph&, const ItemItemGraph&) = default;

 private:
  std::vector<std::vector<Neighbor>> adjacency_;
};

/// Interval-sliced view of a log: per-user event sequences per interval and
/// the graphs derived from them.
struct IntervalGraphs {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_intervals = 0;
  Timestamp t_a = 0;
  Timestamp t_b = 0;
  // sequences[t][user], time-ordered.
  std::vector<std::vector<std::vector<Event>>> sequences;
  std::vector<UserItemGraph> user_item;
  std::vector<ItemItemGraph> item_item;

  std::size_t event_count(std::size_t interval) const;
  /// Distinct items of `user` in `interval`, ascending.
  std::vector<ItemId> items_of(UserId user, std::size_t interval) const;
};

/// Interval index of a timestamp for T equal-length intervals over [t_a, t_b].
std::size_t interval_of(Timestamp ts, Timestamp t_a, Timestamp t_b, std::size_t num_intervals);

/// Assigns every interaction to one of T equal-length intervals. Graphs are
/// left empty. Throws ConfigError for T == 0 and DataError for an empty log.
IntervalGraphs slice_time(const InteractionLog& log, std::size_t num_intervals);

/// Binary A_t: weight 1 for every (user, item) with at least one event.
void build_user_item(IntervalGraphs& graphs);

/// Z_t from consecutive distinct items in each user's sequence, divided by
/// the interval's max edge weight.
void build_item_item(IntervalGraphs& graphs);

/// slice_time + build_user_item + build_item_item.
IntervalGraphs build_interval_graphs(const InteractionLog& log, std::size_t num_intervals);

/// Input intervals plus the held-out prediction interval.
struct SplitData {
  IntervalGraphs inputs;
  // targets[user]: events of the final interval, time-ordered.
  std::vector<std::vector<Event>> targets;

  /// Users with at least one target event.
  std::vector<UserId> target_users() const;
};

/// Slices into T+1 intervals, builds graphs for the first T and holds out
/// the last as prediction targets. Graphs of the inputs never see it.
SplitData split_log(const InteractionLog& log, std::size_t num_input_intervals);

/// The most recent `max_len` events of a user over all input intervals,
/// oldest first.
std::vector<ItemId> recent_items(const IntervalGraphs& graphs, UserId user, std::size_t max_len);

}  // namespace seqrec
