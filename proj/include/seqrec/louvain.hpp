#pragma once

// Two-phase Louvain modularity optimisation on small weighted undirected
// graphs (the per-user similarity subgraphs used for noise detection).

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace seqrec {

/// Undirected weighted graph with optional self-loops. A self-loop of weight
/// w contributes 2w to its node's degree.
class WeightedGraph {
 public:
  struct Arc {
    std::size_t node = 0;
    double weight = 0.0;
  };

  WeightedGraph() = default;
  explicit WeightedGraph(std::size_t num_nodes);

  std::size_t num_nodes() const { return adjacency_.size(); }
  /// Adds weight to the edge {a, b}; parallel additions accumulate.
  void add_edge(std::size_t a, std::size_t b, double weight);
  const std::vector<Arc>& arcs(std::size_t node) const { return adjacency_.at(node); }
  double self_loop(std::size_t node) const { return self_loops_.at(node); }
  double degree(std::size_t node) const;
  /// Sum of all edge weights (m).
  double total_weight() const;

 private:
  std::vector<std::vector<Arc>> adjacency_;
  std::vector<double> self_loops_;
};

/// Newman-Girvan modularity of an assignment of nodes to communities.
/// Zero for a graph without edges.
double modularity(const WeightedGraph& graph, std::span<const std::size_t> community_of);

struct Partition {
  // Community ids are dense and numbered by first appearance in node order.
  std::vector<std::size_t> community_of;
  double modularity = 0.0;

  std::size_t num_communities() const;
  /// Sizes indexed by community id.
  std::vector<std::size_t> community_sizes() const;
};

/// One accepted local move, reported on the graph of the current level.
struct LouvainMove {
  const WeightedGraph& graph;
  std::size_t node;
  std::size_t from;
  std::size_t to;
  std::span<const std::size_t> community_of;  // state after the move
  double delta_modularity;
};

using LouvainMoveHook = std::function<void(const LouvainMove&)>;

/// Local moves in ascending node order until no move improves modularity,
/// then aggregation, repeated until a level makes no move. Deterministic.
Partition louvain(const WeightedGraph& graph, const LouvainMoveHook& on_move = {});

}  // namespace seqrec
