#include "seqrec/louvain.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace seqrec {

namespace {
// Gains below this are treated as no improvement, which keeps the local
// phase from cycling on floating point noise.
constexpr double kMinGain = 1e-12;
}  // namespace

WeightedGraph::WeightedGraph(std::size_t num_nodes) : adjacency_(num_nodes), self_loops_(num_nodes, 0.0) {}

void WeightedGraph::add_edge(std::size_t a, std::size_t b, double weight) {
  if (weight < 0.0) throw std::invalid_argument("louvain: negative edge weight");
  if (a == b) {
    self_loops_.at(a) += weight;
    return;
  }
  auto bump = [weight](std::vector<Arc>& arcs, std::size_t other) {
    for (Arc& arc : arcs) {
      if (arc.node == other) {
        arc.weight += weight;
        return;
      }
    }
    arcs.push_back({other, weight});
  };
  bump(adjacency_.at(a), b);
  bump(adjacency_.at(b), a);
}

double WeightedGraph::degree(std::size_t node) const {
  double k = 2.0 * self_loops_.at(node);
  for (const Arc& arc : adjacency_.at(node)) k += arc.weight;
  return k;
}

double WeightedGraph::total_weight() const {
  double twice = 0.0;
  for (std::size_t v = 0; v < num_nodes(); ++v) twice += degree(v);
  return twice / 2.0;
}

double modularity(const WeightedGraph& graph, std::span<const std::size_t> community_of) {
  const double m2 = 2.0 * graph.total_weight();
  if (m2 <= 0.0) return 0.0;
  std::size_t k = 0;
  for (std::size_t c : community_of) k = std::max(k, c + 1);
  std::vector<double> inside(k, 0.0);
  std::vector<double> total(k, 0.0);
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    const std::size_t c = community_of[v];
    total[c] += graph.degree(v);
    inside[c] += 2.0 * graph.self_loop(v);
    for (const auto& arc : graph.arcs(v))
      if (community_of[arc.node] == c) inside[c] += arc.weight;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < k; ++c) q += inside[c] / m2 - (total[c] / m2) * (total[c] / m2);
  return q;
}

std::size_t Partition::num_communities() const {
  std::size_t k = 0;
  for (std::size_t c : community_of) k = std::max(k, c + 1);
  return k;
}

std::vector<std::size_t> Partition::community_sizes() const {
  std::vector<std::size_t> sizes(num_communities(), 0);
  for (std::size_t c : community_of) ++sizes[c];
  return sizes;
}

namespace {

// Relabels to 0..k-1 by first appearance; returns k.
std::size_t renumber(std::vector<std::size_t>& community_of) {
  std::map<std::size_t, std::size_t> relabel;
  for (std::size_t& c : community_of) {
    auto [it, inserted] = relabel.try_emplace(c, relabel.size());
    c = it->second;
  }
  return relabel.size();
}

// Returns true if any node changed community.
bool local_moves(const WeightedGraph& g, std::vector<std::size_t>& community_of, const LouvainMoveHook& hook) {
  const std::size_t n = g.num_nodes();
  const double m = g.total_weight();
  const double m2 = 2.0 * m;
  std::vector<double> degree(n);
  std::vector<double> total(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    degree[v] = g.degree(v);
    total[community_of[v]] += degree[v];
  }
  std::vector<double> link(n, 0.0);
  std::vector<std::size_t> touched;
  bool any_move = false;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t own = community_of[v];
      touched.clear();
      touched.push_back(own);
      link[own] = 0.0;
      for (const auto& arc : g.arcs(v)) {
        const std::size_t c = community_of[arc.node];
        if (link[c] == 0.0 && std::find(touched.begin(), touched.end(), c) == touched.end()) touched.push_back(c);
        link[c] += arc.weight;
      }
      total[own] -= degree[v];
      auto gain = [&](std::size_t c) { return link[c] - total[c] * degree[v] / m2; };
      const double stay = gain(own);
      std::size_t best = own;
      double best_gain = stay;
      std::sort(touched.begin(), touched.end());
      for (std::size_t c : touched) {
        const double gc = gain(c);
        if (gc > best_gain + kMinGain) {
          best = c;
          best_gain = gc;
        }
      }
      total[best] += degree[v];
      for (std::size_t c : touched) link[c] = 0.0;
      if (best != own) {
        community_of[v] = best;
        improved = true;
        any_move = true;
        if (hook) hook(LouvainMove{g, v, own, best, community_of, (best_gain - stay) / m});
      }
    }
  }
  return any_move;
}

WeightedGraph aggregate(const WeightedGraph& g, std::span<const std::size_t> community_of, std::size_t k) {
  std::map<std::pair<std::size_t, std::size_t>, double> edges;
  std::vector<double> self(k, 0.0);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const std::size_t cv = community_of[v];
    self[cv] += g.self_loop(v);
    for (const auto& arc : g.arcs(v)) {
      if (arc.node < v) continue;
      const std::size_t cu = community_of[arc.node];
      if (cu == cv) {
        self[cv] += arc.weight;
      } else {
        edges[{std::min(cu, cv), std::max(cu, cv)}] += arc.weight;
      }
    }
  }
  WeightedGraph out(k);
  for (std::size_t c = 0; c < k; ++c)
    if (self[c] > 0.0) out.add_edge(c, c, self[c]);
  for (const auto& [key, w] : edges) out.add_edge(key.first, key.second, w);
  return out;
}

}  // namespace

Partition louvain(const WeightedGraph& graph, const LouvainMoveHook& on_move) {
  Partition result;
  const std::size_t n = graph.num_nodes();
  result.community_of.resize(n);
  for (std::size_t v = 0; v < n; ++v) result.community_of[v] = v;
  if (n == 0 || graph.total_weight() <= 0.0) {
    result.modularity = modularity(graph, result.community_of);
    return result;
  }

  WeightedGraph level = graph;
  while (true) {
    std::vector<std::size_t> level_comm(level.num_nodes());
    for (std::size_t v = 0; v < level_comm.size(); ++v) level_comm[v] = v;
    if (!local_moves(level, level_comm, on_move)) break;
    const std::size_t k = renumber(level_comm);
    for (std::size_t& c : result.community_of) c = level_comm[c];
    if (k == level.num_nodes()) break;
    level = aggregate(level, level_comm, k);
  }
  renumber(result.community_of);
  result.modularity = modularity(graph, result.community_of);
  return result;
}

}  // namespace seqrec
