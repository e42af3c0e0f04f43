#include "seqrec/refine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "seqrec/error.hpp"
#include "seqrec/louvain.hpp"
#include "seqrec/parallel.hpp"

namespace seqrec {

std::size_t SimilarityMatrix::num_entries() const {
  std::size_t n = 0;
  for (const auto& row : rows_) n += row.size();
  return n;
}

double SimilarityMatrix::value(ItemId i, ItemId j) const {
  const auto& row = rows_.at(i);
  auto it = std::lower_bound(row.begin(), row.end(), j, [](const Entry& e, ItemId x) { return e.item < x; });
  return (it != row.end() && it->item == j) ? it->value : 0.0;
}

double SimilarityMatrix::max_value() const {
  double m = 0.0;
  for (const auto& row : rows_)
    for (const Entry& e : row) m = std::max(m, e.value);
  return m;
}

namespace {

using Adjacency = std::vector<std::vector<ItemItemGraph::Neighbor>>;

// Strongest-first, ties by ascending item.
bool stronger(const ItemItemGraph::Neighbor& a, const ItemItemGraph::Neighbor& b) {
  if (a.weight != b.weight) return a.weight > b.weight;
  return a.item < b.item;
}

}  // namespace

SimilarityMatrix item_similarity(const ItemItemGraph& z, const SimilarityOptions& options) {
  const std::size_t n = z.num_items();
  SimilarityMatrix sim(n);
  if (n < 2) return sim;

  // rows[i]: Z row i (possibly truncated). cols[k]: items i with k in rows[i].
  Adjacency rows(n);
  for (ItemId i = 0; i < n; ++i) {
    rows[i] = z.neighbors(i);
    if (options.top_k > 0 && rows[i].size() > options.top_k) {
      std::partial_sort(rows[i].begin(), rows[i].begin() + static_cast<std::ptrdiff_t>(options.top_k),
                        rows[i].end(), stronger);
      rows[i].resize(options.top_k);
      std::sort(rows[i].begin(), rows[i].end(), [](const auto& a, const auto& b) { return a.item < b.item; });
    }
  }
  Adjacency cols(n);
  for (ItemId i = 0; i < n; ++i)
    for (const auto& nb : rows[i]) cols[nb.item].push_back({i, nb.weight});

  std::vector<double> numerator(n, 0.0);
  std::vector<double> denominator(n, 0.0);
  std::vector<char> seen(n, 0);
  std::vector<ItemId> touched;
  for (ItemId i = 0; i < n; ++i) {
    touched.clear();
    auto touch = [&](ItemId j) {
      if (!seen[j]) {
        seen[j] = 1;
        touched.push_back(j);
      }
    };
    // Column k = i of (Z+I): contributes (Z+I)[j,i] * 1 for every j.
    for (const auto& nb : cols[i]) {
      touch(nb.item);
      numerator[nb.item] += nb.weight;
    }
    // Columns k != i with Z[i,k] > 0.
    for (const auto& ik : rows[i]) {
      const ItemId k = ik.item;
      touch(k);
      numerator[k] += ik.weight;  // (Z+I)[k,k] = 1
      for (const auto& jk : cols[k]) {
        touch(jk.item);
        numerator[jk.item] += ik.weight * jk.weight;
        denominator[jk.item] += ik.weight * jk.weight;
      }
    }
    std::sort(touched.begin(), touched.end());
    auto& out = sim.mutable_row(i);
    for (ItemId j : touched) {
      if (j != i && numerator[j] > 0.0) out.push_back({j, numerator[j] / (denominator[j] + options.epsilon)});
      numerator[j] = 0.0;
      denominator[j] = 0.0;
      seen[j] = 0;
    }
    if (options.top_k > 0 && out.size() > options.top_k) {
      auto by_value = [](const SimilarityMatrix::Entry& a, const SimilarityMatrix::Entry& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.item < b.item;
      };
      std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(options.top_k), out.end(), by_value);
      out.resize(options.top_k);
      std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.item < b.item; });
    }
  }
  return sim;
}

void RefineConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  // Values above 1 are accepted: they switch augmentation off.
  if (!(min_sim > 0.0) || !std::isfinite(min_sim)) throw ConfigError("min_sim must be positive and finite");
  if (!(similarity.epsilon > 0.0)) throw ConfigError("similarity epsilon must be positive");
}

nlohmann::json RefinementReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t t = 0; t < intervals.size(); ++t) {
    per.push_back({{"interval", t},
                   {"initial", intervals[t].initial},
                   {"noisy", intervals[t].noisy},
                   {"augmented", intervals[t].augmented}});
  }
  return {{"initial", initial},
          {"noisy", noisy},
          {"augmented", augmented},
          {"execution_time_sec", wall_time_seconds},
          {"intervals", per}};
}

std::vector<ItemId> detect_noise(UserId user, std::size_t t, const SimilarityMatrix& sim, IntervalGraphs& graphs,
                                 const RefineConfig& cfg) {
  const std::vector<ItemId> items = graphs.items_of(user, t);
  if (items.empty() || items.size() < cfg.min_items_for_detection) return {};

  WeightedGraph sub(items.size());
  for (std::size_t a = 0; a < items.size(); ++a) {
    for (std::size_t b = a + 1; b < items.size(); ++b) {
      // Truncated similarity rows may be one-sided; take the stronger side.
      const double w = std::max(sim.value(items[a], items[b]), sim.value(items[b], items[a]));
      if (w > 0.0) sub.add_edge(a, b, w);
    }
  }
  const Partition partition = louvain(sub);
  const auto sizes = partition.community_sizes();
  std::vector<ItemId> noise;
  for (std::size_t a = 0; a < items.size(); ++a)
    if (sizes[partition.community_of[a]] == 1) noise.push_back(items[a]);

  auto& row = graphs.user_item.at(t).mutable_row(user);
  for (ItemId item : noise) {
    auto it = std::lower_bound(row.begin(), row.end(), item,
                               [](const UserItemGraph::Entry& e, ItemId x) { return e.item < x; });
    if (it != row.end() && it->item == item) it->weight *= cfg.beta;
  }
  if (cfg.beta == 0.0) {
    std::erase_if(row, [](const UserItemGraph::Entry& e) { return e.weight == 0.0; });
  }
  return noise;
}

namespace {

// Adds the strongest candidates (by similarity, ties by item) not already in
// the user's A_t row.
std::vector<std::pair<ItemId, double>> add_candidates(UserId user, std::size_t t,
                                                      const std::vector<ItemId>& sources,
                                                      const std::vector<ItemId>& excluded,
                                                      const SimilarityMatrix& sim, IntervalGraphs& graphs,
                                                      const RefineConfig& cfg) {
  auto& a_t = graphs.user_item.at(t);
  std::vector<std::pair<ItemId, double>> best;  // (item, similarity)
  for (ItemId i : sources) {
    for (const auto& e : sim.row(i)) {
      if (e.value < cfg.min_sim) continue;
      if (std::binary_search(excluded.begin(), excluded.end(), e.item)) continue;
      if (a_t.contains(user, e.item)) continue;
      auto it = std::find_if(best.begin(), best.end(), [&](const auto& p) { return p.first == e.item; });
      if (it == best.end()) {
        best.emplace_back(e.item, e.value);
      } else {
        it->second = std::max(it->second, e.value);
      }
    }
  }
  std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (best.size() > cfg.max_aug_per_user) best.resize(cfg.max_aug_per_user);
  std::vector<std::pair<ItemId, double>> added;
  for (const auto& [item, s] : best) {
    const double w = std::min(1.0, s);
    a_t.set(user, item, w);
    added.emplace_back(item, w);
  }
  return added;
}

}  // namespace

std::vector<std::pair<ItemId, double>> augment_inactive(UserId user, std::size_t t, const SimilarityMatrix& sim,
                                                        IntervalGraphs& graphs, const RefineConfig& cfg) {
  if (t == 0 || t >= graphs.num_intervals) return {};
  if (!graphs.sequences[t][user].empty()) return {};
  const std::vector<ItemId> previous = graphs.items_of(user, t - 1);
  if (previous.empty()) return {};
  return add_candidates(user, t, previous, {}, sim, graphs, cfg);
}

std::vector<std::pair<ItemId, double>> augment_active(UserId user, std::size_t t, const SimilarityMatrix& sim,
                                                      IntervalGraphs& graphs, const RefineConfig& cfg) {
  const std::vector<ItemId> items = graphs.items_of(user, t);
  if (items.empty()) return {};
  return add_candidates(user, t, items, items, sim, graphs, cfg);
}

std::pair<IntervalGraphs, RefinementReport> refine_all(const IntervalGraphs& graphs, const RefineConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  IntervalGraphs out = graphs;
  RefinementReport report;
  report.intervals.resize(out.num_intervals);
  std::vector<std::size_t> per_user(out.num_users);

  for (std::size_t t = 0; t < out.num_intervals; ++t) {
    auto& counts = report.intervals[t];
    counts.initial = out.user_item[t].nnz();
    if (!cfg.denoise && !cfg.augment) continue;
    const SimilarityMatrix sim = item_similarity(out.item_item[t], cfg.similarity);

    if (cfg.denoise) {
      std::fill(per_user.begin(), per_user.end(), 0);
      parallel_for(out.num_users, [&](std::size_t u) {
        per_user[u] = detect_noise(static_cast<UserId>(u), t, sim, out, cfg).size();
      });
      for (std::size_t c : per_user) counts.noisy += c;
    }
    if (cfg.augment) {
      std::fill(per_user.begin(), per_user.end(), 0);
      parallel_for(out.num_users, [&](std::size_t u) {
        const auto user = static_cast<UserId>(u);
        per_user[u] = out.sequences[t][u].empty() ? augment_inactive(user, t, sim, out, cfg).size()
                                                  : augment_active(user, t, sim, out, cfg).size();
      });
      for (std::size_t c : per_user) counts.augmented += c;
    }
  }
  for (const auto& c : report.intervals) {
    report.initial += c.initial;
    report.noisy += c.noisy;
    report.augmented += c.augmented;
  }
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(out), report};
}

}  // namespace seqrec
