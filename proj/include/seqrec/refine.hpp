#pragma once

// Item similarity, per-user noise detection and edge augmentation on the
// interval graphs.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "seqrec/corpus.hpp"

namespace seqrec {

/// Sparse non-negative item-item similarity for one interval. Rows are
/// sorted by item; the diagonal is never stored.
class SimilarityMatrix {
 public:
  struct Entry {
    ItemId item = 0;
    double value = 0.0;
  };

  SimilarityMatrix() = default;
  explicit SimilarityMatrix(std::size_t num_items) : rows_(num_items) {}

  std::size_t num_items() const { return rows_.size(); }
  std::size_t num_entries() const;
  double value(ItemId i, ItemId j) const;
  const std::vector<Entry>& row(ItemId i) const { return rows_.at(i); }
  std::vector<Entry>& mutable_row(ItemId i) { return rows_.at(i); }
  double max_value() const;

 private:
  std::vector<std::vector<Entry>> rows_;
};

struct SimilarityOptions {
  double epsilon = 1e-8;
  // Keep only the top_k strongest neighbours per item, both in Z before the
  // two-hop product and in each output row. 0 means exact.
  std::size_t top_k = 0;
};

/// sim(i, j) = [(Z+I)(Z+I)^T]_ij / ([Z Z^T]_ij + eps) for i != j; pairs with
/// a zero numerator are omitted.
SimilarityMatrix item_similarity(const ItemItemGraph& z, const SimilarityOptions& options = {});

struct RefineConfig {
  double beta = 0.5;      // multiplier applied to noisy A_t entries
  double min_sim = 0.7;   // augmentation threshold
  std::size_t max_aug_per_user = 10;
  std::size_t min_items_for_detection = 3;
  SimilarityOptions similarity{1e-8, 50};
  bool denoise = true;
  bool augment = true;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct RefinementReport {
  struct IntervalCounts {
    std::size_t initial = 0;
    std::size_t noisy = 0;
    std::size_t augmented = 0;
  };
  std::vector<IntervalCounts> intervals;
  std::size_t initial = 0;
  std::size_t noisy = 0;
  std::size_t augmented = 0;
  double wall_time_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Items of `user` in interval `t` that end up in singleton communities of
/// the user's induced similarity subgraph. Their A_t weights are multiplied
/// by beta. Users with fewer than min_items_for_detection items are skipped.
std::vector<ItemId> detect_noise(UserId user, std::size_t t, const SimilarityMatrix& sim, IntervalGraphs& graphs,
                                 const RefineConfig& cfg);

/// For a user inactive in t but active in t-1: adds items similar (at t) to
/// the user's t-1 items. Returns the added (item, weight) pairs.
std::vector<std::pair<ItemId, double>> augment_inactive(UserId user, std::size_t t, const SimilarityMatrix& sim,
                                                        IntervalGraphs& graphs, const RefineConfig& cfg);

/// For a user active in t: adds similar items the user did not interact with.
std::vector<std::pair<ItemId, double>> augment_active(UserId user, std::size_t t, const SimilarityMatrix& sim,
                                                      IntervalGraphs& graphs, const RefineConfig& cfg);

/// Similarity, denoising and augmentation over every interval.
std::pair<IntervalGraphs, RefinementReport> refine_all(const IntervalGraphs& graphs, const RefineConfig& cfg);

}  // namespace seqrec
