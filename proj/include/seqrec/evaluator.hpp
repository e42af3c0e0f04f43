#pragma once

// Top-N ranking metrics over held-out targets.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqrec/corpus.hpp"
#include "seqrec/model.hpp"

namespace seqrec {

inline const std::vector<std::size_t> kDefaultTopN = {5, 10, 20};

struct RankingTask {
  UserId user = 0;
  ItemId truth = 0;
  std::vector<ItemId> candidates;  // sorted, contains truth
};

struct EvalOptions {
  std::vector<std::size_t> topn = kDefaultTopN;
  // 0: rank against the full catalogue minus training items. Otherwise the
  // truth competes against this many sampled negatives.
  std::size_t sampled_negatives = 0;
  std::uint64_t seed = 17;

  void validate() const;
};

/// One task per user with a target event: the first target item against
/// every item the user did not touch in the input intervals.
std::vector<RankingTask> make_tasks(const IntervalGraphs& inputs, const std::vector<std::vector<Event>>& targets,
                                    const EvalOptions& options);

/// 1-based rank of `truth` among `candidates` by descending score; ties go to
/// the smaller item id. `scores` is indexed by item id.
std::size_t rank_of(std::span<const double> scores, std::span<const ItemId> candidates, ItemId truth);

struct UserResult {
  std::size_t rank = 0;
  std::vector<double> hit;   // per N, 0 or 1
  std::vector<double> ndcg;  // per N
};

UserResult rank_and_score(std::span<const double> scores, std::span<const ItemId> candidates, ItemId truth,
                          std::span<const std::size_t> topn);

struct MetricsReport {
  std::vector<std::size_t> topn;
  std::vector<double> hr;
  std::vector<double> ndcg;
  std::size_t users = 0;

  double hr_at(std::size_t n) const;
  double ndcg_at(std::size_t n) const;
  nlohmann::json to_json() const;
  /// Aligned two-row table (HR, NDCG) with one column per N.
  std::string to_table() const;
};

/// Arithmetic means over users. Throws DataError when `results` is empty.
MetricsReport aggregate(std::span<const UserResult> results, std::span<const std::size_t> topn);

/// Scores every task with the model's fused predictions.
MetricsReport evaluate(const Model::Output& output, std::span<const RankingTask> tasks,
                       std::span<const std::size_t> topn);

}  // namespace seqrec
