#include "seqrec/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "seqrec/error.hpp"
#include "seqrec/parallel.hpp"

namespace seqrec {

void EvalOptions::validate() const {
  if (topn.empty()) throw ConfigError("at least one N is required");
  for (std::size_t n : topn)
    if (n == 0) throw ConfigError("N must be positive");
}

std::vector<RankingTask> make_tasks(const IntervalGraphs& inputs, const std::vector<std::vector<Event>>& targets,
                                    const EvalOptions& options) {
  options.validate();
  std::vector<RankingTask> tasks;
  std::mt19937_64 rng(options.seed);
  std::vector<char> seen(inputs.num_items);
  for (UserId u = 0; u < targets.size(); ++u) {
    if (targets[u].empty()) continue;
    RankingTask task;
    task.user = u;
    task.truth = targets[u].front().item;
    std::fill(seen.begin(), seen.end(), 0);
    for (std::size_t t = 0; t < inputs.num_intervals; ++t)
      for (const Event& e : inputs.sequences[t][u]) seen[e.item] = 1;
    std::vector<ItemId> pool;
    for (ItemId j = 0; j < inputs.num_items; ++j)
      if (!seen[j] && j != task.truth) pool.push_back(j);
    if (options.sampled_negatives > 0 && pool.size() > options.sampled_negatives) {
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(options.sampled_negatives);
    }
    pool.push_back(task.truth);
    std::sort(pool.begin(), pool.end());
    task.candidates = std::move(pool);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::size_t rank_of(std::span<const double> scores, std::span<const ItemId> candidates, ItemId truth) {
  if (candidates.empty()) throw DataError("empty candidate set");
  const double s = scores[truth];
  std::size_t rank = 1;
  bool present = false;
  for (ItemId j : candidates) {
    if (j == truth) {
      present = true;
      continue;
    }
    if (scores[j] > s || (scores[j] == s && j < truth)) ++rank;
  }
  if (!present) throw DataError("ground-truth item is not a candidate");
  return rank;
}

UserResult rank_and_score(std::span<const double> scores, std::span<const ItemId> candidates, ItemId truth,
                          std::span<const std::size_t> topn) {
  UserResult r;
  r.rank = rank_of(scores, candidates, truth);
  for (std::size_t n : topn) {
    const bool hit = r.rank <= n;
    r.hit.push_back(hit ? 1.0 : 0.0);
    r.ndcg.push_back(hit ? 1.0 / std::log2(static_cast<double>(r.rank) + 1.0) : 0.0);
  }
  return r;
}

double MetricsReport::hr_at(std::size_t n) const {
  for (std::size_t k = 0; k < topn.size(); ++k)
    if (topn[k] == n) return hr[k];
  throw ConfigError("HR@" + std::to_string(n) + " was not computed");
}

double MetricsReport::ndcg_at(std::size_t n) const {
  for (std::size_t k = 0; k < topn.size(); ++k)
    if (topn[k] == n) return ndcg[k];
  throw ConfigError("NDCG@" + std::to_string(n) + " was not computed");
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t k = 0; k < topn.size(); ++k) {
    j["HR@" + std::to_string(topn[k])] = hr[k];
    j["NDCG@" + std::to_string(topn[k])] = ndcg[k];
  }
  j["users"] = users;
  return j;
}

std::string MetricsReport::to_table() const {
  std::string header = "metric";
  std::string hr_row = "HR    ";
  std::string ndcg_row = "NDCG  ";
  char buf[64];
  for (std::size_t k = 0; k < topn.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  %8s", ("@" + std::to_string(topn[k])).c_str());
    header += buf;
    std::snprintf(buf, sizeof buf, "  %8.4f", hr[k]);
    hr_row += buf;
    std::snprintf(buf, sizeof buf, "  %8.4f", ndcg[k]);
    ndcg_row += buf;
  }
  return header + "\n" + hr_row + "\n" + ndcg_row + "\n";
}

MetricsReport aggregate(std::span<const UserResult> results, std::span<const std::size_t> topn) {
  if (results.empty()) throw DataError("no users to evaluate");
  MetricsReport m;
  m.topn.assign(topn.begin(), topn.end());
  m.hr.assign(topn.size(), 0.0);
  m.ndcg.assign(topn.size(), 0.0);
  for (const UserResult& r : results) {
    for (std::size_t k = 0; k < topn.size(); ++k) {
      m.hr[k] += r.hit[k];
      m.ndcg[k] += r.ndcg[k];
    }
  }
  const double n = static_cast<double>(results.size());
  for (std::size_t k = 0; k < topn.size(); ++k) {
    m.hr[k] /= n;
    m.ndcg[k] /= n;
  }
  m.users = results.size();
  return m;
}

MetricsReport evaluate(const Model::Output& output, std::span<const RankingTask> tasks,
                       std::span<const std::size_t> topn) {
  std::vector<UserResult> results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t k) {
    const RankingTask& task = tasks[k];
    const std::vector<double> scores = Model::score_items(output, task.user);
    results[k] = rank_and_score(scores, task.candidates, task.truth, topn);
  });
  return aggregate(results, topn);
}

}  // namespace seqrec
