#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "seqrec/error.hpp"
#include "seqrec/evaluator.hpp"
#include "seqrec/synthetic.hpp"

using namespace seqrec;

namespace {

// Sorts the candidates and reads off the metrics from the top-N list.
std::pair<double, double> brute_force(const std::vector<double>& scores, const std::vector<ItemId>& candidates,
                                      ItemId truth, std::size_t n) {
  std::vector<ItemId> order = candidates;
  std::sort(order.begin(), order.end(), [&](ItemId a, ItemId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  double dcg = 0.0;
  double hit = 0.0;
  for (std::size_t k = 0; k < std::min(n, order.size()); ++k) {
    if (order[k] == truth) {
      hit = 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(k) + 2.0);
    }
  }
  return {hit, dcg};  // IDCG = 1 for a single relevant item
}

}  // namespace

TEST_CASE("rank anchors") {
  const std::vector<double> scores = {0.9, 0.5, 0.7, 0.1};
  const std::vector<ItemId> cands = {0, 1, 2, 3};
  const std::vector<std::size_t> topn = {1, 10};
  const UserResult first = rank_and_score(scores, cands, 0, topn);
  CHECK(first.rank == 1);
  CHECK(first.hit[0] == 1.0);
  CHECK(first.ndcg[1] == 1.0);
  const UserResult second = rank_and_score(scores, cands, 2, topn);
  CHECK(second.rank == 2);
  CHECK(second.hit[0] == 0.0);
  CHECK(second.ndcg[0] == 0.0);
  CHECK(std::abs(second.ndcg[1] - 1.0 / std::log2(3.0)) < 1e-12);
}

TEST_CASE("ties break towards the smaller item id") {
  const std::vector<double> scores = {1.0, 1.0, 1.0};
  CHECK(rank_of(scores, std::vector<ItemId>{0, 1, 2}, 0) == 1);
  CHECK(rank_of(scores, std::vector<ItemId>{0, 1, 2}, 2) == 3);
  CHECK(rank_of(scores, std::vector<ItemId>{1, 2}, 2) == 2);
}

TEST_CASE("empty or truth-less candidate sets are errors") {
  const std::vector<double> scores = {1.0, 2.0};
  CHECK_THROWS_AS(rank_of(scores, std::vector<ItemId>{}, 0), DataError);
  CHECK_THROWS_AS(rank_of(scores, std::vector<ItemId>{1}, 0), DataError);
  CHECK_THROWS_AS(aggregate(std::vector<UserResult>{}, kDefaultTopN), DataError);
}

TEST_CASE("aggregate averages over users") {
  std::vector<UserResult> results;
  const std::vector<double> scores = {3, 2, 1};
  for (int u = 0; u < 10; ++u) {
    results.push_back(rank_and_score(scores, std::vector<ItemId>{0, 1, 2}, u < 3 ? 0 : 2, std::vector<std::size_t>{1}));
  }
  const MetricsReport m = aggregate(results, std::vector<std::size_t>{1});
  CHECK(m.hr[0] == doctest::Approx(0.3));
  CHECK(m.users == 10);
}

TEST_CASE("metrics agree with a brute-force scorer on random instances") {
  std::mt19937_64 rng(77);
  const std::vector<std::size_t> topn = {5, 10, 20};
  for (int instance = 0; instance < 1000; ++instance) {
    const std::size_t items = 2 + rng() % 49;
    std::vector<double> scores(items);
    // Coarse scores so ties are common.
    for (double& s : scores) s = static_cast<double>(rng() % 7);
    std::vector<ItemId> cands;
    for (ItemId j = 0; j < items; ++j)
      if (rng() % 3 != 0) cands.push_back(j);
    const ItemId truth = static_cast<ItemId>(rng() % items);
    if (std::find(cands.begin(), cands.end(), truth) == cands.end()) {
      cands.push_back(truth);
      std::sort(cands.begin(), cands.end());
    }
    const UserResult r = rank_and_score(scores, cands, truth, topn);
    for (std::size_t k = 0; k < topn.size(); ++k) {
      const auto [hit, ndcg] = brute_force(scores, cands, truth, topn[k]);
      CHECK(r.hit[k] == hit);
      CHECK(r.ndcg[k] == ndcg);
    }
  }
}

TEST_CASE("metric invariants") {
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> topn = {1, 5, 10, 20};
  std::vector<UserResult> results;
  for (int u = 0; u < 200; ++u) {
    std::vector<double> scores(30);
    for (double& s : scores) s = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<ItemId> cands(30);
    std::iota(cands.begin(), cands.end(), 0);
    results.push_back(rank_and_score(scores, cands, static_cast<ItemId>(rng() % 30), topn));
  }
  const MetricsReport m = aggregate(results, topn);
  for (std::size_t k = 0; k < topn.size(); ++k) {
    CHECK(m.hr[k] >= 0.0);
    CHECK(m.hr[k] <= 1.0);
    CHECK(m.ndcg[k] <= m.hr[k] + 1e-15);
    CHECK(m.ndcg[k] >= m.hr[k] / std::log2(static_cast<double>(topn[k]) + 1.0) - 1e-15);
    if (k > 0) {
      CHECK(m.hr[k] >= m.hr[k - 1]);
      CHECK(m.ndcg[k] >= m.ndcg[k - 1]);
    }
  }
  const auto json = m.to_json();
  CHECK(json.contains("HR@5"));
  CHECK(json.contains("NDCG@20"));
  CHECK(m.to_table().find("NDCG") != std::string::npos);
}

TEST_CASE("ranking tasks exclude training items but keep the truth") {
  SyntheticSpec spec;
  spec.seed = 3;
  const SyntheticData data = generate_synthetic(spec);
  const SplitData split = split_log(data.log, 3);
  const std::vector<RankingTask> tasks = make_tasks(split.inputs, split.targets, EvalOptions{});
  CHECK(tasks.size() == split.target_users().size());
  for (const RankingTask& t : tasks) {
    CHECK(t.truth == split.targets[t.user].front().item);
    CHECK(std::binary_search(t.candidates.begin(), t.candidates.end(), t.truth));
    std::set<ItemId> trained;
    for (const auto& interval : split.inputs.sequences)
      for (const Event& e : interval[t.user]) trained.insert(e.item);
    for (ItemId j : t.candidates)
      if (j != t.truth) CHECK(trained.count(j) == 0);
  }
  EvalOptions sampled;
  sampled.sampled_negatives = 5;
  for (const RankingTask& t : make_tasks(split.inputs, split.targets, sampled)) CHECK(t.candidates.size() <= 6);
}

TEST_CASE("synthetic generator construction properties") {
  SyntheticSpec spec;
  spec.communities = 2;
  spec.seed = 4;
  SyntheticData clean = generate_synthetic(spec);
  CHECK(std::count(clean.noise.begin(), clean.noise.end(), 1) == 0);
  // Without drift every user stays inside one community.
  for (UserId u = 0; u < spec.users; ++u) {
    std::set<std::size_t> labels;
    for (const Interaction& x : clean.log.interactions)
      if (x.user == u) labels.insert(clean.item_community[x.item]);
    CHECK(labels.size() == 1);
  }
  CHECK(clean.log.t_a == 0);
  CHECK(clean.log.t_b == static_cast<Timestamp>(spec.intervals) * spec.interval_length);

  spec.noise_rate = 0.3;
  const SyntheticData noisy = generate_synthetic(spec);
  std::size_t flagged = 0;
  for (std::size_t k = 0; k < noisy.log.interactions.size(); ++k) {
    const Interaction& x = noisy.log.interactions[k];
    const std::size_t t = interval_of(x.timestamp, noisy.log.t_a, noisy.log.t_b, spec.intervals);
    const bool outside = noisy.item_community[x.item] != noisy.user_community[x.user][t];
    CHECK(outside == (noisy.noise[k] != 0));
    flagged += noisy.noise[k];
  }
  CHECK(flagged > 0);

  const SyntheticData again = generate_synthetic(spec);
  CHECK(again.log.interactions == noisy.log.interactions);
}
