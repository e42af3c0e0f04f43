// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "seqrec/corpus.hpp"
#include "seqrec/experiment.hpp"
#include "seqrec/fusion.hpp"
#include "seqrec/graph_io.hpp"
#include "seqrec/louvain.hpp"
#include "seqrec/refine.hpp"
#include "seqrec/synthetic.hpp"
#include "seqrec/trainer.hpp"

using namespace seqrec;

namespace {

using Clock = std::chrono::steady_clock;
using Dense = std::vector<std::vector<double>>;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
  bool soft = false;  // reported but does not set the exit status
};

Outcome check(bool ok, std::string detail) { return {ok, std::move(detail)}; }

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

// 1. Full-model gradient against central differences.
Outcome gradient_integrity() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.users = 6;
  spec.items = 8;
  spec.communities = 2;
  spec.intervals = 4;
  spec.seed = 4;
  const SplitData split = split_log(generate_synthetic(spec).log, 3);
  ModelConfig cfg;
  cfg.short_term.dim = 8;
  cfg.short_term.layers = 2;
  cfg.attention_layers = 2;
  cfg.max_seq_len = 5;
  const Model model(split.inputs.num_users, split.inputs.num_items, 3, cfg);
  const ModelInputs inputs = prepare_inputs(split.inputs, cfg.max_seq_len);
  std::mt19937_64 rng(5);
  const std::vector<Sample> batch = sample_pairs(split.targets, split.inputs.num_items, 2, rng);
  const LossConfig loss;
  const auto f = [&] { return model.loss(model.forward(inputs, Mode::kTrain, 9), batch, loss).total; };
  const GradCheckResult r = grad_check(f, model.parameter_tensors(), {1e-5, 300, 7, 1e-6});
  const double secs = seconds_since(start);
  return check(r.max_relative_error < 1e-4 && r.coordinates_checked >= 200 && secs < 30.0,
               fmt("max rel err %.3g over %.0f coords, %.2f s", r.max_relative_error,
                   static_cast<double>(r.coordinates_checked), secs));
}

// Model settings shared by the training-based criteria.
ExperimentConfig training_config() {
  ExperimentConfig cfg;
  cfg.intervals = 3;
  cfg.model.short_term.dim = 16;
  cfg.model.short_term.layers = 2;
  cfg.model.max_seq_len = 10;
  cfg.train.lr = 1e-2;
  cfg.train.lr_decay = 0.99;
  cfg.train.pairs_per_user = 8;
  cfg.train.batch_size = 64;
  cfg.eval.topn = {5, 10, 20};
  return cfg;
}

// 2. Memorisation of a clean planted log.
Outcome memorization() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.users = 20;
  spec.items = 30;
  spec.communities = 3;
  spec.noise_rate = 0.0;
  spec.seed = 1;
  ExperimentConfig cfg = training_config();
  cfg.train.epochs = 300;
  cfg.validate();
  const SyntheticData data = generate_synthetic(spec);
  const Preprocessed p = preprocess(data.log, cfg);
  const TrainingRun run = train_and_evaluate(p.split, cfg);
  const double secs = seconds_since(start);
  const double hr = run.metrics.hr_at(5), ndcg = run.metrics.ndcg_at(5);
  return check(hr >= 0.9 && ndcg >= 0.8 && secs < 120.0, fmt("HR@5 %.3f NDCG@5 %.3f, %.1f s", hr, ndcg, secs));
}

double dense_modularity(const Dense& w, const std::vector<std::size_t>& c) {
  const std::size_t n = w.size();
  std::vector<double> k(n, 0.0);
  double two_m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      k[i] += w[i][j];
      two_m += w[i][j];
    }
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (c[i] == c[j]) q += w[i][j] - k[i] * k[j] / two_m;
  return q / two_m;
}

// 3. Louvain against exhaustive search over all set partitions of 8 nodes.
Outcome louvain_oracle() {
  WeightedGraph graph(8);
  Dense w(8, std::vector<double>(8, 0.0));
  auto edge = [&](std::size_t a, std::size_t b) {
    graph.add_edge(a, b, 1.0);
    w[a][b] = w[b][a] = 1.0;
  };
  for (std::size_t base : {0u, 4u})
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = a + 1; b < 4; ++b) edge(base + a, base + b);
  edge(3, 4);

  std::vector<std::size_t> best;
  double best_q = -1.0;
  std::size_t count = 0;
  std::vector<std::size_t> a(8, 0), maxes(8, 0);
  while (true) {
    ++count;
    const double q = dense_modularity(w, a);
    if (q > best_q + 1e-12) {
      best_q = q;
      best = a;
    }
    std::size_t i = 7;
    while (i > 0 && a[i] == maxes[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    maxes[i] = std::max(maxes[i - 1], a[i]);
    for (std::size_t j = i + 1; j < 8; ++j) {
      a[j] = 0;
      maxes[j] = maxes[i];
    }
  }
  const Partition p = louvain(graph);
  const double err = std::abs(p.modularity - best_q);
  return check(count == 4140 && p.community_of == best && err < 1e-9,
               fmt("%.0f partitions, Q %.12f vs %.12f", static_cast<double>(count), p.modularity, best_q));
}

// 4. Sparse similarity against the dense two-hop formula.
Outcome similarity_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 29;
    const double density = 0.05 + 0.4 * unit(rng);
    ItemItemGraph z(n);
    Dense zd(n, std::vector<double>(n, 0.0));
    for (ItemId x = 0; x < n; ++x)
      for (ItemId y = x + 1; y < n; ++y)
        if (unit(rng) < density) {
          const double v = 0.05 + 0.95 * unit(rng);
          z.set(x, y, v);
          zd[x][y] = zd[y][x] = v;
        }
    const SimilarityMatrix sim = item_similarity(z);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          num += (zd[i][k] + (i == k)) * (zd[j][k] + (j == k));
          den += zd[i][k] * zd[j][k];
        }
        const double expected = num / (den + 1e-8);
        const double err = std::abs(sim.value(static_cast<ItemId>(i), static_cast<ItemId>(j)) - expected) /
                           std::max(1.0, std::abs(expected));
        worst = std::max(worst, err);
      }
  }
  return check(worst <= 1e-12, fmt("worst relative deviation %.3g", worst));
}

// 5. Planted noise: each selected user-interval has at least four distinct
// in-community items and exactly one out-of-community item. The similarity
// graph comes from the clean events, so the planted item is isolated.
Outcome denoising_recovery() {
  SyntheticSpec spec;
  spec.users = 200;
  spec.items = 40;
  spec.communities = 4;
  spec.intervals = 3;
  spec.events_per_interval = 7;
  spec.noise_rate = 0.1;
  spec.seed = 5;
  const SyntheticData data = generate_synthetic(spec);
  std::vector<Interaction> clean_events;
  for (std::size_t k = 0; k < data.log.interactions.size(); ++k)
    if (!data.noise[k]) clean_events.push_back(data.log.interactions[k]);
  InteractionLog clean = make_log(clean_events);
  clean.t_a = data.log.t_a;
  clean.t_b = data.log.t_b;
  clean.num_items = data.log.num_items;
  clean.num_users = data.log.num_users;
  IntervalGraphs full = build_interval_graphs(data.log, spec.intervals);
  const IntervalGraphs clean_graphs = build_interval_graphs(clean, spec.intervals);

  RefineConfig cfg;
  cfg.beta = 0.5;
  std::size_t planted = 0, found = 0, false_flags = 0;
  for (std::size_t t = 0; t < spec.intervals; ++t) {
    const SimilarityMatrix sim = item_similarity(clean_graphs.item_item[t], cfg.similarity);
    for (UserId u = 0; u < spec.users; ++u) {
      std::set<ItemId> inside, outside;
      for (const Event& e : full.sequences[t][u]) {
        if (data.item_community[e.item] == data.user_community[u][t]) {
          inside.insert(e.item);
        } else {
          outside.insert(e.item);
        }
      }
      if (inside.size() < 4 || outside.size() != 1) continue;
      ++planted;
      const std::vector<ItemId> flagged = detect_noise(u, t, sim, full, cfg);
      for (ItemId i : flagged) {
        if (outside.count(i)) {
          ++found;
        } else {
          ++false_flags;
        }
      }
    }
  }
  return check(planted > 0 && found == planted && false_flags == 0,
               fmt("%.0f planted, %.0f recovered, %.0f in-community flagged", static_cast<double>(planted),
                   static_cast<double>(found), static_cast<double>(false_flags)));
}

// 6. beta = 1 and an unreachable threshold leave the graphs untouched.
Outcome refinement_identity() {
  SyntheticSpec spec;
  spec.users = 60;
  spec.items = 40;
  spec.noise_rate = 0.3;
  spec.drift = 0.2;
  spec.inactive_rate = 0.2;
  spec.intervals = 5;
  spec.seed = 6;
  const SplitData split = split_log(generate_synthetic(spec).log, 4);
  RefineConfig cfg;
  cfg.beta = 1.0;
  double max_sim = 0.0;
  for (const auto& z : split.inputs.item_item) max_sim = std::max(max_sim, item_similarity(z, cfg.similarity).max_value());
  cfg.min_sim = max_sim * 2.0 + 1.0;
  const auto [refined, report] = refine_all(split.inputs, cfg);
  bool same = true;
  for (std::size_t t = 0; t < refined.num_intervals; ++t) {
    same = same && format_user_item(refined.user_item[t]) == format_user_item(split.inputs.user_item[t]);
    same = same && format_item_item(refined.item_item[t]) == format_item_item(split.inputs.item_item[t]);
  }
  return check(same && report.augmented == 0,
               fmt("max similarity %.3g, %.0f noisy found, %.0f augmented", max_sim,
                   static_cast<double>(report.noisy), static_cast<double>(report.augmented)));
}

// 7. Fused prediction stays between the branches; hinge losses are non-negative.
Outcome fusion_bounds() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 3.0);
  const std::size_t n = 100000;
  std::vector<double> w(n), g(n), m(n), gn(n), mn(n);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = unit(rng);
    g[k] = normal(rng);
    m[k] = normal(rng);
    gn[k] = normal(rng);
    mn[k] = normal(rng);
  }
  // Rank-1 embeddings make each branch score equal to the sampled value.
  const Tensor ones = Tensor::from(n, 1, std::vector<double>(n, 1.0));
  const Tensor zeros = Tensor::zeros(n, 1);
  const Tensor wt = Tensor::from(n, 1, w);
  const Predictions pos = predict(Tensor::from(n, 1, m), ones, Tensor::from(n, 1, g), zeros, ones, wt);
  const Predictions neg = predict(Tensor::from(n, 1, mn), ones, Tensor::from(n, 1, gn), zeros, ones, wt);
  std::size_t outside = 0, negative = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double f = pos.final.data()[k];
    if (f < std::min(g[k], m[k]) - 1e-12 || f > std::max(g[k], m[k]) + 1e-12) ++outside;
    if (hinge(1.0 - w[k], g[k], gn[k]) < 0.0 || hinge(w[k], m[k], mn[k]) < 0.0) ++negative;
  }
  const RecLoss loss = rec_loss(pos, neg, wt);
  if (loss.gru.item() < 0.0 || loss.mean.item() < 0.0) ++negative;
  return check(outside == 0 && negative == 0,
               fmt("%.0f out of bounds, %.0f negative losses", static_cast<double>(outside),
                   static_cast<double>(negative)));
}

// 8. Metrics against sorting the candidates outright.
Outcome metric_oracle() {
  std::mt19937_64 rng(8);
  const std::vector<std::size_t> topn = {5, 10, 20};
  std::size_t mismatches = 0;
  for (int instance = 0; instance < 1000; ++instance) {
    const std::size_t items = 2 + rng() % 49;
    std::vector<double> scores(items);
    for (double& s : scores) s = static_cast<double>(rng() % 9) * 0.25;
    std::vector<ItemId> cands;
    for (ItemId j = 0; j < items; ++j)
      if (rng() % 4 != 0) cands.push_back(j);
    const ItemId truth = static_cast<ItemId>(rng() % items);
    if (!std::binary_search(cands.begin(), cands.end(), truth)) {
      cands.push_back(truth);
      std::sort(cands.begin(), cands.end());
    }
    std::vector<ItemId> order = cands;
    std::stable_sort(order.begin(), order.end(), [&](ItemId a, ItemId b) { return scores[a] > scores[b]; });
    const UserResult r = rank_and_score(scores, cands, truth, topn);
    for (std::size_t k = 0; k < topn.size(); ++k) {
      double hit = 0.0, ndcg = 0.0;
      for (std::size_t pos = 0; pos < std::min(topn[k], order.size()); ++pos)
        if (order[pos] == truth) {
          hit = 1.0;
          ndcg = 1.0 / std::log2(static_cast<double>(pos) + 2.0);
        }
      if (r.hit[k] != hit || r.ndcg[k] != ndcg) ++mismatches;
    }
  }
  const std::vector<double> anchor = {0.9, 0.5, 0.7, 0.1};
  const std::vector<ItemId> all = {0, 1, 2, 3};
  const std::vector<std::size_t> ten = {10};
  const bool first = rank_and_score(anchor, all, 0, ten).ndcg[0] == 1.0;
  const bool second = std::abs(rank_and_score(anchor, all, 2, ten).ndcg[0] - 1.0 / std::log2(3.0)) < 1e-12;
  return check(mismatches == 0 && first && second,
               fmt("%.0f mismatches, anchors ", static_cast<double>(mismatches)) + (first && second ? "ok" : "broken"));
}

// 9. No held-out interaction reaches the inputs, and the refined inputs do
// not change when the held-out interval is rewritten.
Outcome leakage() {
  std::size_t configs = 0, leaks = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed)
    for (double noise : {0.0, 0.3})
      for (double drift : {0.0, 0.2}) {
        ++configs;
        SyntheticSpec spec;
        spec.users = 30;
        spec.items = 24;
        spec.noise_rate = noise;
        spec.drift = drift;
        spec.inactive_rate = 0.2;
        spec.intervals = 4;
        spec.seed = seed;
        const SyntheticData data = generate_synthetic(spec);
        ExperimentConfig cfg;
        cfg.intervals = 3;
        cfg.validate();
        const Preprocessed p = preprocess(data.log, cfg);
        const SplitData raw = split_log(data.log, 3);

        std::set<std::tuple<UserId, ItemId, Timestamp>> held;
        for (UserId u = 0; u < raw.targets.size(); ++u)
          for (const Event& e : raw.targets[u]) held.insert({u, e.item, e.timestamp});
        for (const SplitData* s : {&raw, &p.split})
          for (const auto& interval : s->inputs.sequences)
            for (UserId u = 0; u < interval.size(); ++u)
              for (const Event& e : interval[u])
                if (held.count({u, e.item, e.timestamp}) || e.timestamp > raw.inputs.t_b) ++leaks;
        // Every raw A_t entry is backed by an input event.
        for (std::size_t t = 0; t < raw.inputs.num_intervals; ++t)
          for (UserId u = 0; u < raw.inputs.num_users; ++u)
            for (const auto& e : raw.inputs.user_item[t].row(u)) {
              const auto& seq = raw.inputs.sequences[t][u];
              if (std::none_of(seq.begin(), seq.end(), [&](const Event& x) { return x.item == e.item; })) ++leaks;
            }

        // Rewrite the items of the held-out interval and preprocess again.
        InteractionLog altered = data.log;
        const std::size_t last = spec.intervals - 1;
        for (Interaction& x : altered.interactions)
          if (interval_of(x.timestamp, altered.t_a, altered.t_b, spec.intervals) == last)
            x.item = static_cast<ItemId>((x.item + 7) % altered.num_items);
        altered = [&] {
          InteractionLog l = make_log(altered.interactions);
          l.t_a = data.log.t_a;
          l.t_b = data.log.t_b;
          l.num_items = data.log.num_items;
          l.num_users = data.log.num_users;
          return l;
        }();
        const Preprocessed q = preprocess(altered, cfg);
        for (std::size_t t = 0; t < 3; ++t) {
          if (format_user_item(q.split.inputs.user_item[t]) != format_user_item(p.split.inputs.user_item[t])) ++leaks;
          if (format_item_item(q.split.inputs.item_item[t]) != format_item_item(p.split.inputs.item_item[t])) ++leaks;
        }
        if (held.empty()) ++leaks;
      }
  return check(leaks == 0, fmt("%.0f configs, %.0f leaks", static_cast<double>(configs), static_cast<double>(leaks)));
}

// 10. Two identical runs.
Outcome determinism() {
  SyntheticSpec spec;
  spec.users = 30;
  spec.items = 30;
  spec.noise_rate = 0.2;
  spec.seed = 10;
  ExperimentConfig cfg = training_config();
  cfg.train.epochs = 30;
  cfg.train.eval_every = 5;
  cfg.validate();
  const SyntheticData data = generate_synthetic(spec);
  const TrainingRun a = train_and_evaluate(preprocess(data.log, cfg).split, cfg);
  const TrainingRun b = train_and_evaluate(preprocess(data.log, cfg).split, cfg);
  double worst = a.result.log.size() == b.result.log.size() ? 0.0 : 1.0;
  for (std::size_t e = 0; e < std::min(a.result.log.size(), b.result.log.size()); ++e)
    worst = std::max(worst, std::abs(a.result.log[e].loss - b.result.log[e].loss));
  const bool metrics = a.metrics.to_json() == b.metrics.to_json();
  return check(worst <= 1e-12 && metrics, fmt("max loss difference %.3g, metrics ", worst) + (metrics ? "equal" : "differ"));
}

// 11. Refinement should not hurt on a noisy planted log.
Outcome ablation_direction() {
  double refined = 0.0, raw = 0.0, noisy = 0.0, augmented = 0.0;
  const int seeds = 5;
  for (int seed = 1; seed <= seeds; ++seed) {
    SyntheticSpec spec;
    spec.users = 100;
    spec.items = 200;
    spec.communities = 10;
    spec.noise_rate = 0.3;
    spec.intervals = 4;
    spec.events_per_interval = 5;
    spec.seed = static_cast<std::uint64_t>(seed);
    const SyntheticData data = generate_synthetic(spec);
    ExperimentConfig on = training_config();
    on.train.epochs = 100;
    on.refine.beta = 0.5;
    on.validate();
    ExperimentConfig off = on;
    off.disable_refine = true;
    off.validate();
    const Preprocessed p = preprocess(data.log, on);
    noisy += static_cast<double>(p.report.noisy);
    augmented += static_cast<double>(p.report.augmented);
    refined += train_and_evaluate(p.split, on).metrics.hr_at(10);
    raw += train_and_evaluate(preprocess(data.log, off).split, off).metrics.hr_at(10);
  }
  refined /= seeds;
  raw /= seeds;
  return check(refined >= raw, fmt("mean HR@10 refined %.3f vs raw %.3f", refined, raw) +
                                   fmt(", %.0f noisy and %.0f augmented edges per seed", noisy / seeds, augmented / seeds));
}

// 12. Preprocessing time against catalogue size.
Outcome complexity() {
  std::vector<double> sizes = {100, 200, 400}, times;
  std::string detail;
  bool reported = true;
  for (double j : sizes) {
    SyntheticSpec spec;
    spec.users = static_cast<std::size_t>(j);
    spec.items = static_cast<std::size_t>(j);
    spec.communities = static_cast<std::size_t>(j) / 10;
    spec.noise_rate = 0.2;
    spec.inactive_rate = 0.1;
    spec.intervals = 5;
    spec.events_per_interval = 8;
    spec.seed = 12;
    const SyntheticData data = generate_synthetic(spec);
    ExperimentConfig cfg;
    cfg.refine.similarity.top_k = 20;
    cfg.validate();
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto start = Clock::now();
      const Preprocessed p = preprocess(data.log, cfg);
      best = std::min(best, seconds_since(start));
      reported = reported && p.report.to_json().contains("execution_time_sec") && p.report.initial > 0;
    }
    times.push_back(best);
    detail += fmt("J=%.0f %.4f s; ", j, best);
  }
  const double slope = std::log(times[2] / times[0]) / std::log(sizes[2] / sizes[0]);
  return check(slope <= 2.0 && reported, detail + fmt("log-log slope %.2f", slope));
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"1 gradient integrity", gradient_integrity},
      {"2 memorization", memorization},
      {"3 louvain oracle", louvain_oracle},
      {"4 similarity oracle", similarity_oracle},
      {"5 denoising recovery", denoising_recovery},
      {"6 refinement identity", refinement_identity},
      {"7 fusion bounds", fusion_bounds},
      {"8 metric oracle", metric_oracle},
      {"9 leakage", leakage},
      {"10 determinism", determinism},
      {"11 ablation direction", ablation_direction, true},
      {"12 complexity", complexity},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s%s: %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), c.soft ? " (soft)" : "",
                o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass || c.soft ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
