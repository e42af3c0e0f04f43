#pragma once

// Negative sampling, mini-batch optimisation with adaptive moments and
// per-epoch learning-rate decay, early stopping on held-out HR.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "seqrec/evaluator.hpp"
#include "seqrec/model.hpp"

namespace seqrec {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double lr_decay = 0.96;
  std::uint64_t seed = 42;
  std::size_t pairs_per_user = 4;  // N_pr
  std::size_t eval_every = 0;      // epochs between evaluations, 0 = never
  std::size_t patience = 10;       // evaluations without improvement
  std::size_t monitor_n = 10;      // HR@N used for early stopping

  void validate() const;
};

/// Learning rate in force during epoch `epoch` (0-based): lr * lr_decay^epoch.
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

/// `pairs_per_user` (user, positive, negative) triples per user with targets.
/// Positives are uniform over the user's target items, negatives uniform over
/// the remaining catalogue. Throws DataError if a user has no negative.
std::vector<Sample> sample_pairs(const std::vector<std::vector<Event>>& targets, std::size_t num_items,
                                 std::size_t pairs_per_user, std::mt19937_64& rng);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  /// Applies one update from the accumulated gradients. Tensors whose
  /// gradient is all zero are left untouched.
  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return step_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::size_t step_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double loss_gru = 0.0;
  double loss_mean = 0.0;
  double mean_gate = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;
  std::optional<MetricsReport> metrics;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::optional<MetricsReport> best;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  nlohmann::json log_json() const;
};

/// Trains `model` in place. `tasks` drive evaluation and early stopping; the
/// best evaluated parameters are restored at the end.
TrainResult train(Model& model, const ModelInputs& inputs, const std::vector<std::vector<Event>>& targets,
                  std::span<const RankingTask> tasks, const TrainConfig& cfg, const LossConfig& loss_cfg,
                  std::span<const std::size_t> topn = kDefaultTopN);

}  // namespace seqrec
