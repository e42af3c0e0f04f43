#include "seqrec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "seqrec/error.hpp"

namespace seqrec {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be non-negative");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (pairs_per_user == 0) throw ConfigError("pairs_per_user must be positive");
  if (eval_every > 0 && patience == 0) throw ConfigError("patience must be positive");
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
}

std::vector<Sample> sample_pairs(const std::vector<std::vector<Event>>& targets, std::size_t num_items,
                                 std::size_t pairs_per_user, std::mt19937_64& rng) {
  std::vector<Sample> samples;
  std::uniform_int_distribution<ItemId> any_item(0, static_cast<ItemId>(num_items - 1));
  std::vector<ItemId> positives;
  for (UserId u = 0; u < targets.size(); ++u) {
    if (targets[u].empty()) continue;
    positives.clear();
    for (const Event& e : targets[u]) positives.push_back(e.item);
    std::sort(positives.begin(), positives.end());
    positives.erase(std::unique(positives.begin(), positives.end()), positives.end());
    if (positives.size() >= num_items) {
      throw DataError("user " + std::to_string(u) + " interacted with every item; no negative can be sampled");
    }
    std::uniform_int_distribution<std::size_t> pick(0, positives.size() - 1);
    for (std::size_t k = 0; k < pairs_per_user; ++k) {
      Sample s;
      s.user = u;
      s.positive = positives[pick(rng)];
      do {
        s.negative = any_item(rng);
      } while (std::binary_search(positives.begin(), positives.end(), s.negative));
      samples.push_back(s);
    }
  }
  return samples;
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto g = params_[k].grad();
    if (std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; })) continue;
    auto w = params_[k].mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon_);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

nlohmann::json EpochLog::to_json() const {
  nlohmann::json j = {{"epoch", epoch},         {"loss", loss}, {"loss_gru", loss_gru}, {"loss_mean", loss_mean},
                      {"mean_gate", mean_gate}, {"lr", lr},     {"wall_time", wall_time}};
  if (metrics) j["metrics"] = metrics->to_json();
  return j;
}

nlohmann::json TrainResult::log_json() const {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochLog& e : log) epochs.push_back(e.to_json());
  nlohmann::json j = {{"epochs", epochs}, {"best_epoch", best_epoch}, {"stopped_early", stopped_early}};
  if (best) j["best_metrics"] = best->to_json();
  return j;
}

namespace {

std::vector<std::vector<double>> snapshot(const Model& model) {
  std::vector<std::vector<double>> values;
  for (const auto& p : model.parameters()) values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return values;
}

void restore(Model& model, const std::vector<std::vector<double>>& values) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    Tensor t = model.parameters()[k].tensor;
    std::copy(values[k].begin(), values[k].end(), t.mutable_data().begin());
  }
}

}  // namespace

TrainResult train(Model& model, const ModelInputs& inputs, const std::vector<std::vector<Event>>& targets,
                  std::span<const RankingTask> tasks, const TrainConfig& cfg, const LossConfig& loss_cfg,
                  std::span<const std::size_t> topn) {
  cfg.validate();
  loss_cfg.validate();
  const bool evaluating = cfg.eval_every > 0 && !tasks.empty();
  if (evaluating && std::find(topn.begin(), topn.end(), cfg.monitor_n) == topn.end()) {
    throw ConfigError("early stopping monitors HR@" + std::to_string(cfg.monitor_n) + ", which is not evaluated");
  }
  std::mt19937_64 rng(cfg.seed);
  Adam optimizer(model.parameter_tensors());
  TrainResult result;
  std::vector<std::vector<double>> best_params;
  double best_hr = -1.0;
  std::size_t stale = 0;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.lr = learning_rate(cfg, epoch);
    std::vector<Sample> samples = sample_pairs(targets, model.num_items(), cfg.pairs_per_user, rng);
    if (samples.empty()) throw DataError("no user has a target interaction to train on");
    std::shuffle(samples.begin(), samples.end(), rng);

    double gate_sum = 0.0;
    for (std::size_t begin = 0, batch = 0; begin < samples.size(); begin += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(samples.size(), begin + cfg.batch_size);
      const std::span<const Sample> chunk(samples.data() + begin, end - begin);
      optimizer.zero_grad();
      const std::uint64_t dropout_seed = cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^ batch;
      const Model::Output out = model.forward(inputs, Mode::kTrain, dropout_seed);
      const Model::Loss loss = model.loss(out, chunk, loss_cfg);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("loss became non-finite in epoch " + std::to_string(epoch + 1));
      }
      loss.total.backward();
      optimizer.step(entry.lr);
      entry.loss += value;
      entry.loss_gru += loss.gru;
      entry.loss_mean += loss.mean;
      gate_sum += loss.mean_gate * static_cast<double>(chunk.size());
    }
    entry.mean_gate = gate_sum / static_cast<double>(samples.size());

    if (evaluating && (epoch + 1) % cfg.eval_every == 0) {
      const Model::Output out = model.forward(inputs, Mode::kEval);
      entry.metrics = evaluate(out, tasks, topn);
      const double hr = entry.metrics->hr_at(cfg.monitor_n);
      if (hr > best_hr) {
        best_hr = hr;
        best_params = snapshot(model);
        result.best = entry.metrics;
        result.best_epoch = epoch + 1;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        result.stopped_early = true;
      }
    }
    entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(std::move(entry));
    if (result.stopped_early) break;
  }
  if (!best_params.empty()) restore(model, best_params);
  if (!evaluating) result.best_epoch = result.log.size();
  return result;
}

}  // namespace seqrec
