#include "seqrec/fusion.hpp"

#include <stdexcept>

#include "seqrec/error.hpp"

namespace seqrec {

void LossConfig::validate() const {
  if (!(lambda1 >= 0.0 && lambda1 <= 1.0)) throw ConfigError("lambda1 must lie in [0, 1]");
  if (!(lambda2 >= 0.0)) throw ConfigError("lambda2 must be non-negative");
}

Tensor gate(const Tensor& mean_user, const Tensor& interval_user, const GateMLP& mlp) {
  const Tensor x = ops::concat_cols({mean_user, interval_user});
  const Tensor hidden = ops::leaky_relu(ops::add_row(ops::matmul(x, mlp.w1), mlp.b1));
  return ops::sigmoid(ops::add_row(ops::matmul(hidden, mlp.w2), mlp.b2));
}

Predictions predict(const Tensor& user_mean, const Tensor& item_mean, const Tensor& user_interval,
                    const Tensor& user_instant, const Tensor& item_interval, const Tensor& w) {
  Predictions p;
  p.mean = ops::rowwise_dot(user_mean, item_mean);
  p.gru = ops::rowwise_dot(ops::add(user_interval, user_instant), item_interval);
  p.final = ops::add(ops::mul(w, p.gru), ops::mul(ops::one_minus(w), p.mean));
  return p;
}

RecLoss rec_loss(const Predictions& positive, const Predictions& negative, const Tensor& w, bool detach_gate) {
  const Tensor coef = detach_gate ? ops::detach(w) : w;
  RecLoss loss;
  const Tensor gru_gap = ops::sub(positive.gru, negative.gru);
  const Tensor mean_gap = ops::sub(positive.mean, negative.mean);
  loss.gru = ops::sum(ops::relu(ops::one_minus(ops::mul(ops::one_minus(coef), gru_gap))));
  loss.mean = ops::sum(ops::relu(ops::one_minus(ops::mul(coef, mean_gap))));
  return loss;
}

Tensor total_loss(const RecLoss& losses, const std::vector<Tensor>& params, const LossConfig& cfg) {
  Tensor total = ops::add(ops::scale(losses.gru, cfg.lambda1), ops::scale(losses.mean, 1.0 - cfg.lambda1));
  if (cfg.lambda2 != 0.0) {
    for (const Tensor& p : params) total = ops::add(total, ops::scale(ops::square_sum(p), cfg.lambda2));
  }
  return total;
}

}  // namespace seqrec
