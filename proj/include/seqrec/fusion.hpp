#pragma once

// Gate, branch predictions and the gated hinge ranking losses.

#include <cstddef>
#include <vector>

#include "seqrec/tensor.hpp"

namespace seqrec {

/// Two-layer MLP over [U_i || ebar_i]: LeakyReLU hidden layer, sigmoid output.
struct GateMLP {
  Tensor w1;  // 2d x d
  Tensor b1;  // 1 x d
  Tensor w2;  // d x 1
  Tensor b2;  // 1 x 1
};

struct LossConfig {
  double lambda1 = 0.1;   // weight of the GRU-branch loss
  double lambda2 = 1e-2;  // L2 weight on every parameter
  bool detach_gate = false;  // treat w as a constant in the loss coefficients

  void validate() const;
};

/// w = sigmoid(MLP([mean_user || interval_user])), n x 1.
Tensor gate(const Tensor& mean_user, const Tensor& interval_user, const GateMLP& mlp);

/// Per-pair branch scores, each b x 1.
struct Predictions {
  Tensor mean;   // <U_i, V_j>
  Tensor gru;    // <ebar_i + etilde_i, ebar_j>
  Tensor final;  // w * gru + (1 - w) * mean
};

/// Row k of every input belongs to pair k. `w` is b x 1.
Predictions predict(const Tensor& user_mean, const Tensor& item_mean, const Tensor& user_interval,
                    const Tensor& user_instant, const Tensor& item_interval, const Tensor& w);

/// w * gru + (1 - w) * mean.
inline double fuse(double w, double gru, double mean) { return w * gru + (1.0 - w) * mean; }

struct RecLoss {
  Tensor gru;   // sum max(0, 1 - (1 - w)(gru_p - gru_n))
  Tensor mean;  // sum max(0, 1 - w (mean_p - mean_n))
};

RecLoss rec_loss(const Predictions& positive, const Predictions& negative, const Tensor& w, bool detach_gate = false);

/// lambda1 * L_gru + (1 - lambda1) * L_mean + lambda2 * sum ||theta||^2.
Tensor total_loss(const RecLoss& losses, const std::vector<Tensor>& params, const LossConfig& cfg);

/// Scalar hinge of one pair, as in rec_loss.
inline double hinge(double coefficient, double positive, double negative) {
  const double m = 1.0 - coefficient * (positive - negative);
  return m > 0.0 ? m : 0.0;
}

}  // namespace seqrec
