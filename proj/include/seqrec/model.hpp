#pragma once

// The full network: per-interval graph convolution, interval/instant/mean
// long-term embeddings, the gate and the gated ranking loss.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqrec/checkpoint.hpp"
#include "seqrec/corpus.hpp"
#include "seqrec/encoder.hpp"
#include "seqrec/fusion.hpp"
#include "seqrec/temporal.hpp"

namespace seqrec {

enum class GateMode {
  kLearned,   // w from the gate MLP
  kFixed,     // w = fixed_gate everywhere
  kGruOnly,   // mean branch disabled
  kMeanOnly,  // GRU branch disabled
};

struct ModelConfig {
  ShortTermConfig short_term;
  std::size_t heads = 2;
  std::size_t attention_layers = 2;  // instant level, 2..4 in the reference setup
  std::size_t max_seq_len = 30;      // M
  double init_std = 0.1;
  std::uint64_t seed = 42;
  GateMode gate_mode = GateMode::kLearned;
  double fixed_gate = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Constant inputs of a forward pass derived from the interval graphs.
struct ModelInputs {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::shared_ptr<const SparseMatrix>> adjacency;
  std::vector<std::shared_ptr<const SparseMatrix>> adjacency_t;
  InstantBatch instant;
};

ModelInputs prepare_inputs(const IntervalGraphs& graphs, std::size_t max_seq_len);

/// One (user, positive, negative) training triple.
struct Sample {
  UserId user = 0;
  ItemId positive = 0;
  ItemId negative = 0;
};

class Model {
 public:
  struct Output {
    std::vector<Tensor> user_short;  // T x (I x L*d)
    std::vector<Tensor> item_short;  // T x (J x L*d)
    Tensor user_interval;            // ebar_u, I x d
    Tensor item_interval;            // ebar_v, J x d
    Tensor user_instant;             // etilde_u, I x d
    Tensor user_mean;                // U, I x d
    Tensor item_mean;                // V, J x d
    Tensor gate;                     // w, I x 1
  };

  struct Loss {
    Tensor total;
    double gru = 0.0;
    double mean = 0.0;
    double mean_gate = 0.0;
  };

  /// Randomly initialised model (deterministic for config.seed).
  Model(std::size_t num_users, std::size_t num_items, std::size_t num_intervals, const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_intervals() const { return num_intervals_; }

  Output forward(const ModelInputs& inputs, Mode mode, std::uint64_t seed = 0) const;

  /// Gated hinge loss over a batch plus L2 regularisation of every parameter.
  Loss loss(const Output& out, std::span<const Sample> batch, const LossConfig& cfg) const;

  /// Final fused scores of `user` for every item.
  static std::vector<double> score_items(const Output& out, UserId user);

  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  /// Copies values from tensors with matching names and shapes.
  void load_parameters(const std::vector<NamedTensor>& tensors);
  std::size_t parameter_count() const;

 private:
  Tensor add_param(const std::string& name, std::size_t rows, std::size_t cols, double stddev);
  Tensor add_zero_param(const std::string& name, std::size_t rows, std::size_t cols);
  GRUParams make_gru(const std::string& prefix);
  AttentionParams make_attention(const std::string& prefix);

  ModelConfig config_;
  std::size_t num_users_;
  std::size_t num_items_;
  std::size_t num_intervals_;
  std::uint64_t init_state_;
  std::vector<NamedTensor> params_;

  std::vector<Tensor> user_tables_;
  std::vector<Tensor> item_tables_;
  GRUParams user_gru_;
  GRUParams item_gru_;
  AttentionParams user_interval_attn_;
  AttentionParams item_interval_attn_;
  std::vector<AttentionParams> instant_layers_;
  PositionTable positions_;
  Tensor user_mean_proj_;
  Tensor item_mean_proj_;
  GateMLP gate_;
};

}  // namespace seqrec
