#pragma once

// Long-term embeddings: a GRU over per-interval embeddings followed by
// self-attention (interval level), positional self-attention over each
// user's recent items (instant level), and the plain average of the
// short-term embeddings (mean level).

#include <cstddef>
#include <cstdint>
#include <vector>

#include "seqrec/corpus.hpp"
#include "seqrec/tensor.hpp"

namespace seqrec {

/// Standard GRU cell on d-dimensional hidden state. Inputs of width L*d are
/// first projected to d by `input_proj`.
///   z = sigmoid(x W_z + h U_z + b_z)
///   r = sigmoid(x W_r + h U_r + b_r)
///   c = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * c
struct GRUParams {
  Tensor input_proj;  // (L*d) x d
  Tensor w_z, w_r, w_h;  // d x d
  Tensor u_z, u_r, u_h;  // d x d
  Tensor b_z, b_r, b_h;  // 1 x d

  std::size_t hidden() const { return w_z.cols(); }
};

/// Multi-head scaled dot-product self-attention projections.
struct AttentionParams {
  std::size_t heads = 2;
  Tensor w_q, w_k, w_v, w_o;  // d x d
};

/// Learnable position vectors, row m for the (m+1)-th item of a sequence.
struct PositionTable {
  Tensor positions;  // M x d

  std::size_t max_len() const { return positions.rows(); }
};

/// Hidden states h_1..h_T for every row, starting from h_0 = 0.
std::vector<Tensor> gru_sequence(const std::vector<Tensor>& inputs, const GRUParams& params);

/// Self-attention over a batch of sequences stored as (n*S) x d. Keys with
/// key_valid == 0 are ignored. Returns (n*S) x d.
Tensor self_attention(const Tensor& sequences, std::size_t length, const AttentionParams& params,
                      std::span<const std::uint8_t> key_valid = {});

/// Attention weights (n*S) x S of the first head, for inspection.
Tensor attention_weights(const Tensor& sequences, std::size_t length, const AttentionParams& params,
                         std::span<const std::uint8_t> key_valid = {});

/// One self-attention pass over the T hidden states of each row, summed over
/// time. Returns n x d.
Tensor interval_attention(const std::vector<Tensor>& hidden, const AttentionParams& params);

/// Left-padded token layout for instant-level attention.
struct InstantBatch {
  std::size_t length = 0;                  // padded length S
  std::vector<std::int64_t> items;         // n*S, -1 for padding
  std::vector<std::int64_t> positions;     // n*S, -1 for padding
  std::vector<std::uint8_t> valid;         // n*S

  std::size_t num_sequences() const { return length == 0 ? 0 : items.size() / length; }
};

/// Pads each sequence on the left to `length` (>= longest sequence). Real
/// tokens get positions 0..n-1 in time order regardless of padding.
InstantBatch make_instant_batch(const std::vector<std::vector<ItemId>>& sequences, std::size_t length);

/// Stacked layers S_l = LeakyReLU(SelfAtt(S_{l-1})) + S_{l-1} over item
/// embeddings plus positions, summed over real tokens. Returns n x d; rows
/// with no history are zero.
Tensor instant_attention(const InstantBatch& batch, const Tensor& item_embeddings, const PositionTable& positions,
                         const std::vector<AttentionParams>& layers);

/// Mean over the T short-term embeddings followed by a (L*d) x d projection.
Tensor mean_pool(const std::vector<Tensor>& short_terms, const Tensor& projection);

}  // namespace seqrec
