#include "seqrec/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqrec {

std::vector<Tensor> gru_sequence(const std::vector<Tensor>& inputs, const GRUParams& p) {
  if (inputs.empty()) throw std::invalid_argument("gru_sequence: empty input sequence");
  const std::size_t n = inputs.front().rows();
  Tensor h = Tensor::zeros(n, p.hidden());
  std::vector<Tensor> states;
  states.reserve(inputs.size());
  for (const Tensor& e : inputs) {
    const Tensor x = ops::matmul(e, p.input_proj);
    const Tensor z = ops::sigmoid(ops::add_row(ops::add(ops::matmul(x, p.w_z), ops::matmul(h, p.u_z)), p.b_z));
    const Tensor r = ops::sigmoid(ops::add_row(ops::add(ops::matmul(x, p.w_r), ops::matmul(h, p.u_r)), p.b_r));
    const Tensor c =
        ops::tanh(ops::add_row(ops::add(ops::matmul(x, p.w_h), ops::matmul(ops::mul(r, h), p.u_h)), p.b_h));
    h = ops::add(ops::mul(ops::one_minus(z), h), ops::mul(z, c));
    states.push_back(h);
  }
  return states;
}

namespace {

struct HeadOutputs {
  std::vector<Tensor> weights;
  std::vector<Tensor> values;
};

HeadOutputs attend(const Tensor& s, std::size_t length, const AttentionParams& p,
                   std::span<const std::uint8_t> key_valid) {
  const std::size_t d = p.w_q.cols();
  if (p.heads == 0 || d % p.heads != 0) {
    throw std::invalid_argument("self_attention: width " + std::to_string(d) + " not divisible by " +
                                std::to_string(p.heads) + " heads");
  }
  const std::size_t dh = d / p.heads;
  const Tensor q = ops::matmul(s, p.w_q);
  const Tensor k = ops::matmul(s, p.w_k);
  const Tensor v = ops::matmul(s, p.w_v);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  HeadOutputs out;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor qh = ops::slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = ops::slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = ops::slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor scores = ops::scale(ops::block_matmul_nt(qh, kh, length), inv_sqrt);
    const Tensor weights = ops::block_softmax(scores, length, key_valid);
    out.weights.push_back(weights);
    out.values.push_back(ops::block_matmul(weights, vh, length));
  }
  return out;
}

}  // namespace

Tensor self_attention(const Tensor& sequences, std::size_t length, const AttentionParams& params,
                      std::span<const std::uint8_t> key_valid) {
  const HeadOutputs heads = attend(sequences, length, params, key_valid);
  return ops::matmul(ops::concat_cols(heads.values), params.w_o);
}

Tensor attention_weights(const Tensor& sequences, std::size_t length, const AttentionParams& params,
                         std::span<const std::uint8_t> key_valid) {
  return attend(sequences, length, params, key_valid).weights.front();
}

Tensor interval_attention(const std::vector<Tensor>& hidden, const AttentionParams& params) {
  const std::size_t length = hidden.size();
  const Tensor seq = ops::interleave(hidden);
  return ops::segment_sum(self_attention(seq, length, params), length);
}

InstantBatch make_instant_batch(const std::vector<std::vector<ItemId>>& sequences, std::size_t length) {
  InstantBatch batch;
  batch.length = std::max<std::size_t>(length, 1);
  batch.items.assign(sequences.size() * batch.length, -1);
  batch.positions.assign(sequences.size() * batch.length, -1);
  batch.valid.assign(sequences.size() * batch.length, 0);
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    const auto& seq = sequences[b];
    if (seq.size() > batch.length) {
      throw std::invalid_argument("make_instant_batch: sequence of length " + std::to_string(seq.size()) +
                                  " exceeds padded length " + std::to_string(batch.length));
    }
    const std::size_t offset = b * batch.length + (batch.length - seq.size());
    for (std::size_t m = 0; m < seq.size(); ++m) {
      batch.items[offset + m] = seq[m];
      batch.positions[offset + m] = static_cast<std::int64_t>(m);
      batch.valid[offset + m] = 1;
    }
  }
  return batch;
}

Tensor instant_attention(const InstantBatch& batch, const Tensor& item_embeddings, const PositionTable& positions,
                         const std::vector<AttentionParams>& layers) {
  for (std::int64_t pos : batch.positions) {
    if (pos >= static_cast<std::int64_t>(positions.max_len())) {
      throw std::invalid_argument("instant_attention: sequence longer than the position table");
    }
  }
  Tensor s = ops::add(ops::embedding_lookup(item_embeddings, batch.items),
                      ops::embedding_lookup(positions.positions, batch.positions));
  for (const AttentionParams& layer : layers) {
    s = ops::add(ops::leaky_relu(self_attention(s, batch.length, layer, batch.valid)), s);
  }
  return ops::segment_sum(s, batch.length, batch.valid);
}

Tensor mean_pool(const std::vector<Tensor>& short_terms, const Tensor& projection) {
  return ops::matmul(ops::mean(short_terms), projection);
}

}  // namespace seqrec
