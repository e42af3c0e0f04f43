#pragma once

// Short-term embeddings: graph convolution over one interval's bipartite
// user-item graph.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "seqrec/corpus.hpp"
#include "seqrec/tensor.hpp"

namespace seqrec {

struct ShortTermConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;       // 1..3
  double edge_dropout = 0.5;    // probability of dropping a nonzero of the adjacency
  double message_dropout = 0.0;  // probability of dropping a propagated activation

  void validate() const;
};

/// D_u^{-1/2} A D_v^{-1/2} with weighted degrees; empty rows/columns stay zero.
SparseMatrix normalize_adjacency(const UserItemGraph& graph);

/// Randomly removes nonzeros with probability drop_prob and rescales the
/// survivors by 1 / (1 - drop_prob).
SparseMatrix drop_edges(const SparseMatrix& adjacency, double drop_prob, std::uint64_t seed);

struct IntervalEmbeddings {
  // layer 0 is the input table; layers 1..L are propagated.
  std::vector<Tensor> user_layers;
  std::vector<Tensor> item_layers;
  Tensor user;  // I x (L*d), concatenation of layers 1..L
  Tensor item;  // J x (L*d)
};

/// Propagates L layers: users aggregate item embeddings through A, items
/// aggregate user embeddings through A^T, each followed by LeakyReLU and a
/// residual connection. `adjacency_t` must be the transpose of `adjacency`.
IntervalEmbeddings encode_interval(const std::shared_ptr<const SparseMatrix>& adjacency,
                                   const std::shared_ptr<const SparseMatrix>& adjacency_t, const Tensor& user_table,
                                   const Tensor& item_table, const ShortTermConfig& cfg, Mode mode,
                                   std::uint64_t seed);

}  // namespace seqrec
