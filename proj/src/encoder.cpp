#include "seqrec/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "seqrec/error.hpp"

namespace seqrec {

void ShortTermConfig::validate() const {
  if (dim == 0) throw ConfigError("embedding dimension must be at least 1");
  if (layers < 1 || layers > 3) throw ConfigError("graph convolution layers must be 1, 2 or 3");
  if (!(edge_dropout >= 0.0 && edge_dropout < 1.0)) throw ConfigError("edge_dropout must lie in [0, 1)");
  if (!(message_dropout >= 0.0 && message_dropout < 1.0)) throw ConfigError("message_dropout must lie in [0, 1)");
}

SparseMatrix normalize_adjacency(const UserItemGraph& graph) {
  const std::size_t users = graph.num_users();
  const std::size_t items = graph.num_items();
  std::vector<double> user_degree(users, 0.0);
  std::vector<double> item_degree(items, 0.0);
  for (UserId u = 0; u < users; ++u)
    for (const auto& e : graph.row(u)) {
      user_degree[u] += e.weight;
      item_degree[e.item] += e.weight;
    }
  std::vector<SparseMatrix::Triplet> triplets;
  for (UserId u = 0; u < users; ++u)
    for (const auto& e : graph.row(u)) {
      if (e.weight == 0.0) continue;
      triplets.push_back({u, e.item, e.weight / std::sqrt(user_degree[u] * item_degree[e.item])});
    }
  return SparseMatrix(users, items, std::move(triplets));
}

SparseMatrix drop_edges(const SparseMatrix& adjacency, double drop_prob, std::uint64_t seed) {
  if (drop_prob <= 0.0) return adjacency;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - drop_prob);
  std::vector<SparseMatrix::Triplet> kept;
  for (const auto& t : adjacency.triplets())
    if (keep(rng)) kept.push_back({t.row, t.col, t.value / (1.0 - drop_prob)});
  return SparseMatrix(adjacency.rows(), adjacency.cols(), std::move(kept));
}

IntervalEmbeddings encode_interval(const std::shared_ptr<const SparseMatrix>& adjacency,
                                   const std::shared_ptr<const SparseMatrix>& adjacency_t, const Tensor& user_table,
                                   const Tensor& item_table, const ShortTermConfig& cfg, Mode mode,
                                   std::uint64_t seed) {
  if (adjacency->rows() != user_table.rows() || adjacency->cols() != item_table.rows() ||
      adjacency_t->rows() != adjacency->cols() || adjacency_t->cols() != adjacency->rows()) {
    throw std::invalid_argument("encode_interval: adjacency does not match embedding tables " +
                                user_table.shape_string() + " / " + item_table.shape_string());
  }
  if (user_table.cols() != cfg.dim || item_table.cols() != cfg.dim) {
    throw std::invalid_argument("encode_interval: embedding width differs from configured dimension");
  }

  std::shared_ptr<const SparseMatrix> a = adjacency;
  std::shared_ptr<const SparseMatrix> a_t = adjacency_t;
  if (mode == Mode::kTrain && cfg.edge_dropout > 0.0) {
    auto dropped = std::make_shared<const SparseMatrix>(drop_edges(*adjacency, cfg.edge_dropout, seed));
    a_t = std::make_shared<const SparseMatrix>(dropped->transpose());
    a = dropped;
  }

  IntervalEmbeddings out;
  out.user_layers.push_back(user_table);
  out.item_layers.push_back(item_table);
  const double keep = 1.0 - cfg.message_dropout;
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    Tensor z_user = ops::leaky_relu(ops::sparse_dense_matmul(a, out.item_layers.back()));
    Tensor z_item = ops::leaky_relu(ops::sparse_dense_matmul(a_t, out.user_layers.back()));
    z_user = ops::dropout(z_user, keep, seed + 2 * l + 1, mode);
    z_item = ops::dropout(z_item, keep, seed + 2 * l + 2, mode);
    out.user_layers.push_back(ops::add(z_user, out.user_layers.back()));
    out.item_layers.push_back(ops::add(z_item, out.item_layers.back()));
  }
  out.user = ops::concat_cols({out.user_layers.begin() + 1, out.user_layers.end()});
  out.item = ops::concat_cols({out.item_layers.begin() + 1, out.item_layers.end()});
  return out;
}

}  // namespace seqrec
