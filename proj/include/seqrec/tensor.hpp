#pragma once

// Dense row-major matrices with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a node of a computation graph. Leaf tensors
// created with requires_grad = true are parameters; every op returns a new
// node that remembers its inputs and how to push gradients back to them.
// Calling backward() on a 1x1 result accumulates d(result)/d(leaf) into the
// grad buffer of every reachable leaf. All tensors are two-dimensional;
// vectors are 1 x n or n x 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace seqrec {

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::vector<std::size_t> shape() const { return {rows(), cols()}; }
  std::string shape_string() const;

  std::span<const double> data() const;
  /// Mutable values; intended for parameter initialisation and optimiser
  /// updates on leaf tensors.
  std::span<double> mutable_data();
  double at(std::size_t r, std::size_t c) const;
  /// Value of a 1x1 tensor.
  double item() const;

  bool requires_grad() const;
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad() const;

  /// Reverse pass from this 1x1 tensor. Each reachable node is visited once,
  /// in reverse topological order.
  void backward() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

/// Compressed sparse row matrix used as a constant operand (adjacency).
class SparseMatrix {
 public:
  struct Triplet {
    std::size_t row = 0;
    std::size_t col = 0;
    double value = 0.0;
  };

  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }
  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::size_t> col_index() const { return col_index_; }
  std::span<const double> values() const { return values_; }
  double at(std::size_t r, std::size_t c) const;
  SparseMatrix transpose() const;
  std::vector<Triplet> triplets() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_index_;
  std::vector<double> values_;
};

enum class Mode { kTrain, kEval };

inline constexpr double kLeakySlope = 0.2;

namespace ops {

// Shape mismatches throw std::invalid_argument naming both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// 1 - a, elementwise.
Tensor one_minus(const Tensor& a);
/// a (n x c) + bias (1 x c) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
/// a (n x c) scaled row-wise by w (n x 1).
Tensor mul_col(const Tensor& a, const Tensor& w);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
/// Elementwise mean of equally shaped tensors.
Tensor mean(const std::vector<Tensor>& parts);
/// Sum of all entries, 1x1.
Tensor sum(const Tensor& a);
/// Sum of squared entries, 1x1.
Tensor square_sum(const Tensor& a);
/// Row-wise inner products of equally shaped tensors, n x 1.
Tensor rowwise_dot(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = kLeakySlope);
Tensor relu(const Tensor& a);
/// Row-wise softmax.
Tensor softmax(const Tensor& a);

/// Inverted dropout: zeroes entries with probability 1 - keep_prob and scales
/// survivors by 1 / keep_prob. Identity in eval mode or for keep_prob == 1.
Tensor dropout(const Tensor& a, double keep_prob, std::uint64_t seed, Mode mode);

/// Gathers rows of `table`; index -1 yields a zero row.
Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> indices);

/// s (constant) times x.
Tensor sparse_dense_matmul(std::shared_ptr<const SparseMatrix> s, const Tensor& x);

/// Copy that blocks gradient flow.
Tensor detach(const Tensor& a);

// Block-sequence helpers. A batch of n sequences of length S is stored as an
// (n*S) x c matrix, row b*S + s holding position s of sequence b.

/// Interleaves T tensors of shape n x c into an (n*T) x c sequence batch.
Tensor interleave(const std::vector<Tensor>& steps);
/// scores[b*S+i, j] = q[b*S+i] . k[b*S+j]; output (n*S) x S.
Tensor block_matmul_nt(const Tensor& q, const Tensor& k, std::size_t block);
/// out[b*S+i] = sum_j p[b*S+i, j] * v[b*S+j]; output (n*S) x c.
Tensor block_matmul(const Tensor& p, const Tensor& v, std::size_t block);
/// Row softmax over keys, skipping keys with key_valid[b*S+j] == 0. Rows with
/// no valid key become zero. Empty key_valid means all keys are valid.
Tensor block_softmax(const Tensor& scores, std::size_t block, std::span<const std::uint8_t> key_valid = {});
/// out[b] = sum over s of x[b*S+s] where row_valid (if given) is non-zero.
Tensor segment_sum(const Tensor& x, std::size_t block, std::span<const std::uint8_t> row_valid = {});

}  // namespace ops

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coordinates = 200;
  std::uint64_t seed = 7;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

/// Compares reverse-mode gradients of the scalar f() with central finite
/// differences over a sample of parameter coordinates.
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace seqrec
