#include "seqrec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace seqrec {

using detail::Node;

namespace {

std::string shape_of(std::size_t r, std::size_t c) { return "(" + std::to_string(r) + ", " + std::to_string(c) + ")"; }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                              b.shape_string());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

Tensor make(std::size_t rows, std::size_t cols, std::vector<double> value, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// C (n x m) += A (n x k) * B (k x m)
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (n x k) += A (n x m) * B^T, B is (k x m)
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += ai[j] * bp[j];
      c[i * k + p] += s;
    }
  }
}

// C (k x m) += A^T * B, A is (n x k), B is (n x m)
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make(a.rows(), a.cols(), std::move(out), {a.handle()}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  if (values.size() != rows * cols) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                                shape_of(rows, cols));
  }
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from(1, 1, {value}); }

std::size_t Tensor::rows() const { return node_ ? node_->rows : 0; }
std::size_t Tensor::cols() const { return node_ ? node_->cols : 0; }
std::string Tensor::shape_string() const { return shape_of(rows(), cols()); }

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw std::out_of_range("Tensor::at");
  return node_->value[r * node_->cols + c];
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item on shape " + shape_string());
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::grad() const { return node_->grad_buffer(); }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() const {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (size() != 1) throw std::invalid_argument("backward() needs a 1x1 tensor, got " + shape_string());
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// SparseMatrix

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets)
    : rows_(rows), cols_(cols) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_ptr_.assign(rows + 1, 0);
  std::size_t last_row = rows;
  for (const Triplet& t : triplets) {
    if (t.row >= rows || t.col >= cols) throw std::out_of_range("SparseMatrix: triplet outside shape");
    // Duplicate coordinates are summed.
    if (t.row == last_row && col_index_.back() == t.col) {
      values_.back() += t.value;
      continue;
    }
    col_index_.push_back(t.col);
    values_.push_back(t.value);
    ++row_ptr_[t.row + 1];
    last_row = t.row;
  }
  for (std::size_t r = 0; r < rows; ++r) row_ptr_[r + 1] += row_ptr_[r];
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
    if (col_index_[k] == c) return values_[k];
  return 0.0;
}

std::vector<SparseMatrix::Triplet> SparseMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) out.push_back({r, col_index_[k], values_[k]});
  return out;
}

SparseMatrix SparseMatrix::transpose() const {
  auto t = triplets();
  for (auto& x : t) std::swap(x.row, x.col);
  return SparseMatrix(cols_, rows_, std::move(t));
}

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(n * m, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), n, k, m);
  return make(n, m, std::move(out), {a.handle(), b.handle()}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) gemm_nt(self.grad.data(), pb.value.data(), pa.grad_buffer().data(), n, m, k);
    if (pb.requires_grad) gemm_tn(pa.value.data(), self.grad.data(), pb.grad_buffer().data(), n, k, m);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make(a.rows(), a.cols(), std::move(out), {a.handle(), b.handle()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make(a.rows(), a.cols(), std::move(out), {a.handle(), b.handle()}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make(a.rows(), a.cols(), std::move(out), {a.handle(), b.handle()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor one_minus(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) shape_error("add_row", a, bias);
  const std::size_t n = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] + bias.data()[j];
  return make(n, c, std::move(out), {a.handle(), bias.handle()}, [n, c](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

Tensor mul_col(const Tensor& a, const Tensor& w) {
  if (w.cols() != 1 || w.rows() != a.rows()) shape_error("mul_col", a, w);
  const std::size_t n = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] * w.data()[i];
  return make(n, c, std::move(out), {a.handle(), w.handle()}, [n, c](Node& self) {
    Node& pa = *self.parents[0];
    Node& pw = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * pw.value[i];
    }
    if (pw.requires_grad) {
      auto& g = pw.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i] += self.grad[i * c + j] * pa.value[i * c + j];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::shared_ptr<Node>> parents;
  for (const Tensor& p : parts) {
    if (p.rows() != n) shape_error("concat_cols", parts.front(), p);
    offsets.push_back(total);
    total += p.cols();
    parents.push_back(p.handle());
  }
  std::vector<double> out(n * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(parts[k].data().data() + i * c, c, out.data() + i * total + offsets[k]);
  }
  return make(n, total, std::move(out), std::move(parents), [n, total, offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p.cols; ++j) g[i * p.cols + j] += self.grad[i * total + offsets[k] + j];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") outside shape " + a.shape_string());
  }
  const std::size_t n = a.rows(), c = a.cols(), w = end - begin;
  std::vector<double> out(n * w);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(a.data().data() + i * c + begin, w, out.data() + i * w);
  return make(n, w, std::move(out), {a.handle()}, [n, c, w, begin](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad[i * w + j];
  });
}

Tensor mean(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("mean: no inputs");
  std::vector<double> out(parts.front().size(), 0.0);
  std::vector<std::shared_ptr<Node>> parents;
  for (const Tensor& p : parts) {
    require_same("mean", parts.front(), p);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.data()[i];
    parents.push_back(p.handle());
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& x : out) x *= inv;
  return make(parts.front().rows(), parts.front().cols(), std::move(out), std::move(parents), [inv](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make(1, 1, {s}, {a.handle()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (double& x : g) x += self.grad[0];
  });
}

Tensor square_sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return make(1, 1, {s}, {a.handle()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * p.value[i] * self.grad[0];
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same("rowwise_dot", a, b);
  const std::size_t n = a.rows(), c = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += a.data()[i * c + j] * b.data()[i * c + j];
  return make(n, 1, std::move(out), {a.handle(), b.handle()}, [n, c](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i] * pb.value[i * c + j];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i] * pa.value[i * c + j];
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a) { return block_softmax(a, a.cols()); }

Tensor dropout(const Tensor& a, double keep_prob, std::uint64_t seed, Mode mode) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw std::invalid_argument("dropout: keep_prob must be in (0, 1]");
  if (mode == Mode::kEval || keep_prob == 1.0) return a;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(keep_prob);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = keep(rng) ? 1.0 / keep_prob : 0.0;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * mask[i];
  return make(a.rows(), a.cols(), std::move(out), {a.handle()}, [mask = std::move(mask)](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> indices) {
  const std::size_t c = table.cols();
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * c, 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0) continue;
    if (static_cast<std::size_t>(idx[r]) >= table.rows()) {
      throw std::out_of_range("embedding_lookup: index " + std::to_string(idx[r]) + " outside table " +
                              table.shape_string());
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(idx[r]) * c, c, out.data() + r * c);
  }
  const std::size_t n = idx.size();
  return make(n, c, std::move(out), {table.handle()}, [c, idx = std::move(idx)](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      const std::size_t base = static_cast<std::size_t>(idx[r]) * c;
      for (std::size_t j = 0; j < c; ++j) g[base + j] += self.grad[r * c + j];
    }
  });
}

Tensor sparse_dense_matmul(std::shared_ptr<const SparseMatrix> s, const Tensor& x) {
  if (s->cols() != x.rows()) {
    throw std::invalid_argument("sparse_dense_matmul: incompatible shapes " + shape_of(s->rows(), s->cols()) +
                                " and " + x.shape_string());
  }
  const std::size_t c = x.cols();
  std::vector<double> out(s->rows() * c, 0.0);
  const auto rp = s->row_ptr();
  const auto ci = s->col_index();
  const auto v = s->values();
  for (std::size_t r = 0; r < s->rows(); ++r)
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      const double* xr = x.data().data() + ci[k] * c;
      for (std::size_t j = 0; j < c; ++j) out[r * c + j] += v[k] * xr[j];
    }
  return make(s->rows(), c, std::move(out), {x.handle()}, [s, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto rp = s->row_ptr();
    const auto ci = s->col_index();
    const auto v = s->values();
    for (std::size_t r = 0; r < s->rows(); ++r)
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k)
        for (std::size_t j = 0; j < c; ++j) g[ci[k] * c + j] += v[k] * self.grad[r * c + j];
  });
}

Tensor detach(const Tensor& a) {
  return Tensor::from(a.rows(), a.cols(), std::vector<double>(a.data().begin(), a.data().end()));
}

Tensor interleave(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw std::invalid_argument("interleave: no inputs");
  const std::size_t n = steps.front().rows(), c = steps.front().cols(), t_len = steps.size();
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<double> out(n * t_len * c);
  for (std::size_t t = 0; t < t_len; ++t) {
    require_same("interleave", steps.front(), steps[t]);
    parents.push_back(steps[t].handle());
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(steps[t].data().data() + i * c, c, out.data() + (i * t_len + t) * c);
  }
  return make(n * t_len, c, std::move(out), std::move(parents), [n, c, t_len](Node& self) {
    for (std::size_t t = 0; t < t_len; ++t) {
      Node& p = *self.parents[t];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[(i * t_len + t) * c + j];
    }
  });
}

Tensor block_matmul_nt(const Tensor& q, const Tensor& k, std::size_t block) {
  require_same("block_matmul_nt", q, k);
  if (block == 0 || q.rows() % block != 0) {
    throw std::invalid_argument("block_matmul_nt: " + std::to_string(q.rows()) + " rows not divisible by block " +
                                std::to_string(block));
  }
  const std::size_t rows = q.rows(), c = q.cols(), nb = rows / block;
  std::vector<double> out(rows * block, 0.0);
  for (std::size_t b = 0; b < nb; ++b)
    gemm_nt(q.data().data() + b * block * c, k.data().data() + b * block * c, out.data() + b * block * block, block,
            c, block);
  return make(rows, block, std::move(out), {q.handle(), k.handle()}, [nb, block, c](Node& self) {
    Node& pq = *self.parents[0];
    Node& pk = *self.parents[1];
    for (std::size_t b = 0; b < nb; ++b) {
      const double* gs = self.grad.data() + b * block * block;
      if (pq.requires_grad)
        gemm_nn(gs, pk.value.data() + b * block * c, pq.grad_buffer().data() + b * block * c, block, block, c);
      if (pk.requires_grad)
        gemm_tn(gs, pq.value.data() + b * block * c, pk.grad_buffer().data() + b * block * c, block, block, c);
    }
  });
}

Tensor block_matmul(const Tensor& p, const Tensor& v, std::size_t block) {
  if (p.cols() != block || p.rows() != v.rows() || block == 0 || p.rows() % block != 0) {
    shape_error("block_matmul", p, v);
  }
  const std::size_t rows = v.rows(), c = v.cols(), nb = rows / block;
  std::vector<double> out(rows * c, 0.0);
  for (std::size_t b = 0; b < nb; ++b)
    gemm_nn(p.data().data() + b * block * block, v.data().data() + b * block * c, out.data() + b * block * c, block,
            block, c);
  return make(rows, c, std::move(out), {p.handle(), v.handle()}, [nb, block, c](Node& self) {
    Node& pp = *self.parents[0];
    Node& pv = *self.parents[1];
    for (std::size_t b = 0; b < nb; ++b) {
      const double* go = self.grad.data() + b * block * c;
      if (pp.requires_grad)
        gemm_nt(go, pv.value.data() + b * block * c, pp.grad_buffer().data() + b * block * block, block, c, block);
      if (pv.requires_grad)
        gemm_tn(pp.value.data() + b * block * block, go, pv.grad_buffer().data() + b * block * c, block, block, c);
    }
  });
}

Tensor block_softmax(const Tensor& scores, std::size_t block, std::span<const std::uint8_t> key_valid) {
  if (scores.cols() != block || block == 0 || scores.rows() % block != 0) {
    // Plain row softmax is block == cols with any number of rows.
    if (!(key_valid.empty() && scores.cols() == block && block > 0)) {
      throw std::invalid_argument("block_softmax: shape " + scores.shape_string() + " does not match block " +
                                  std::to_string(block));
    }
  }
  if (!key_valid.empty() && key_valid.size() != scores.rows()) {
    throw std::invalid_argument("block_softmax: mask length " + std::to_string(key_valid.size()) + " for " +
                                std::to_string(scores.rows()) + " rows");
  }
  const std::size_t rows = scores.rows();
  std::vector<double> out(rows * block, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = (r / block) * block;
    auto valid = [&](std::size_t j) { return key_valid.empty() || key_valid[base + j] != 0; };
    const double* x = scores.data().data() + r * block;
    double* y = out.data() + r * block;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < block; ++j)
      if (valid(j)) mx = std::max(mx, x[j]);
    if (mx == -INFINITY) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < block; ++j) {
      if (!valid(j)) continue;
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < block; ++j) y[j] /= total;
  }
  return make(rows, block, std::move(out), {scores.handle()}, [rows, block](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * block;
      const double* gy = self.grad.data() + r * block;
      double dot = 0.0;
      for (std::size_t j = 0; j < block; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < block; ++j) g[r * block + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor segment_sum(const Tensor& x, std::size_t block, std::span<const std::uint8_t> row_valid) {
  if (block == 0 || x.rows() % block != 0) {
    throw std::invalid_argument("segment_sum: " + std::to_string(x.rows()) + " rows not divisible by block " +
                                std::to_string(block));
  }
  if (!row_valid.empty() && row_valid.size() != x.rows()) throw std::invalid_argument("segment_sum: mask length");
  const std::size_t nb = x.rows() / block, c = x.cols();
  std::vector<std::uint8_t> mask(row_valid.begin(), row_valid.end());
  std::vector<double> out(nb * c, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (!mask.empty() && mask[r] == 0) continue;
    for (std::size_t j = 0; j < c; ++j) out[(r / block) * c + j] += x.data()[r * c + j];
  }
  return make(nb, c, std::move(out), {x.handle()}, [block, c, mask = std::move(mask)](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < p.rows; ++r) {
      if (!mask.empty() && mask[r] == 0) continue;
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad[(r / block) * c + j];
    }
  });
}

}  // namespace ops

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                           const GradCheckOptions& options) {
  std::vector<Tensor> ps = params;
  for (Tensor& p : ps) p.zero_grad();
  f().backward();

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < ps.size(); ++k)
    for (std::size_t i = 0; i < ps[k].size(); ++i) coords.emplace_back(k, i);
  if (coords.size() > options.max_coordinates) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
  }

  GradCheckResult result;
  for (const auto& [k, i] : coords) {
    const double analytic = ps[k].grad()[i];
    double& x = ps[k].mutable_data()[i];
    const double saved = x;
    x = saved + options.step;
    const double plus = f().item();
    x = saved - options.step;
    const double minus = f().item();
    x = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace seqrec
