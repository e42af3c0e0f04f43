#include <cmath>
#include <random>

#include "doctest.h"
#include "seqrec/checkpoint.hpp"
#include "seqrec/error.hpp"
#include "seqrec/tensor.hpp"

using namespace seqrec;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, bool grad = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(r * c);
  for (double& x : v) x = normal(rng);
  return Tensor::from(r, c, std::move(v), grad);
}

// Weighted sum with fixed random weights so every output entry matters.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  return ops::sum(ops::mul(y, random_tensor(y.rows(), y.cols(), seed, false)));
}

void check_grad(const std::function<Tensor()>& f, const std::vector<Tensor>& params) {
  const GradCheckResult r = grad_check(f, params);
  CHECK(r.coordinates_checked > 0);
  CHECK(r.max_relative_error < 1e-6);
}

}  // namespace

TEST_CASE("values of basic ops") {
  const Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
  const Tensor b = Tensor::from(2, 2, {5, 6, 7, 8});
  const Tensor m = ops::matmul(a, b);
  CHECK(std::vector<double>(m.data().begin(), m.data().end()) == std::vector<double>{19, 22, 43, 50});
  CHECK(ops::sum(a).item() == 10);
  CHECK(ops::square_sum(a).item() == 30);
  const Tensor s = ops::softmax(Tensor::from(1, 2, {0.0, 0.0}));
  CHECK(s.at(0, 0) == doctest::Approx(0.5));
  CHECK(ops::leaky_relu(Tensor::from(1, 2, {-1.0, 2.0})).at(0, 0) == doctest::Approx(-kLeakySlope));
  CHECK(ops::relu(Tensor::from(1, 2, {-1.0, 2.0})).at(0, 0) == 0.0);
  CHECK(ops::rowwise_dot(a, b).at(1, 0) == 3 * 7 + 4 * 8);
  CHECK_THROWS_AS(ops::matmul(a, Tensor::zeros(3, 1)), std::invalid_argument);
  CHECK_THROWS_AS(ops::add(a, Tensor::zeros(2, 3)), std::invalid_argument);
}

TEST_CASE("embedding lookup gives zero rows for padding") {
  const Tensor table = Tensor::from(2, 2, {1, 2, 3, 4});
  const std::vector<std::int64_t> idx = {1, -1, 0};
  const Tensor e = ops::embedding_lookup(table, idx);
  CHECK(e.rows() == 3);
  CHECK(e.at(0, 1) == 4);
  CHECK(e.at(1, 0) == 0);
  CHECK(e.at(2, 0) == 1);
}

TEST_CASE("sparse matrix sums duplicates and transposes") {
  const SparseMatrix s(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 2, 0.5}});
  CHECK(s.nnz() == 2);
  CHECK(s.at(1, 2) == 1.5);
  const SparseMatrix t = s.transpose();
  CHECK(t.rows() == 3);
  CHECK(t.at(2, 1) == 1.5);
  CHECK(t.at(1, 0) == 2.0);
}

TEST_CASE("gradients of elementwise and reduction ops") {
  const Tensor a = random_tensor(3, 4, 1);
  const Tensor b = random_tensor(3, 4, 2);
  check_grad([&] { return probe(ops::add(a, b)); }, {a, b});
  check_grad([&] { return probe(ops::sub(a, b)); }, {a, b});
  check_grad([&] { return probe(ops::mul(a, b)); }, {a, b});
  check_grad([&] { return probe(ops::scale(a, -2.5)); }, {a});
  check_grad([&] { return probe(ops::one_minus(a)); }, {a});
  check_grad([&] { return probe(ops::sigmoid(a)); }, {a});
  check_grad([&] { return probe(ops::tanh(a)); }, {a});
  check_grad([&] { return probe(ops::leaky_relu(a)); }, {a});
  check_grad([&] { return probe(ops::relu(a)); }, {a});
  check_grad([&] { return probe(ops::softmax(a)); }, {a});
  check_grad([&] { return ops::square_sum(a); }, {a});
  check_grad([&] { return probe(ops::rowwise_dot(a, b)); }, {a, b});
  check_grad([&] { return probe(ops::mean({a, b, a})); }, {a, b});
}

TEST_CASE("gradients of shape ops") {
  const Tensor a = random_tensor(3, 4, 3);
  const Tensor b = random_tensor(4, 2, 4);
  const Tensor bias = random_tensor(1, 4, 5);
  const Tensor w = random_tensor(3, 1, 6);
  check_grad([&] { return probe(ops::matmul(a, b)); }, {a, b});
  check_grad([&] { return probe(ops::add_row(a, bias)); }, {a, bias});
  check_grad([&] { return probe(ops::mul_col(a, w)); }, {a, w});
  check_grad([&] { return probe(ops::concat_cols({a, ops::matmul(a, b)})); }, {a, b});
  check_grad([&] { return probe(ops::slice_cols(a, 1, 3)); }, {a});
  const std::vector<std::int64_t> idx = {2, -1, 0, 2};
  check_grad([&] { return probe(ops::embedding_lookup(a, idx)); }, {a});
  auto s = std::make_shared<const SparseMatrix>(
      SparseMatrix(2, 3, {{0, 0, 0.5}, {0, 2, -1.0}, {1, 1, 2.0}}));
  check_grad([&] { return probe(ops::sparse_dense_matmul(s, a)); }, {a});
}

TEST_CASE("gradients of block-sequence ops") {
  const std::size_t n = 3, S = 4, c = 2;
  const Tensor q = random_tensor(n * S, c, 7);
  const Tensor k = random_tensor(n * S, c, 8);
  const Tensor v = random_tensor(n * S, c, 9);
  const std::vector<std::uint8_t> valid = {0, 1, 1, 1, 0, 0, 0, 1, 1, 1, 1, 1};
  check_grad([&] { return probe(ops::block_matmul_nt(q, k, S)); }, {q, k});
  check_grad([&] { return probe(ops::block_matmul(ops::block_softmax(ops::block_matmul_nt(q, k, S), S), v, S)); },
             {q, k, v});
  check_grad([&] { return probe(ops::block_softmax(ops::block_matmul_nt(q, k, S), S, valid)); }, {q, k});
  check_grad([&] { return probe(ops::segment_sum(v, S, valid)); }, {v});
  const Tensor x0 = random_tensor(3, 2, 10);
  const Tensor x1 = random_tensor(3, 2, 11);
  check_grad([&] { return probe(ops::interleave({x0, x1})); }, {x0, x1});
}

TEST_CASE("masked softmax ignores invalid keys and zeroes empty rows") {
  const Tensor scores = Tensor::from(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
  const std::vector<std::uint8_t> valid = {0, 1, 0, 0};
  const Tensor p = ops::block_softmax(scores, 2, valid);
  CHECK(p.at(0, 0) == 0.0);
  CHECK(p.at(0, 1) == 1.0);
  CHECK(p.at(2, 0) == 0.0);
  CHECK(p.at(3, 1) == 0.0);
}

TEST_CASE("interleave orders rows sequence-major") {
  const Tensor a = Tensor::from(2, 1, {1, 2});
  const Tensor b = Tensor::from(2, 1, {3, 4});
  const Tensor s = ops::interleave({a, b});
  CHECK(std::vector<double>(s.data().begin(), s.data().end()) == std::vector<double>{1, 3, 2, 4});
}

TEST_CASE("dropout is the identity in eval mode and unbiased in train mode") {
  const Tensor a = Tensor::from(1, 20000, std::vector<double>(20000, 1.0));
  const Tensor e = ops::dropout(a, 0.5, 1, Mode::kEval);
  CHECK(ops::sum(e).item() == 20000.0);
  const Tensor t = ops::dropout(a, 0.5, 1, Mode::kTrain);
  CHECK(ops::sum(t).item() / 20000.0 == doctest::Approx(1.0).epsilon(0.03));
  const Tensor t2 = ops::dropout(a, 0.5, 1, Mode::kTrain);
  CHECK(std::equal(t.data().begin(), t.data().end(), t2.data().begin()));
}

TEST_CASE("backward accumulates through shared subexpressions") {
  const Tensor x = Tensor::from(1, 1, {3.0}, true);
  const Tensor y = ops::mul(x, x);  // x^2
  const Tensor z = ops::add(y, y);  // 2x^2
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("detach blocks gradients") {
  const Tensor x = Tensor::from(1, 1, {2.0}, true);
  const Tensor y = ops::mul(ops::detach(x), x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const Tensor a = random_tensor(3, 5, 12);
  const Tensor b = random_tensor(1, 1, 13);
  const auto stem = std::filesystem::temp_directory_path() / "seqrec_test_ckpt";
  save_checkpoint(stem, {{"a", a}, {"b/x", b}}, {{"note", "x"}});
  const auto back = load_checkpoint_tensors(stem);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[1].name == "b/x");
  CHECK(back[0].tensor.rows() == 3);
  CHECK(std::equal(a.data().begin(), a.data().end(), back[0].tensor.data().begin()));
  CHECK(load_checkpoint_manifest(stem)["note"] == "x");
  std::filesystem::remove(stem.string() + ".bin");
  CHECK_THROWS_AS(load_checkpoint_tensors(stem), DataError);
}
