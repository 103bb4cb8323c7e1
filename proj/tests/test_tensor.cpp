// Copyright 2026 The Midtrain Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gradcheck.hpp"
#include "mt/autodiff.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mt;
using mt::testing::check_gradients;
using mt::testing::random_tensor;
using mt::testing::weighted_sum;

namespace {

// Plain triple loop, independent of Eigen's GEMM.
std::vector<double> triple_loop(const std::vector<double>& a, const std::vector<double>& b, int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m * n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

double softmax_nll(const std::vector<double>& logits, int target) {
  double z = 0.0;
  for (double v : logits) z += std::exp(v);
  return -std::log(std::exp(logits[static_cast<std::size_t>(target)]) / z);
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape<float> tape;
  auto eye = tape.leaf(Tensor<float>({2, 2}, {1, 0, 0, 1}));
  auto b = tape.leaf(Tensor<float>({2, 2}, {3, 4, 5, 6}));
  CHECK(matmul(eye, b).tensor() == b.tensor());

  auto zeros = tape.leaf(Tensor<float>({2, 3}));
  std::mt19937_64 rng(7);
  auto any = tape.leaf(random_tensor({3, 2}, rng).cast<float>());
  CHECK(matmul(zeros, any).value().isZero());

  const std::vector<double> a{1, 2, 3, 4}, bb{5, 6, 7, 8};
  const auto oracle = triple_loop(a, bb, 2, 2, 2);
  CHECK(oracle == std::vector<double>{19, 22, 43, 50});
  auto got = matmul(tape.leaf(Tensor<float>({2, 2}, {1, 2, 3, 4})), tape.leaf(Tensor<float>({2, 2}, {5, 6, 7, 8})));
  for (Index i = 0; i < 4; ++i) CHECK(got.tensor()[i] == doctest::Approx(oracle[static_cast<std::size_t>(i)]));
}

TEST_CASE("matmul matches the triple loop on random shapes") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 1 + trial % 4, k = 2 + trial % 3, n = 1 + trial % 5;
    auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    Tape<double> tape;
    auto c = matmul(tape.leaf(a), tape.leaf(b));
    const auto oracle = triple_loop({a.data(), a.data() + a.size()}, {b.data(), b.data() + b.size()}, m, k, n);
    for (Index i = 0; i < c.tensor().size(); ++i) CHECK(c.tensor()[i] == doctest::Approx(oracle[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<float> tape;
  auto a = tape.leaf(Tensor<float>({2, 3}));
  auto b = tape.leaf(Tensor<float>({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("and [2x3]") != std::string::npos);
  }
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor<float>({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1, 2, 3}), DimensionError);
  Tensor<float> t({2, 3, 4});
  CHECK(t.rows() == 6);
  CHECK(t.cols() == 4);
  CHECK(t.size() == 24);
}

TEST_CASE("backward of linear and quadratic losses") {
  Tape<float> tape;
  auto w = tape.leaf(Tensor<float>({2, 3}, {1, -2, 3, 0.5f, 7, -1}), true);
  tape.backward(sum(w));
  CHECK(tape.grad(w).values().isOnes());

  Tape<float> t2;
  auto v = t2.leaf(Tensor<float>({2}, {2, -3}), true);
  t2.backward(sum(mul(v, v)));
  CHECK(t2.grad(v)[0] == 4.0f);
  CHECK(t2.grad(v)[1] == -6.0f);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<float> tape;
  auto w = tape.leaf(Tensor<float>({2, 2}), true);
  CHECK_THROWS_AS(tape.backward(w), ContractError);
}

TEST_CASE("fan-out sums path gradients") {
  // f(x) = sum(x ⊙ A) + sum(x ⊙ x ⊙ B): x used three times.
  std::mt19937_64 rng(3);
  const auto x0 = random_tensor({3, 4}, rng), a0 = random_tensor({3, 4}, rng), b0 = random_tensor({3, 4}, rng);
  Tape<double> tape;
  auto x = tape.leaf(x0, true);
  auto a = tape.constant(a0), b = tape.constant(b0);
  tape.backward(add(sum(mul(x, a)), sum(mul(mul(x, x), b))));
  // Duplicated-variable oracle: treat the three uses as separate leaves.
  Tape<double> t2;
  auto x1 = t2.leaf(x0, true), x2 = t2.leaf(x0, true), x3 = t2.leaf(x0, true);
  t2.backward(add(sum(mul(x1, t2.constant(a0))), sum(mul(mul(x2, x3), t2.constant(b0)))));
  const RowMatrix<double> expected = t2.grad(x1).values() + t2.grad(x2).values() + t2.grad(x3).values();
  CHECK((tape.grad(x).values() - expected).norm() < 1e-12);
}

TEST_CASE("cross_entropy examples") {
  Tape<double> tape;
  auto uniform = tape.leaf(Tensor<double>({1, 4}));
  const std::vector<TokenId> t0{2};
  CHECK(cross_entropy(uniform, std::span<const TokenId>(t0), -1).tensor().item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto saturated = tape.leaf(Tensor<double>({1, 4}, {0, 0, 1000, 0}));
  CHECK(cross_entropy(saturated, std::span<const TokenId>(t0), -1).tensor().item() == doctest::Approx(0.0));

  auto l = tape.leaf(Tensor<double>({1, 3}, {1, 2, 3}));
  const double oracle = softmax_nll({1, 2, 3}, 2);
  CHECK(oracle == doctest::Approx(0.40761).epsilon(1e-4));
  CHECK(cross_entropy(l, std::span<const TokenId>(t0), -1).tensor().item() == doctest::Approx(oracle).epsilon(1e-12));

  Tape<float> tf;
  auto lf = tf.leaf(Tensor<float>({1, 3}, {1, 2, 3}));
  CHECK(cross_entropy(lf, std::span<const TokenId>(t0), -1).tensor().item() == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("cross_entropy contract errors") {
  Tape<float> tape;
  auto l = tape.leaf(Tensor<float>({2, 3}));
  const std::vector<TokenId> all_ignored{0, 0}, bad{0, 5}, short_targets{1};
  CHECK_THROWS_AS(cross_entropy(l, std::span<const TokenId>(all_ignored), 0), ContractError);
  CHECK_THROWS_AS(cross_entropy(l, std::span<const TokenId>(bad), -1), ContractError);
  CHECK_THROWS_AS(cross_entropy(l, std::span<const TokenId>(short_targets), -1), DimensionError);
}

TEST_CASE("cross_entropy ignores positions and is permutation-equivariant") {
  std::mt19937_64 rng(5);
  const auto logits = random_tensor({5, 7}, rng, 2.0);
  const std::vector<TokenId> targets{3, 0, 6, 0, 1};
  Tape<double> tape;
  const double loss = cross_entropy(tape.leaf(logits), std::span<const TokenId>(targets), 0).tensor().item();
  double oracle = 0.0;
  int n = 0;
  for (Index r = 0; r < 5; ++r) {
    if (targets[static_cast<std::size_t>(r)] == 0) continue;
    std::vector<double> row(logits.values().row(r).data(), logits.values().row(r).data() + 7);
    oracle += softmax_nll(row, targets[static_cast<std::size_t>(r)]);
    ++n;
  }
  CHECK(loss == doctest::Approx(oracle / n).epsilon(1e-12));

  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    RowMatrix<double> permuted(5, 7);
    for (Index c = 0; c < 7; ++c) permuted.col(perm[static_cast<std::size_t>(c)]) = logits.values().col(c);
    std::vector<TokenId> pt;
    for (TokenId t : targets) pt.push_back(perm[static_cast<std::size_t>(t)]);
    // Ignore id follows the permutation too.
    const TokenId ignore = perm[0];
    Tape<double> t2;
    const double pl = cross_entropy(t2.leaf(Tensor<double>::from_matrix(permuted)), std::span<const TokenId>(pt), ignore).tensor().item();
    CHECK(std::abs(pl - loss) < 1e-6);
  }
}

TEST_CASE("every primitive matches central finite differences") {
  for (const auto& c : mt::testing::primitive_cases()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = mt::testing::check_primitive(c, seed);
      INFO(c.name << " seed " << seed << " rel err " << r.worst_relative_error);
      CHECK(r.worst_relative_error < 1e-3);
    }
  }
}

TEST_CASE("two-layer network matches finite differences") {
  using mt::testing::Fn;
  const std::vector<TokenId> targets{0, 2, 1, 3, 2};
  Fn net = [&](auto&, const auto& v) {
    auto h = gelu(add_row(matmul(v[0], v[1]), v[2]));
    auto logits = add_row(matmul(h, v[3]), v[4]);
    return cross_entropy(logits, std::span<const TokenId>(targets), -1);
  };
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor<double>> inputs{random_tensor({5, 6}, rng), random_tensor({6, 8}, rng, 0.5),
                                       random_tensor({8}, rng), random_tensor({8, 4}, rng, 0.5),
                                       random_tensor({4}, rng)};
    CHECK(check_gradients(net, inputs).worst_relative_error < 1e-3);
  }
}

TEST_CASE("tape order is topological") {
  Tape<float> tape;
  auto a = tape.leaf(Tensor<float>({2, 2}, {1, 2, 3, 4}), true);
  auto b = matmul(a, a);
  auto c = add(b, a);
  CHECK(a.id() < b.id());
  CHECK(b.id() < c.id());
  CHECK(tape.size() == 3);
}
