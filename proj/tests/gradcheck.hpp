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

// Central finite-difference oracle shared by the unit and acceptance suites.
// Everything runs in double; only the tape under test produces the analytic
// side.

#ifndef MT_TESTS_GRADCHECK_HPP
#define MT_TESTS_GRADCHECK_HPP

#include "mt/autodiff.hpp"
#include "mt/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mt::testing {

using Fn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> data(static_cast<std::size_t>(element_count(shape)));
  for (auto& v : data) v = d(rng);
  return Tensor<double>(std::move(shape), std::move(data));
}

inline double evaluate(const Fn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, false));
  return f(tape, vars).tensor().item();
}

struct GradCheck {
  double worst_relative_error = 0.0;
  std::vector<Tensor<double>> analytic;
  std::vector<Tensor<double>> numeric;
};

/// Relative error per input is ||analytic - numeric|| / max(||analytic||,
/// ||numeric||, 1e-12); the worst input is reported.
inline GradCheck check_gradients(const Fn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-3) {
  GradCheck out;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    auto loss = f(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) out.analytic.push_back(tape.grad(v));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double> num(inputs[i].shape());
    for (Index k = 0; k < inputs[i].size(); ++k) {
      auto plus = inputs, minus = inputs;
      plus[i].mutable_values().data()[k] += h;
      minus[i].mutable_values().data()[k] -= h;
      num.mutable_values().data()[k] = (evaluate(f, plus) - evaluate(f, minus)) / (2.0 * h);
    }
    const double diff = (out.analytic[i].values() - num.values()).norm();
    const double denom = std::max({out.analytic[i].values().norm(), num.values().norm(), 1e-12});
    out.worst_relative_error = std::max(out.worst_relative_error, diff / denom);
    out.numeric.push_back(std::move(num));
  }
  return out;
}

/// sum(f(x) ⊙ w) for a fixed random w, so every output element contributes a
/// distinct weight to the gradient.
inline Var<double> weighted_sum(Var<double> y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = y.tape().constant(random_tensor(y.shape(), rng));
  return sum(mul(y, w));
}

struct PrimitiveCase {
  const char* name;
  std::vector<Shape> shapes;
  Fn fn;
};

/// One case per differentiable primitive, each reduced to a scalar.
inline std::vector<PrimitiveCase> primitive_cases() {
  static const std::vector<TokenId> ids{2, 0, 4, 2};
  static const std::vector<TokenId> targets{1, 3, 0, 4};
  static const Eigen::MatrixXi buckets = [] {
    Eigen::MatrixXi b(3, 4);
    b << 0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 0;
    return b;
  }();
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](auto&, const auto& v) { return weighted_sum(matmul(v[0], v[1]), 1); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](auto&, const auto& v) { return weighted_sum(matmul_nt(v[0], v[1]), 2); }},
      {"add", {{3, 4}, {3, 4}}, [](auto&, const auto& v) { return weighted_sum(add(v[0], v[1]), 3); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto&, const auto& v) { return weighted_sum(mul(v[0], v[1]), 4); }},
      {"scale", {{3, 4}}, [](auto&, const auto& v) { return weighted_sum(scale(v[0], 0.37), 5); }},
      {"add_row", {{3, 4}, {4}}, [](auto&, const auto& v) { return weighted_sum(add_row(v[0], v[1]), 6); }},
      {"gelu", {{3, 4}}, [](auto&, const auto& v) { return weighted_sum(gelu(v[0]), 7); }},
      {"rms_norm", {{3, 5}, {5}}, [](auto&, const auto& v) { return weighted_sum(rms_norm(v[0], v[1]), 8); }},
      {"softmax_rows", {{3, 5}}, [](auto&, const auto& v) { return weighted_sum(softmax_rows(v[0]), 9); }},
      {"embedding", {{5, 3}},
       [](auto&, const auto& v) { return weighted_sum(embedding(v[0], std::span<const TokenId>(ids)), 10); }},
      {"gather_bias", {{5, 2}}, [](auto&, const auto& v) { return weighted_sum(gather_bias(v[0], buckets, 1), 11); }},
      {"slice_cols", {{3, 5}}, [](auto&, const auto& v) { return weighted_sum(slice_cols(v[0], 1, 3), 12); }},
      {"slice_rows", {{4, 3}}, [](auto&, const auto& v) { return weighted_sum(slice_rows(v[0], 1, 2), 13); }},
      {"concat_cols", {{3, 2}, {3, 3}},
       [](auto&, const auto& v) {
         std::vector<Var<double>> parts{v[0], v[1], v[0]};
         return weighted_sum(concat_cols<double>(parts), 14);
       }},
      {"cross_entropy", {{4, 5}},
       [](auto&, const auto& v) { return cross_entropy(v[0], std::span<const TokenId>(targets), 0); }},
      {"sum", {{3, 4}}, [](auto&, const auto& v) { return scale(sum(v[0]), 1.5); }},
  };
}

inline GradCheck check_primitive(const PrimitiveCase& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 1000 + 17);
  std::vector<Tensor<double>> inputs;
  for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng));
  return check_gradients(c.fn, inputs);
}

/// Two-layer encoder-decoder small enough for a full finite-difference sweep.
inline ModelConfig gradcheck_model(Index layers = 2) {
  ModelConfig c;
  c.vocab_size = 24;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 12;
  c.n_enc_layers = layers;
  c.n_dec_layers = layers;
  c.rel_pos_buckets = 8;
  c.rel_pos_max_distance = 16;
  return c;
}

struct ModelGradCheck {
  double worst_relative_error = 0.0;
  std::string worst_tensor;
};

/// Full sequence NLL of a random model against central differences, tensor
/// by tensor. The source ends in a pad to exercise the masked path.
inline ModelGradCheck check_model_nll(const ModelConfig& cfg, std::uint64_t seed, double h = 1e-3) {
  auto p = init_params<double>(cfg, seed);
  std::mt19937_64 rng(seed + 100);
  std::uniform_int_distribution<TokenId> d(3, cfg.vocab_size - 1);
  std::vector<TokenId> src(6), tgt(5);
  for (auto& t : src) t = d(rng);
  for (auto& t : tgt) t = d(rng);
  src.push_back(0);

  Tape<double> tape;
  BoundParams<double> bound(tape, p, true);
  tape.backward(nll(bound, src, tgt));
  ModelGradCheck out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const RowMatrix<double> analytic = tape.grad(bound.vars()[i]).values();
    RowMatrix<double> numeric(analytic.rows(), analytic.cols());
    for (Index k = 0; k < analytic.size(); ++k) {
      double& w = p[i].mutable_values().data()[k];
      const double saved = w;
      w = saved + h;
      const double up = nll_value(p, src, tgt);
      w = saved - h;
      const double down = nll_value(p, src, tgt);
      w = saved;
      numeric.data()[k] = (up - down) / (2.0 * h);
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    const double err = (analytic - numeric).norm() / denom;
    if (err > out.worst_relative_error) {
      out.worst_relative_error = err;
      out.worst_tensor = p.names()[i];
    }
  }
  return out;
}

}  // namespace mt::testing

#endif  // MT_TESTS_GRADCHECK_HPP
