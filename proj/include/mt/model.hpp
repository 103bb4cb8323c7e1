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

// T5-style encoder-decoder.
//
//   * shared token embedding, tied to the output layer; decoder states are
//     scaled by d_model^-1/2 before the projection
//   * pre-norm residual blocks with RMS normalization (gain only, eps 1e-6)
//   * attention logits scaled by head_dim^-1/2, plus a learned relative
//     position bias per head (bidirectional buckets in the encoder, causal
//     buckets in the decoder; one table per stack shared by all its layers)
//   * GELU feed-forward blocks without biases
//
// Source pad tokens are masked out as attention keys; decoder self-attention
// is causal.

#ifndef MT_MODEL_HPP
#define MT_MODEL_HPP

#include "mt/autodiff.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mt {

struct ModelConfig {
  TokenId vocab_size = 4096;
  Index d_model = 64;
  Index n_heads = 4;
  Index d_ff = 256;
  Index n_enc_layers = 2;
  Index n_dec_layers = 2;
  Index max_context = 512;
  Index rel_pos_buckets = 32;
  Index rel_pos_max_distance = 128;

  Index head_dim() const { return d_model / n_heads; }
  /// Throws ContractError on an inconsistent configuration.
  void validate() const;

  /// `key=value` lines, the checkpoint's config blob.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Toy preset used for every training run in this repository.
ModelConfig toy_preset(TokenId vocab_size = 4096);
/// Shapes loosely modeled on the 220M / 770M / 3B encoder-decoders. Not
/// published architectures; used for parameter-count checks only.
ModelConfig preset_by_name(std::string_view name);

/// Ordered (name, shape) list of every learnable tensor.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& cfg);
std::int64_t parameter_count(const ModelConfig& cfg);

/// T5 relative-position bucket for `relative = key - query`.
Index relative_position_bucket(Index relative, bool bidirectional, Index num_buckets, Index max_distance);

template <typename Scalar>
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(ModelConfig cfg) : config_(std::move(cfg)) {
    config_.validate();
    for (auto& [name, shape] : parameter_shapes(config_)) {
      index_.emplace(name, names_.size());
      names_.push_back(name);
      tensors_.emplace_back(shape);
    }
  }

  const ModelConfig& config() const { return config_; }
  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const Tensor<Scalar>& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor<Scalar>& operator[](std::size_t i) { return tensors_[i]; }
  std::span<Tensor<Scalar>> tensors() { return tensors_; }
  std::span<const Tensor<Scalar>> tensors() const { return tensors_; }
  const Tensor<Scalar>& at(const std::string& name) const { return tensors_[index_of(name)]; }
  Tensor<Scalar>& at(const std::string& name) { return tensors_[index_of(name)]; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out(config_);
    for (std::size_t i = 0; i < size(); ++i) out[i] = tensors_[i].template cast<Other>();
    return out;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.config_ == b.config_ && a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor<Scalar>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic initialization: embeddings ~ N(0, 1), projection matrices
/// and relative-bias tables ~ N(0, d_model^-1/2), norm gains = 1.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<Scalar> p(cfg);
  std::mt19937_64 rng(seed);
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& name = p.names()[i];
    auto& values = p[i].mutable_values();
    if (name.ends_with("norm")) {
      values.setOnes();
      continue;
    }
    std::normal_distribution<double> dist(0.0, name == "shared.embedding" ? 1.0 : proj_std);
    for (Index k = 0; k < values.size(); ++k) values.data()[k] = static_cast<Scalar>(dist(rng));
  }
  return p;
}

/// Parameters placed on a tape, looked up by name during a forward pass.
template <typename Scalar>
class BoundParams {
 public:
  BoundParams(Tape<Scalar>& tape, const ModelParams<Scalar>& params, bool requires_grad)
      : tape_(&tape), params_(&params) {
    vars_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) vars_.push_back(tape.param(params[i], requires_grad));
  }
  Tape<Scalar>& tape() const { return *tape_; }
  const ModelConfig& config() const { return params_->config(); }
  Var<Scalar> operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }
  const std::vector<Var<Scalar>>& vars() const { return vars_; }

 private:
  Tape<Scalar>* tape_;
  const ModelParams<Scalar>* params_;
  std::vector<Var<Scalar>> vars_;
};

namespace detail {

constexpr double kMasked = -1e9;

inline Eigen::MatrixXi bucket_matrix(Index queries, Index keys, bool bidirectional, const ModelConfig& cfg,
                                     Index query_offset = 0) {
  Eigen::MatrixXi b(queries, keys);
  for (Index i = 0; i < queries; ++i)
    for (Index j = 0; j < keys; ++j)
      b(i, j) = static_cast<int>(relative_position_bucket(j - (i + query_offset), bidirectional, cfg.rel_pos_buckets,
                                                          cfg.rel_pos_max_distance));
  return b;
}

template <typename Scalar>
Var<Scalar> attention(const BoundParams<Scalar>& p, const std::string& prefix, Var<Scalar> queries_in,
                      Var<Scalar> keys_in, const Var<Scalar>* bias_table, const Eigen::MatrixXi* buckets,
                      const Var<Scalar>* mask) {
  const auto& cfg = p.config();
  const Index dh = cfg.head_dim();
  const Scalar inv_sqrt = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
  auto q = matmul(queries_in, p[prefix + ".q"]);
  auto k = matmul(keys_in, p[prefix + ".k"]);
  auto v = matmul(keys_in, p[prefix + ".v"]);
  std::vector<Var<Scalar>> heads;
  heads.reserve(static_cast<std::size_t>(cfg.n_heads));
  for (Index h = 0; h < cfg.n_heads; ++h) {
    auto qh = slice_cols(q, h * dh, dh);
    auto kh = slice_cols(k, h * dh, dh);
    auto vh = slice_cols(v, h * dh, dh);
    auto scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (bias_table) scores = add(scores, gather_bias(*bias_table, *buckets, h));
    if (mask) scores = add(scores, *mask);
    heads.push_back(matmul(softmax_rows(scores), vh));
  }
  auto merged = concat_cols<Scalar>(heads);
  return matmul(merged, p[prefix + ".o"]);
}

template <typename Scalar>
Var<Scalar> feed_forward(const BoundParams<Scalar>& p, const std::string& prefix, Var<Scalar> x) {
  return matmul(gelu(matmul(x, p[prefix + ".wi"])), p[prefix + ".wo"]);
}

template <typename Scalar>
void check_ids(const ModelConfig& cfg, std::span<const TokenId> ids, const char* what) {
  if (ids.empty()) throw ContractError(std::string(what) + " sequence is empty");
  if (static_cast<Index>(ids.size()) > cfg.max_context) {
    throw ContractError(std::string(what) + " length " + std::to_string(ids.size()) + " exceeds max_context " +
                        std::to_string(cfg.max_context));
  }
}

}  // namespace detail

/// Encoder output plus the key mask that cross-attention reuses.
template <typename Scalar>
struct Encoded {
  Var<Scalar> states;
  Var<Scalar> key_mask;  // additive, {1, S}
  bool has_padding = false;
  Index length = 0;
};

template <typename Scalar>
Encoded<Scalar> encode(const BoundParams<Scalar>& p, std::span<const TokenId> src, TokenId pad_id = 0) {
  const auto& cfg = p.config();
  detail::check_ids<Scalar>(cfg, src, "source");
  auto& tape = p.tape();
  const Index n = static_cast<Index>(src.size());

  RowMatrix<Scalar> key_mask = RowMatrix<Scalar>::Zero(1, n);
  bool has_padding = false;
  for (Index j = 0; j < n; ++j) {
    if (src[static_cast<std::size_t>(j)] == pad_id) {
      key_mask(0, j) = static_cast<Scalar>(detail::kMasked);
      has_padding = true;
    }
  }
  Var<Scalar> self_mask;
  if (has_padding) self_mask = tape.constant(Tensor<Scalar>::from_matrix(key_mask.replicate(n, 1)));
  const Eigen::MatrixXi buckets = detail::bucket_matrix(n, n, true, cfg);
  const Var<Scalar> bias = p["encoder.rel_bias"];

  auto x = embedding(p["shared.embedding"], src);
  for (Index l = 0; l < cfg.n_enc_layers; ++l) {
    const std::string pre = "encoder.layer" + std::to_string(l);
    auto h = rms_norm(x, p[pre + ".attn_norm"]);
    x = add(x, detail::attention<Scalar>(p, pre + ".attn", h, h, &bias, &buckets, has_padding ? &self_mask : nullptr));
    h = rms_norm(x, p[pre + ".ff_norm"]);
    x = add(x, detail::feed_forward(p, pre + ".ff", h));
  }
  Encoded<Scalar> out;
  out.states = rms_norm(x, p["encoder.final_norm"]);
  out.key_mask = tape.constant(Tensor<Scalar>::from_matrix(std::move(key_mask)));
  out.has_padding = has_padding;
  out.length = n;
  return out;
}

/// Decoder logits {|tgt_in|, vocab} (or {1, vocab} for the last position only).
template <typename Scalar>
Var<Scalar> decode_logits(const BoundParams<Scalar>& p, const Encoded<Scalar>& enc, std::span<const TokenId> tgt_in,
                          bool last_only = false) {
  const auto& cfg = p.config();
  detail::check_ids<Scalar>(cfg, tgt_in, "target");
  auto& tape = p.tape();
  const Index t = static_cast<Index>(tgt_in.size());

  RowMatrix<Scalar> causal = RowMatrix<Scalar>::Zero(t, t);
  for (Index i = 0; i < t; ++i)
    for (Index j = i + 1; j < t; ++j) causal(i, j) = static_cast<Scalar>(detail::kMasked);
  const auto causal_mask = tape.constant(Tensor<Scalar>::from_matrix(std::move(causal)));
  Var<Scalar> cross_mask;
  if (enc.has_padding) cross_mask = tape.constant(Tensor<Scalar>::from_matrix(enc.key_mask.value().replicate(t, 1)));
  const Eigen::MatrixXi buckets = detail::bucket_matrix(t, t, false, cfg);
  const Var<Scalar> bias = p["decoder.rel_bias"];

  auto y = embedding(p["shared.embedding"], tgt_in);
  for (Index l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string pre = "decoder.layer" + std::to_string(l);
    auto h = rms_norm(y, p[pre + ".self_norm"]);
    y = add(y, detail::attention(p, pre + ".self", h, h, &bias, &buckets, &causal_mask));
    h = rms_norm(y, p[pre + ".cross_norm"]);
    y = add(y, detail::attention<Scalar>(p, pre + ".cross", h, enc.states, nullptr, nullptr,
                                         enc.has_padding ? &cross_mask : nullptr));
    h = rms_norm(y, p[pre + ".ff_norm"]);
    y = add(y, detail::feed_forward(p, pre + ".ff", h));
  }
  y = rms_norm(y, p["decoder.final_norm"]);
  if (last_only && t > 1) y = slice_rows(y, t - 1, 1);
  y = scale(y, static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(cfg.d_model))));
  return matmul_nt(y, p["shared.embedding"]);
}

template <typename Scalar>
Var<Scalar> forward(const BoundParams<Scalar>& p, std::span<const TokenId> src, std::span<const TokenId> tgt_in) {
  return decode_logits(p, encode(p, src), tgt_in);
}

/// Teacher-forcing layout: decoder input = [pad] + tgt, labels = tgt + [eos].
struct ShiftedTarget {
  std::vector<TokenId> decoder_input;
  std::vector<TokenId> labels;
};
ShiftedTarget shift_target(std::span<const TokenId> tgt, TokenId pad_id = 0, TokenId eos_id = 1);

/// Mean token negative log-likelihood of `tgt` given `src`; pad labels ignored.
template <typename Scalar>
Var<Scalar> nll(const BoundParams<Scalar>& p, std::span<const TokenId> src, std::span<const TokenId> tgt) {
  if (tgt.empty()) throw ContractError("nll: empty target");
  const auto shifted = shift_target(tgt);
  auto logits = forward(p, src, shifted.decoder_input);
  return cross_entropy(logits, std::span<const TokenId>(shifted.labels), TokenId{0});
}

/// Forward pass without gradient recording.
template <typename Scalar>
Tensor<Scalar> forward_logits(const ModelParams<Scalar>& params, std::span<const TokenId> src,
                              std::span<const TokenId> tgt_in) {
  Tape<Scalar> tape;
  BoundParams<Scalar> p(tape, params, false);
  return forward(p, src, tgt_in).tensor();
}

template <typename Scalar>
Scalar nll_value(const ModelParams<Scalar>& params, std::span<const TokenId> src, std::span<const TokenId> tgt) {
  Tape<Scalar> tape;
  BoundParams<Scalar> p(tape, params, false);
  return nll(p, src, tgt).tensor().item();
}

/// Final encoder states for `src`, one row per token.
template <typename Scalar>
RowMatrix<Scalar> encoder_states(const ModelParams<Scalar>& params, std::span<const TokenId> src) {
  Tape<Scalar> tape;
  BoundParams<Scalar> p(tape, params, false);
  return encode(p, src).states.value();
}

}  // namespace mt

#endif  // MT_MODEL_HPP
