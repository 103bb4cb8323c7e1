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

#ifndef MT_DENOISE_HPP
#define MT_DENOISE_HPP

#include "mt/tensor.hpp"

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace mt {

class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Where the reserved ids live: sentinel(i) = vocab_size - 1 - i.
struct SentinelScheme {
  TokenId vocab_size = 0;
  int num_sentinels = 0;
  TokenId pad = 0;
  TokenId eos = 1;

  TokenId sentinel(int i) const;
  bool is_sentinel(TokenId id) const { return id >= vocab_size - num_sentinels && id < vocab_size; }
  int sentinel_index(TokenId id) const { return vocab_size - 1 - id; }
};

/// Half-open token range [start, start + length).
struct Span {
  std::size_t start = 0;
  std::size_t length = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

struct DenoisingExample {
  std::vector<TokenId> input_ids;
  std::vector<TokenId> target_ids;
  friend bool operator==(const DenoisingExample&, const DenoisingExample&) = default;
};

/// Noise layout for a sequence of `length` tokens. round(rate·length) tokens
/// are corrupted (at least one when rate > 0 and length ≥ 2, at most
/// length − 1) across round(noise / mean_span) spans. Span lengths and the
/// gaps between spans are random positive compositions, so spans never touch
/// and the layout always starts with an uncorrupted token.
std::vector<Span> sample_spans(std::size_t length, double rate, double mean_span, std::mt19937_64& rng);

/// Replaces each span with the next sentinel and moves its tokens to the
/// target behind the same sentinel; target ends with eos. Overlapping or
/// touching spans are merged first.
DenoisingExample apply_spans(std::span<const TokenId> tokens, std::vector<Span> spans, const SentinelScheme& scheme);

DenoisingExample corrupt(std::span<const TokenId> tokens, double rate, double mean_span, std::mt19937_64& rng,
                         const SentinelScheme& scheme);

/// Splices each target span back at its sentinel. Throws StructureError when
/// the sentinel sequences of input and target differ.
std::vector<TokenId> reconstruct(std::span<const TokenId> input_ids, std::span<const TokenId> target_ids,
                                 const SentinelScheme& scheme);

}  // namespace mt

#endif  // MT_DENOISE_HPP
