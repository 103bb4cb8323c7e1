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

// Greedy and beam-search generation over an abstract next-token scorer.

#ifndef MT_DECODE_HPP
#define MT_DECODE_HPP

#include "mt/model.hpp"

#include <functional>
#include <span>
#include <vector>

namespace mt {

/// Next-token log-probabilities (one per vocabulary id) given the tokens
/// generated so far.
using StepScorer = std::function<std::vector<double>(std::span<const TokenId> prefix)>;

struct Hypothesis {
  /// Generated tokens, including the final eos when finished by eos.
  std::vector<TokenId> tokens;
  double logprob = 0.0;
  bool finished = false;

  /// logprob / length^penalty; length counts the eos token.
  double score(double length_penalty) const;
};

/// Highest-probability token at each step (ties to the lowest id) until eos
/// or max_len tokens. The returned tokens include eos if it was produced.
Hypothesis greedy_search(const StepScorer& scorer, std::size_t max_len, TokenId eos = 1);

/// Length-normalized beam search. Each live hypothesis proposes its
/// beam_size best tokens; the beam_size best candidates overall survive
/// (ties: lower token id, then earlier parent). Candidates ending in eos move
/// to the finished set and shrink the live beam. Search ends when nothing is
/// live, max_len is reached (live ones then count as finished), or beam_size
/// have finished and no live hypothesis can still beat the best of them.
Hypothesis beam_search(const StepScorer& scorer, std::size_t beam_size, std::size_t max_len, double length_penalty,
                       TokenId eos = 1);

/// Sum of next-token log-probabilities of `tokens` under `scorer`.
double sequence_logprob(const StepScorer& scorer, std::span<const TokenId> tokens);

/// Scorer backed by a model: the encoder runs once, the decoder reruns on
/// [pad] + prefix and only the last position is projected.
StepScorer model_scorer(const ModelParams<float>& params, std::span<const TokenId> src);

/// Model-level entry points. Returned ids exclude the trailing eos.
std::vector<TokenId> greedy(const ModelParams<float>& params, std::span<const TokenId> src, std::size_t max_len = 128);
std::vector<TokenId> beam(const ModelParams<float>& params, std::span<const TokenId> src, std::size_t beam_size = 4,
                          std::size_t max_len = 128, double length_penalty = 1.0);

}  // namespace mt

#endif  // MT_DECODE_HPP
