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

#include "mt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace mt {
namespace {

struct Candidate {
  std::vector<TokenId> tokens;
  double logprob;
  TokenId token;
  std::size_t order;  // parent rank * beam + proposal rank
};

// Ids of the k largest entries; ties to the lower id.
std::vector<TokenId> top_k(const std::vector<double>& lp, std::size_t k) {
  std::vector<TokenId> ids(lp.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [&](TokenId a, TokenId b) {
    const double x = lp[static_cast<std::size_t>(a)], y = lp[static_cast<std::size_t>(b)];
    return x != y ? x > y : a < b;
  });
  ids.resize(k);
  return ids;
}

std::vector<TokenId> strip_eos(std::vector<TokenId> tokens, TokenId eos) {
  if (!tokens.empty() && tokens.back() == eos) tokens.pop_back();
  return tokens;
}

}  // namespace

double Hypothesis::score(double length_penalty) const {
  const double len = static_cast<double>(std::max<std::size_t>(tokens.size(), 1));
  return logprob / std::pow(len, length_penalty);
}

Hypothesis greedy_search(const StepScorer& scorer, std::size_t max_len, TokenId eos) {
  Hypothesis h;
  while (h.tokens.size() < max_len) {
    const auto lp = scorer(h.tokens);
    const TokenId best = top_k(lp, 1).front();
    h.tokens.push_back(best);
    h.logprob += lp[static_cast<std::size_t>(best)];
    if (best == eos) break;
  }
  h.finished = true;
  return h;
}

Hypothesis beam_search(const StepScorer& scorer, std::size_t beam_size, std::size_t max_len, double length_penalty,
                       TokenId eos) {
  if (beam_size == 0) throw ContractError("beam_search: beam_size must be at least 1");
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  // Upper bound on the normalized score any extension of a live hypothesis
  // can still reach: log-probabilities only fall, length grows to max_len.
  const auto bound = [&](const Hypothesis& h) {
    return h.logprob / std::pow(static_cast<double>(std::max<std::size_t>(max_len, 1)), length_penalty);
  };
  double best_finished = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    if (length_penalty >= 0.0 && finished.size() >= beam_size &&
        std::all_of(live.begin(), live.end(), [&](const Hypothesis& h) { return bound(h) <= best_finished; })) {
      break;
    }
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto lp = scorer(live[i].tokens);
      const auto proposals = top_k(lp, beam_size);
      for (std::size_t r = 0; r < proposals.size(); ++r) {
        Candidate c{live[i].tokens, live[i].logprob + lp[static_cast<std::size_t>(proposals[r])], proposals[r],
                    i * beam_size + r};
        c.tokens.push_back(proposals[r]);
        candidates.push_back(std::move(c));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.token != b.token) return a.token < b.token;
      return a.order < b.order;
    });
    live.clear();
    for (auto& c : candidates) {
      if (live.size() == beam_size) break;
      Hypothesis h{std::move(c.tokens), c.logprob, false};
      if (h.tokens.back() == eos) {
        h.finished = true;
        best_finished = std::max(best_finished, h.score(length_penalty));
        finished.push_back(std::move(h));
      } else {
        live.push_back(std::move(h));
      }
    }
  }
  for (auto& h : live) {
    h.finished = true;
    finished.push_back(std::move(h));
  }
  // First-best wins ties, so earlier (shorter, higher-ranked) hypotheses stay.
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].score(length_penalty) > finished[best].score(length_penalty)) best = i;
  }
  return finished.at(best);
}

double sequence_logprob(const StepScorer& scorer, std::span<const TokenId> tokens) {
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    total += scorer(tokens.first(i))[static_cast<std::size_t>(tokens[i])];
  }
  return total;
}

StepScorer model_scorer(const ModelParams<float>& params, std::span<const TokenId> src) {
  if (src.empty()) throw ContractError("decode: empty source");
  struct Cache {
    RowMatrix<float> states;
    RowMatrix<float> key_mask;
    bool has_padding;
  };
  auto cache = std::make_shared<Cache>();
  {
    Tape<float> tape;
    BoundParams<float> p(tape, params, false);
    const auto enc = encode(p, src);
    cache->states = enc.states.value();
    cache->key_mask = enc.key_mask.value();
    cache->has_padding = enc.has_padding;
  }
  const ModelParams<float>* pp = &params;
  return [cache, pp](std::span<const TokenId> prefix) {
    Tape<float> tape;
    BoundParams<float> p(tape, *pp, false);
    Encoded<float> enc;
    enc.states = tape.constant(Tensor<float>::from_matrix(cache->states));
    enc.key_mask = tape.constant(Tensor<float>::from_matrix(cache->key_mask));
    enc.has_padding = cache->has_padding;
    enc.length = cache->states.rows();
    std::vector<TokenId> input;
    input.reserve(prefix.size() + 1);
    input.push_back(0);
    input.insert(input.end(), prefix.begin(), prefix.end());
    const auto logits = decode_logits(p, enc, input, true).value();
    const auto row = logits.row(logits.rows() - 1).cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    std::vector<double> out(static_cast<std::size_t>(row.size()));
    for (Index i = 0; i < row.size(); ++i) out[static_cast<std::size_t>(i)] = row(i) - lse;
    return out;
  };
}

std::vector<TokenId> greedy(const ModelParams<float>& params, std::span<const TokenId> src, std::size_t max_len) {
  return strip_eos(greedy_search(model_scorer(params, src), max_len).tokens, 1);
}

std::vector<TokenId> beam(const ModelParams<float>& params, std::span<const TokenId> src, std::size_t beam_size,
                          std::size_t max_len, double length_penalty) {
  if (beam_size == 0) throw ContractError("beam: beam_size must be at least 1");
  return strip_eos(beam_search(model_scorer(params, src), beam_size, max_len, length_penalty).tokens, 1);
}

}  // namespace mt
