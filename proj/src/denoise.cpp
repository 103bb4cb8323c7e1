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

#include "mt/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mt {
namespace {

// Random composition of `total` into `parts` positive integers.
std::vector<std::size_t> random_composition(std::size_t total, std::size_t parts, std::mt19937_64& rng) {
  // Choose parts-1 distinct cut points in [1, total-1].
  std::vector<std::size_t> cuts(total - 1);
  std::iota(cuts.begin(), cuts.end(), std::size_t{1});
  for (std::size_t i = 0; i + 1 < parts; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, cuts.size() - 1);
    std::swap(cuts[i], cuts[d(rng)]);
  }
  cuts.resize(parts - 1);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> out;
  std::size_t prev = 0;
  for (std::size_t c : cuts) {
    out.push_back(c - prev);
    prev = c;
  }
  out.push_back(total - prev);
  return out;
}

}  // namespace

TokenId SentinelScheme::sentinel(int i) const {
  if (i < 0 || i >= num_sentinels) {
    throw ContractError("span corruption needs sentinel " + std::to_string(i) + " but only " +
                        std::to_string(num_sentinels) + " are reserved");
  }
  return vocab_size - 1 - i;
}

std::vector<Span> sample_spans(std::size_t length, double rate, double mean_span, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("corrupt: rate must lie in [0, 1)");
  if (!(mean_span >= 1.0)) throw ContractError("corrupt: mean_span must be at least 1");
  if (rate == 0.0 || length < 2) return {};
  auto noise = static_cast<std::size_t>(std::llround(rate * static_cast<double>(length)));
  noise = std::clamp<std::size_t>(noise, 1, length - 1);
  auto spans = static_cast<std::size_t>(std::llround(static_cast<double>(noise) / mean_span));
  spans = std::clamp<std::size_t>(spans, 1, std::min(noise, length - noise));

  const auto noise_lengths = random_composition(noise, spans, rng);
  const auto keep_lengths = random_composition(length - noise, spans, rng);
  std::vector<Span> out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < spans; ++i) {
    pos += keep_lengths[i];
    out.push_back({pos, noise_lengths[i]});
    pos += noise_lengths[i];
  }
  return out;
}

DenoisingExample apply_spans(std::span<const TokenId> tokens, std::vector<Span> spans, const SentinelScheme& scheme) {
  for (TokenId t : tokens) {
    if (t == scheme.pad || t == scheme.eos || scheme.is_sentinel(t)) {
      throw ContractError("corrupt: input already contains reserved id " + std::to_string(t));
    }
  }
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  std::vector<Span> merged;
  for (const Span& s : spans) {
    if (s.length == 0) continue;
    if (s.start + s.length > tokens.size()) throw ContractError("corrupt: span extends past the sequence");
    if (!merged.empty() && s.start <= merged.back().start + merged.back().length) {
      auto& m = merged.back();
      m.length = std::max(m.start + m.length, s.start + s.length) - m.start;
    } else {
      merged.push_back(s);
    }
  }

  DenoisingExample ex;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const TokenId sentinel = scheme.sentinel(static_cast<int>(i));
    ex.input_ids.insert(ex.input_ids.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                        tokens.begin() + static_cast<std::ptrdiff_t>(merged[i].start));
    ex.input_ids.push_back(sentinel);
    ex.target_ids.push_back(sentinel);
    ex.target_ids.insert(ex.target_ids.end(), tokens.begin() + static_cast<std::ptrdiff_t>(merged[i].start),
                         tokens.begin() + static_cast<std::ptrdiff_t>(merged[i].start + merged[i].length));
    pos = merged[i].start + merged[i].length;
  }
  ex.input_ids.insert(ex.input_ids.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos), tokens.end());
  ex.target_ids.push_back(scheme.eos);
  return ex;
}

DenoisingExample corrupt(std::span<const TokenId> tokens, double rate, double mean_span, std::mt19937_64& rng,
                         const SentinelScheme& scheme) {
  if (tokens.empty()) throw ContractError("corrupt: empty token sequence");
  return apply_spans(tokens, sample_spans(tokens.size(), rate, mean_span, rng), scheme);
}

std::vector<TokenId> reconstruct(std::span<const TokenId> input_ids, std::span<const TokenId> target_ids,
                                 const SentinelScheme& scheme) {
  if (target_ids.empty() || target_ids.back() != scheme.eos) {
    throw StructureError("reconstruct: target must end with eos");
  }
  // Target: (sentinel body*)* eos.
  std::vector<std::pair<TokenId, std::span<const TokenId>>> bodies;
  std::size_t i = 0;
  const std::size_t end = target_ids.size() - 1;
  while (i < end) {
    if (!scheme.is_sentinel(target_ids[i])) throw StructureError("reconstruct: target span does not start with a sentinel");
    const TokenId s = target_ids[i];
    std::size_t j = i + 1;
    while (j < end && !scheme.is_sentinel(target_ids[j])) ++j;
    bodies.emplace_back(s, target_ids.subspan(i + 1, j - i - 1));
    i = j;
  }
  std::vector<TokenId> out;
  std::size_t next = 0;
  for (TokenId t : input_ids) {
    if (!scheme.is_sentinel(t)) {
      out.push_back(t);
      continue;
    }
    if (next >= bodies.size() || bodies[next].first != t) {
      throw StructureError("reconstruct: sentinel " + std::to_string(scheme.sentinel_index(t)) +
                           " in input has no matching target span");
    }
    out.insert(out.end(), bodies[next].second.begin(), bodies[next].second.end());
    ++next;
  }
  if (next != bodies.size()) throw StructureError("reconstruct: target has spans without input sentinels");
  return out;
}

}  // namespace mt
