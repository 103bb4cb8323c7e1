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

#ifndef MT_TEXT_HPP
#define MT_TEXT_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mt {

/// Collapses every run of ASCII whitespace to one space and trims both ends.
std::string collapse_whitespace(std::string_view text);

/// Unicode NFC followed by collapse_whitespace. Invalid UTF-8 is passed
/// through byte-for-byte.
std::string normalize_text(std::string_view text);

std::string ascii_lower(std::string_view text);

/// Lowercased alphanumeric runs; everything else separates tokens. This is
/// the tokenizer shared by all metrics, independent of the model vocabulary.
std::vector<std::string> metric_tokens(std::string_view text);

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based seed for (seed, a, b, c) so per-example randomness does not
/// depend on processing order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix64(mix64(mix64(mix64(seed) ^ a) ^ b) ^ c);
}

}  // namespace mt

#endif  // MT_TEXT_HPP
