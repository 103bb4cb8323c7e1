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

#ifndef MT_TOKENIZER_HPP
#define MT_TOKENIZER_HPP

#include "mt/tensor.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mt {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Byte-pair vocabulary.
///
/// Id layout: 0 pad, 1 eos, 2 unk, then one id per byte of the training
/// alphabet (ascending byte value), then merged tokens in merge order, then
/// the sentinel block at the top: sentinel(i) = size() - 1 - i.
///
/// Text is pre-split on spaces after normalization; every word but the first
/// carries its leading space, so decode(encode(t)) == normalize_text(t).
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr int kNumSpecials = 3;

  Vocabulary() = default;

  TokenId size() const { return static_cast<TokenId>(pieces_.size()); }
  int num_sentinels() const { return num_sentinels_; }
  std::size_t num_merges() const { return merges_.size(); }
  std::size_t alphabet_size() const { return alphabet_.size(); }

  TokenId sentinel(int i) const;
  bool is_sentinel(TokenId id) const { return id >= size() - num_sentinels_ && id < size(); }
  /// pad, eos or sentinel: ids that never come out of encode().
  bool is_reserved(TokenId id) const { return id == kPad || id == kEos || is_sentinel(id); }

  /// Byte string of a non-special, non-sentinel id.
  const std::string& piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  /// Plain-text vocabulary file. Line 1: `MTVOCAB 1 <vocab_size> <num_sentinels>`;
  /// line 2: `alphabet <hex bytes>`; then one merge `<left> <right>` per line
  /// in priority order, with pieces escaped (\xHH for spaces, backslashes and
  /// non-printable bytes).
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.pieces_ == b.pieces_ && a.merges_ == b.merges_ && a.num_sentinels_ == b.num_sentinels_;
  }

 private:
  friend Vocabulary train_vocab(std::span<const std::string> corpus, int vocab_size, int num_sentinels);

  static Vocabulary build(std::vector<unsigned char> alphabet,
                          const std::vector<std::pair<std::string, std::string>>& merge_pieces, int num_sentinels,
                          TokenId total_size);
  void encode_word(std::string_view word, std::vector<TokenId>& out) const;

  std::vector<std::string> pieces_;
  std::vector<unsigned char> alphabet_;
  std::array<TokenId, 256> byte_ids_{};
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::map<std::pair<TokenId, TokenId>, std::pair<std::size_t, TokenId>> merge_rank_;
  int num_sentinels_ = 0;
};

/// Learns merges from `corpus`. Merges stop when the vocabulary reaches
/// `vocab_size` or no adjacent pair occurs twice (remaining ids stay unused,
/// so size() is always `vocab_size`); the most frequent pair wins
/// and ties go to the lexicographically smaller (left, right) byte strings.
Vocabulary train_vocab(std::span<const std::string> corpus, int vocab_size, int num_sentinels);

}  // namespace mt

#endif  // MT_TOKENIZER_HPP
