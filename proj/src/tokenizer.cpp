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

#include "mt/tokenizer.hpp"

#include "mt/text.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mt {
namespace {

constexpr std::string_view kReplacement = "\xEF\xBF\xBD";

// Splits normalized text into words; all but the first keep their leading space.
std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ' ') {
      if (i > start) words.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  return words;
}

std::string escape_piece(std::string_view piece) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (char ch : piece) {
    const auto c = static_cast<unsigned char>(ch);
    if (c > 0x20 && c < 0x7F && c != '\\') {
      out.push_back(ch);
    } else {
      out += "\\x";
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

int hex_value(char ch) {
  if (ch >= '0' && ch <= '9') return ch - '0';
  if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
  if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
  return -1;
}

std::string unescape_piece(std::string_view text, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out.push_back(text[i]);
      continue;
    }
    if (i + 3 >= text.size() || text[i + 1] != 'x') {
      throw FormatError("vocabulary line " + std::to_string(line) + ": bad escape");
    }
    const int hi = hex_value(text[i + 2]), lo = hex_value(text[i + 3]);
    if (hi < 0 || lo < 0) throw FormatError("vocabulary line " + std::to_string(line) + ": bad escape");
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 3;
  }
  return out;
}

}  // namespace

TokenId Vocabulary::sentinel(int i) const {
  if (i < 0 || i >= num_sentinels_) {
    throw ContractError("sentinel index " + std::to_string(i) + " outside [0," + std::to_string(num_sentinels_) + ")");
  }
  return size() - 1 - i;
}

Vocabulary Vocabulary::build(std::vector<unsigned char> alphabet,
                             const std::vector<std::pair<std::string, std::string>>& merge_pieces,
                             int num_sentinels, TokenId total_size) {
  Vocabulary v;
  v.num_sentinels_ = num_sentinels;
  v.alphabet_ = std::move(alphabet);
  v.byte_ids_.fill(-1);
  v.pieces_ = {"", "", ""};
  std::unordered_map<std::string, TokenId> by_piece;
  for (unsigned char b : v.alphabet_) {
    const auto id = static_cast<TokenId>(v.pieces_.size());
    v.byte_ids_[b] = id;
    v.pieces_.emplace_back(1, static_cast<char>(b));
    by_piece.emplace(v.pieces_.back(), id);
  }
  for (std::size_t rank = 0; rank < merge_pieces.size(); ++rank) {
    const auto& [l, r] = merge_pieces[rank];
    const auto li = by_piece.find(l), ri = by_piece.find(r);
    if (li == by_piece.end() || ri == by_piece.end()) {
      throw FormatError("merge " + std::to_string(rank) + " refers to an unknown piece");
    }
    std::string joined = l + r;
    auto [it, inserted] = by_piece.emplace(joined, static_cast<TokenId>(v.pieces_.size()));
    if (inserted) v.pieces_.push_back(std::move(joined));
    const std::pair<TokenId, TokenId> key{li->second, ri->second};
    v.merges_.push_back(key);
    v.merge_rank_.emplace(key, std::make_pair(rank, it->second));
  }
  // Ids left over when merging stopped early stay unused (they decode to "").
  const auto base = static_cast<std::size_t>(total_size - num_sentinels);
  if (v.pieces_.size() > base) {
    throw FormatError("vocabulary: " + std::to_string(v.pieces_.size()) + " pieces do not fit in " +
                      std::to_string(total_size) + " ids");
  }
  v.pieces_.resize(base + static_cast<std::size_t>(num_sentinels));
  for (int i = 0; i < num_sentinels; ++i) {
    v.pieces_[v.pieces_.size() - 1 - static_cast<std::size_t>(i)] = "<extra_id_" + std::to_string(i) + ">";
  }
  return v;
}

Vocabulary train_vocab(std::span<const std::string> corpus, int vocab_size, int num_sentinels) {
  if (corpus.empty()) throw ContractError("train_vocab: corpus is empty");
  if (num_sentinels < 0) throw ContractError("train_vocab: negative sentinel count");

  std::map<std::string, std::int64_t> word_freq;
  std::set<unsigned char> seen;
  for (const auto& doc : corpus) {
    const std::string norm = normalize_text(doc);
    for (auto w : split_words(norm)) {
      ++word_freq[std::string(w)];
      for (char ch : w) seen.insert(static_cast<unsigned char>(ch));
    }
  }
  std::vector<unsigned char> alphabet(seen.begin(), seen.end());
  const long long floor = static_cast<long long>(alphabet.size()) + num_sentinels + Vocabulary::kNumSpecials;
  if (vocab_size < floor) {
    throw ContractError("train_vocab: vocab_size " + std::to_string(vocab_size) + " below minimum " +
                        std::to_string(floor) + " (alphabet + sentinels + specials)");
  }

  // Working symbols are indices into `pieces`.
  std::vector<std::string> pieces;
  std::unordered_map<std::string, int> piece_index;
  std::array<int, 256> byte_sym{};
  for (unsigned char b : alphabet) {
    byte_sym[b] = static_cast<int>(pieces.size());
    piece_index.emplace(std::string(1, static_cast<char>(b)), static_cast<int>(pieces.size()));
    pieces.emplace_back(1, static_cast<char>(b));
  }
  struct Word {
    std::vector<int> syms;
    std::int64_t freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    Word word{{}, f};
    for (char ch : w) word.syms.push_back(byte_sym[static_cast<unsigned char>(ch)]);
    words.push_back(std::move(word));
  }

  std::vector<std::pair<std::string, std::string>> merges;
  long long budget = vocab_size - floor;
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  while (budget > 0) {
    counts.clear();
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
        const auto key = (static_cast<std::uint64_t>(w.syms[i]) << 32) | static_cast<std::uint32_t>(w.syms[i + 1]);
        counts[key] += w.freq;
      }
    }
    std::int64_t best_count = 0;
    int best_l = -1, best_r = -1;
    for (const auto& [key, c] : counts) {
      const int l = static_cast<int>(key >> 32), r = static_cast<int>(key & 0xFFFFFFFFu);
      bool better = c > best_count;
      if (!better && c == best_count && best_l >= 0) {
        better = std::tie(pieces[l], pieces[r]) < std::tie(pieces[best_l], pieces[best_r]);
      }
      if (better) {
        best_count = c;
        best_l = l;
        best_r = r;
      }
    }
    if (best_count < 2) break;

    std::string joined = pieces[best_l] + pieces[best_r];
    merges.emplace_back(pieces[best_l], pieces[best_r]);
    int new_sym;
    if (auto it = piece_index.find(joined); it != piece_index.end()) {
      new_sym = it->second;
    } else {
      new_sym = static_cast<int>(pieces.size());
      piece_index.emplace(joined, new_sym);
      pieces.push_back(std::move(joined));
      --budget;
    }
    for (auto& w : words) {
      if (w.syms.size() < 2) continue;
      std::vector<int> out;
      out.reserve(w.syms.size());
      for (std::size_t i = 0; i < w.syms.size(); ++i) {
        if (i + 1 < w.syms.size() && w.syms[i] == best_l && w.syms[i + 1] == best_r) {
          out.push_back(new_sym);
          ++i;
        } else {
          out.push_back(w.syms[i]);
        }
      }
      w.syms = std::move(out);
    }
  }
  return Vocabulary::build(std::move(alphabet), merges, num_sentinels, vocab_size);
}

void Vocabulary::encode_word(std::string_view word, std::vector<TokenId>& out) const {
  std::vector<TokenId> syms;
  syms.reserve(word.size());
  for (char ch : word) {
    const TokenId id = byte_ids_[static_cast<unsigned char>(ch)];
    syms.push_back(id < 0 ? kUnk : id);
  }
  while (syms.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::pair<TokenId, TokenId> best{};
    TokenId result = -1;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find({syms[i], syms[i + 1]});
      if (it != merge_rank_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best = it->first;
        result = it->second.second;
      }
    }
    if (result < 0) break;
    std::vector<TokenId> next;
    next.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
        next.push_back(result);
        ++i;
      } else {
        next.push_back(syms[i]);
      }
    }
    syms = std::move(next);
  }
  out.insert(out.end(), syms.begin(), syms.end());
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  const std::string norm = normalize_text(text);
  std::vector<TokenId> out;
  for (auto w : split_words(norm)) encode_word(w, out);
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || id >= size()) {
      throw ContractError("decode: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
    }
    if (id == kPad || id == kEos) continue;
    if (id == kUnk) {
      out += kReplacement;
      continue;
    }
    out += pieces_[static_cast<std::size_t>(id)];
  }
  return out;
}

std::string Vocabulary::serialize() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::ostringstream os;
  os << "MTVOCAB 1 " << size() << ' ' << num_sentinels_ << '\n';
  os << "alphabet ";
  for (unsigned char b : alphabet_) os << kHex[b >> 4] << kHex[b & 0xF];
  os << '\n';
  for (const auto& [l, r] : merges_) os << escape_piece(piece(l)) << ' ' << escape_piece(piece(r)) << '\n';
  return os.str();
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line)) throw FormatError("vocabulary: missing header");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  long long size = 0;
  int sentinels = -1;
  if (!(header >> magic >> version >> size >> sentinels) || magic != "MTVOCAB") {
    throw FormatError("vocabulary line 1: expected 'MTVOCAB <version> <size> <sentinels>'");
  }
  if (version != 1) throw FormatError("vocabulary line 1: unsupported version " + std::to_string(version));
  if (!std::getline(is, line) || line.rfind("alphabet ", 0) != 0) {
    throw FormatError("vocabulary line 2: expected 'alphabet <hex>'");
  }
  const std::string hex = line.substr(9);
  if (hex.size() % 2 != 0) throw FormatError("vocabulary line 2: odd-length alphabet");
  std::vector<unsigned char> alphabet;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = hex_value(hex[i]), lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw FormatError("vocabulary line 2: bad hex digit");
    alphabet.push_back(static_cast<unsigned char>(hi * 16 + lo));
  }
  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
      throw FormatError("vocabulary line " + std::to_string(lineno) + ": expected '<left> <right>'");
    }
    merges.emplace_back(unescape_piece(std::string_view(line).substr(0, sp), lineno),
                        unescape_piece(std::string_view(line).substr(sp + 1), lineno));
  }
  if (sentinels < 0 || size < sentinels + Vocabulary::kNumSpecials || size > std::numeric_limits<TokenId>::max()) {
    throw FormatError("vocabulary line 1: inconsistent size " + std::to_string(size));
  }
  return build(std::move(alphabet), merges, sentinels, static_cast<TokenId>(size));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write vocabulary to " + path.string());
  os << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read vocabulary from " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

}  // namespace mt
