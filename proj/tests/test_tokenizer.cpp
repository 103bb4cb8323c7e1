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

#include "mt/corpus.hpp"
#include "mt/text.hpp"
#include "mt/tokenizer.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

using namespace mt;

namespace {

using PiecePair = std::pair<std::string, std::string>;

// Textbook BPE over strings: recount every pair, take the most frequent,
// break ties on the smaller (left, right) strings, stop below two.
std::vector<PiecePair> oracle_merges(const std::vector<std::string>& corpus, std::size_t budget) {
  std::map<std::vector<std::string>, long> words;
  for (const auto& doc : corpus) {
    std::string cur;
    auto flush = [&] {
      if (cur.empty()) return;
      std::vector<std::string> syms;
      for (char c : cur) syms.emplace_back(1, c);
      ++words[syms];
      cur.clear();
    };
    for (char c : doc) {
      if (c == ' ') {
        flush();
        cur = " ";
      } else {
        cur += c;
      }
    }
    flush();
  }
  std::vector<PiecePair> merges;
  std::set<std::string> known;
  for (const auto& [w, f] : words)
    for (const auto& s : w) known.insert(s);
  std::size_t added = 0;
  while (added < budget) {
    std::map<PiecePair, long> counts;
    for (const auto& [w, f] : words)
      for (std::size_t i = 0; i + 1 < w.size(); ++i) counts[{w[i], w[i + 1]}] += f;
    const PiecePair* best = nullptr;
    long best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {  // map order makes the first maximum the smallest pair
        best_count = c;
        best = &pair;
      }
    }
    if (best_count < 2) break;
    const PiecePair chosen = *best;
    merges.push_back(chosen);
    if (known.insert(chosen.first + chosen.second).second) ++added;
    std::map<std::vector<std::string>, long> next;
    for (const auto& [w, f] : words) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == chosen.first && w[i + 1] == chosen.second) {
          out.push_back(chosen.first + chosen.second);
          ++i;
        } else {
          out.push_back(w[i]);
        }
      }
      next[out] += f;
    }
    words = std::move(next);
  }
  return merges;
}

std::vector<PiecePair> merges_as_strings(const Vocabulary& v) {
  std::vector<PiecePair> out;
  for (const auto& [l, r] : v.merges()) out.emplace_back(v.piece(l), v.piece(r));
  return out;
}

std::vector<std::string> corpus_texts(std::size_t n) {
  std::vector<std::string> out;
  for (const auto& r : synth_corpus(3, Style::kRadiology, n)) out.push_back(midtrain_sequence(r));
  for (const auto& r : synth_corpus(3, Style::kGeneral, n)) out.push_back(midtrain_sequence(r));
  return out;
}

}  // namespace

TEST_CASE("first merge on a single repeated byte") {
  const std::vector<std::string> corpus{"aaaa"};
  // Base: one observed byte plus three specials.
  const auto v = train_vocab(corpus, 5, 0);
  REQUIRE(v.num_merges() == 1);
  CHECK(merges_as_strings(v)[0] == PiecePair{"a", "a"});
  CHECK(oracle_merges(corpus, 1)[0] == PiecePair{"a", "a"});
  CHECK(v.encode("aaaa").size() == 2);
}

TEST_CASE("sentinel block sits at the top of the id range") {
  const auto v = train_vocab(corpus_texts(50), 1000, 100);
  CHECK(v.size() == 1000);
  CHECK(v.sentinel(0) == 999);
  CHECK(v.sentinel(99) == 900);
  for (int i = 0; i + 1 < 100; ++i) CHECK(v.sentinel(i) > v.sentinel(i + 1));
  CHECK(v.decode(std::vector<TokenId>{v.sentinel(7)}) == "<extra_id_7>");
  CHECK_THROWS_AS(v.sentinel(100), ContractError);
}

TEST_CASE("merges match the textbook oracle") {
  const std::vector<std::vector<std::string>> corpora{
      {"low lower lowest", "newer wider new low"},
      {"abab abab ab", "ba ba ba abba"},
      corpus_texts(20),
  };
  for (const auto& corpus : corpora) {
    const auto v = train_vocab(corpus, 400, 4);
    const auto alphabet = v.alphabet_size();
    const auto oracle = oracle_merges(corpus, 400 - 4 - 3 - alphabet);
    CHECK(merges_as_strings(v) == oracle);
  }
}

TEST_CASE("training is deterministic") {
  const auto corpus = corpus_texts(40);
  CHECK(train_vocab(corpus, 600, 10) == train_vocab(corpus, 600, 10));
}

TEST_CASE("encode and decode") {
  const auto corpus = corpus_texts(60);
  const auto v = train_vocab(corpus, 800, 20);
  CHECK(v.encode("").empty());
  CHECK(v.decode(v.encode("no acute findings")) == "no acute findings");
  CHECK(v.decode(v.encode("  no   acute\tfindings \n")) == "no acute findings");
  for (const auto& doc : corpus) {
    const auto ids = v.encode(doc);
    CHECK(v.decode(ids) == normalize_text(doc));
    CHECK(ids.size() <= normalize_text(doc).size());
    for (TokenId id : ids) {
      CHECK_FALSE(v.is_reserved(id));
      CHECK(id >= 0);
      CHECK(id < v.size());
    }
  }
  CHECK_THROWS_AS(v.decode(std::vector<TokenId>{v.size()}), ContractError);
  CHECK_THROWS_AS(v.decode(std::vector<TokenId>{-1}), ContractError);
}

TEST_CASE("bytes outside the training alphabet become unk") {
  const std::vector<std::string> corpus{"abc abc", "cab"};
  const auto v = train_vocab(corpus, 20, 2);
  const auto ids = v.encode("abz");
  REQUIRE(ids.size() >= 2);
  CHECK(ids.back() == Vocabulary::kUnk);
  CHECK(v.decode(ids) == "ab\xEF\xBF\xBD");
}

TEST_CASE("NFC normalization is applied before encoding") {
  // "é" precomposed vs e + combining acute.
  const std::vector<std::string> corpus{"caf\xC3\xA9 caf\xC3\xA9"};
  const auto v = train_vocab(corpus, 40, 0);
  CHECK(v.encode("cafe\xCC\x81") == v.encode("caf\xC3\xA9"));
  CHECK(v.decode(v.encode("cafe\xCC\x81")) == "caf\xC3\xA9");
}

TEST_CASE("vocabulary below the floor is rejected") {
  const std::vector<std::string> corpus{"abc"};
  CHECK_THROWS_AS(train_vocab(corpus, 3 + 3 + 2 - 1, 2), ContractError);
  CHECK_NOTHROW(train_vocab(corpus, 3 + 3 + 2, 2));
  CHECK_THROWS_AS(train_vocab(std::vector<std::string>{}, 100, 2), ContractError);
}

TEST_CASE("vocabulary file round-trip") {
  const std::vector<std::string> corpus{"a\\b c\\d a\\b", "tab\there x  y", "caf\xC3\xA9 caf\xC3\xA9"};
  const auto v = train_vocab(corpus, 60, 5);
  const auto text = v.serialize();
  CHECK(text.rfind("MTVOCAB 1 60 5\n", 0) == 0);
  const auto back = Vocabulary::parse(text);
  CHECK(back == v);
  CHECK(back.serialize() == text);

  const auto path = std::filesystem::temp_directory_path() / "mt_vocab_roundtrip.txt";
  v.save(path);
  CHECK(Vocabulary::load(path) == v);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(Vocabulary::parse("MTVOCAB 2 10 0\nalphabet 61\n"), FormatError);
  CHECK_THROWS_AS(Vocabulary::parse("nonsense"), FormatError);
  CHECK_THROWS_AS(Vocabulary::parse("MTVOCAB 1 10 0\nalphabet 61\nb b\n"), FormatError);
  CHECK_THROWS_AS(Vocabulary::parse("MTVOCAB 1 4 0\nalphabet 61\na a\n"), FormatError);
}
