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

// Summary evaluation: ROUGE-L, METEOR-lite, an encoder-embedding similarity
// and lexicon entity F1. All text metrics tokenize with metric_tokens().

#ifndef MT_METRICS_HPP
#define MT_METRICS_HPP

#include "mt/model.hpp"
#include "mt/tokenizer.hpp"

#include <compare>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mt {

struct Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  /// Harmonic mean; f1 is 0 when precision + recall is not positive.
  static Score from_pr(double precision, double recall);
  static Score single(double value) { return {value, value, value}; }

  friend bool operator==(const Score&, const Score&) = default;
};

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

Score rouge_l(std::string_view candidate, std::string_view reference);

/// Suffix stripper used by METEOR-lite: "ing", "ed" (with undoubling of a
/// final double consonant) and a plural "s".
std::string stem(std::string_view word);

/// Exact matches first, then stem matches among the leftovers, each pass
/// aligning a candidate token with the earliest free reference token.
Score meteor_lite(std::string_view candidate, std::string_view reference);

/// BERTScore-style greedy cosine matching over encoder token states. Empty
/// text on either side scores zero.
Score embed_score(std::string_view candidate, std::string_view reference, const ModelParams<float>& encoder,
                  const Vocabulary& vocab);

struct Entity {
  std::string term;
  bool present = true;

  friend auto operator<=>(const Entity&, const Entity&) = default;
};

class EntityLexicon {
 public:
  /// Lines: `term` or `surface form = canonical term`; `#` starts a comment;
  /// lines after `[negation]` are negation cues.
  static EntityLexicon parse(std::string_view text);
  static EntityLexicon load(const std::filesystem::path& path);
  /// The chest radiograph lexicon shipped as data/radiology.lex.
  static const EntityLexicon& radiology();

  struct Term {
    std::vector<std::string> tokens;
    std::string canonical;
  };

  /// Longest first (by token count), then lexicographic. Deduplicated.
  const std::vector<Term>& terms() const { return terms_; }
  const std::vector<std::vector<std::string>>& negations() const { return negations_; }

 private:
  std::vector<Term> terms_;
  std::vector<std::vector<std::string>> negations_;
};

/// Sentence by sentence, longest-match lexicon scan. An entity is negated
/// when a cue ends within the three tokens before it in the same sentence.
std::set<Entity> extract_entities(std::string_view text, const EntityLexicon& lex);

/// Set F1 over (term, polarity). Both sides empty counts as a perfect match.
Score entity_f1(std::string_view candidate, std::string_view reference, const EntityLexicon& lex);

/// F1 of each metric for one example.
struct MetricRecord {
  double rouge_l = 0.0;
  double meteor = 0.0;
  double embed_score = 0.0;
  double entity_f1 = 0.0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct MetricContext {
  const ModelParams<float>* encoder = nullptr;
  const Vocabulary* vocab = nullptr;
  const EntityLexicon* lexicon = &EntityLexicon::radiology();
};

MetricRecord score_example(std::string_view candidate, std::string_view reference, const MetricContext& ctx);

std::vector<MetricRecord> score_corpus(std::span<const std::string> candidates, std::span<const std::string> references,
                                       const MetricContext& ctx);

/// Arithmetic mean per metric. Values are summed in sorted order, so the
/// result does not depend on example order.
MetricRecord mean_scores(std::span<const MetricRecord> records);

}  // namespace mt

#endif  // MT_METRICS_HPP
