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

#include "mt/metrics.hpp"

#include "mt/radiology_lex.hpp"
#include "mt/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mt {

Score Score::from_pr(double precision, double recall) {
  const double sum = precision + recall;
  return {precision, recall, sum > 0.0 ? 2.0 * precision * recall / sum : 0.0};
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Score rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = metric_tokens(candidate);
  const auto r = metric_tokens(reference);
  if (c.empty() || r.empty()) return {};
  const auto l = static_cast<double>(lcs_length(c, r));
  return Score::from_pr(l / static_cast<double>(c.size()), l / static_cast<double>(r.size()));
}

// ------------------------------------------------------------ METEOR-lite

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

std::string undouble(std::string s) {
  const auto n = s.size();
  if (n >= 2 && s[n - 1] == s[n - 2] && !is_vowel(s[n - 1]) && s[n - 1] != 'l' && s[n - 1] != 's' &&
      s[n - 1] != 'z') {
    s.pop_back();
  }
  return s;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string stem(std::string_view word) {
  std::string w(word);
  if (w.size() > 4 && ends_with(w, "ing")) return undouble(w.substr(0, w.size() - 3));
  if (w.size() > 3 && ends_with(w, "ed")) return undouble(w.substr(0, w.size() - 2));
  if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss")) return w.substr(0, w.size() - 1);
  return w;
}

Score meteor_lite(std::string_view candidate, std::string_view reference) {
  const auto c = metric_tokens(candidate);
  const auto r = metric_tokens(reference);
  if (c.empty() || r.empty()) return {};
  constexpr std::size_t kFree = static_cast<std::size_t>(-1);
  std::vector<std::size_t> align(c.size(), kFree);
  std::vector<bool> taken(r.size(), false);
  const auto pass = [&](auto&& key) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (align[i] != kFree) continue;
      const auto ki = key(c[i]);
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (!taken[j] && key(r[j]) == ki) {
          align[i] = j;
          taken[j] = true;
          break;
        }
      }
    }
  };
  pass([](const std::string& w) { return w; });
  pass([](const std::string& w) { return stem(w); });

  std::size_t matches = 0, chunks = 0;
  std::size_t last_i = kFree, last_j = kFree;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (align[i] == kFree) continue;
    ++matches;
    if (last_i == kFree || last_i + 1 != i || last_j + 1 != align[i]) ++chunks;
    last_i = i;
    last_j = align[i];
  }
  if (matches == 0) return {};
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(c.size());
  const double rc = m / static_cast<double>(r.size());
  const double fmean = 10.0 * p * rc / (rc + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
  return Score::single(fmean * (1.0 - penalty));
}

// ------------------------------------------------------------ embed score

namespace {

// Unit-length encoder states, one row per token, in double.
RowMatrix<double> unit_states(std::string_view text, const ModelParams<float>& encoder, const Vocabulary& vocab) {
  const auto ids = vocab.encode(text);
  if (ids.empty()) return {};
  if (static_cast<Index>(ids.size()) > encoder.config().max_context) {
    throw ContractError("embed_score: text of " + std::to_string(ids.size()) + " tokens exceeds max_context");
  }
  RowMatrix<double> s = encoder_states(encoder, ids).cast<double>();
  for (Index i = 0; i < s.rows(); ++i) {
    const double n = s.row(i).norm();
    if (n > 0.0) s.row(i) /= n;
  }
  return s;
}

// Mean over rows of `a` of the best cosine against any row of `b`. The dot
// products are plain loops so swapping the arguments is bit-for-bit exact.
double mean_best(const RowMatrix<double>& a, const RowMatrix<double>& b) {
  double total = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < b.rows(); ++j) {
      double dot = 0.0;
      for (Index k = 0; k < a.cols(); ++k) dot += a(i, k) * b(j, k);
      best = std::max(best, dot);
    }
    total += best;
  }
  return total / static_cast<double>(a.rows());
}

}  // namespace

Score embed_score(std::string_view candidate, std::string_view reference, const ModelParams<float>& encoder,
                  const Vocabulary& vocab) {
  const auto c = unit_states(candidate, encoder, vocab);
  const auto r = unit_states(reference, encoder, vocab);
  if (c.rows() == 0 || r.rows() == 0) return {};
  return Score::from_pr(mean_best(c, r), mean_best(r, c));
}

// --------------------------------------------------------------- entities

EntityLexicon EntityLexicon::parse(std::string_view text) {
  EntityLexicon lex;
  std::set<std::vector<std::string>> seen_terms, seen_cues;
  bool in_negation = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = collapse_whitespace(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (ascii_lower(line) != "[negation]") throw FormatError("lexicon: unknown section " + line);
      in_negation = true;
      continue;
    }
    std::string surface = line, canonical;
    if (const auto eq = line.find('='); eq != std::string::npos) {
      surface = line.substr(0, eq);
      canonical = line.substr(eq + 1);
    }
    auto tokens = metric_tokens(surface);
    if (tokens.empty()) throw FormatError("lexicon: no term on line '" + line + "'");
    if (in_negation) {
      if (seen_cues.insert(tokens).second) lex.negations_.push_back(std::move(tokens));
      continue;
    }
    auto canon_tokens = metric_tokens(canonical.empty() ? surface : canonical);
    if (canon_tokens.empty()) throw FormatError("lexicon: empty canonical term on line '" + line + "'");
    std::string canon;
    for (const auto& t : canon_tokens) canon += (canon.empty() ? "" : " ") + t;
    if (seen_terms.insert(tokens).second) lex.terms_.push_back({std::move(tokens), std::move(canon)});
  }
  std::stable_sort(lex.terms_.begin(), lex.terms_.end(), [](const Term& a, const Term& b) {
    return a.tokens.size() != b.tokens.size() ? a.tokens.size() > b.tokens.size() : a.tokens < b.tokens;
  });
  return lex;
}

EntityLexicon EntityLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("lexicon: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const EntityLexicon& EntityLexicon::radiology() {
  static const EntityLexicon lex = parse(detail::kRadiologyLexicon);
  return lex;
}

namespace {

bool matches_at(const std::vector<std::string>& tokens, std::size_t at, const std::vector<std::string>& phrase) {
  if (at + phrase.size() > tokens.size()) return false;
  return std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(at));
}

std::vector<std::string_view> sentences(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '.' || text[i] == ';' || text[i] == '!' || text[i] == '?' ||
        text[i] == '\n') {
      if (i > start) out.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

constexpr std::size_t kNegationWindow = 3;

}  // namespace

std::set<Entity> extract_entities(std::string_view text, const EntityLexicon& lex) {
  std::set<Entity> out;
  for (const auto sentence : sentences(text)) {
    const auto tokens = metric_tokens(sentence);
    // Token index one past the end of every negation cue.
    std::vector<std::size_t> cue_ends;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      for (const auto& cue : lex.negations()) {
        if (matches_at(tokens, i, cue)) cue_ends.push_back(i + cue.size());
      }
    }
    for (std::size_t i = 0; i < tokens.size();) {
      const EntityLexicon::Term* hit = nullptr;
      for (const auto& term : lex.terms()) {
        if (matches_at(tokens, i, term.tokens)) {
          hit = &term;
          break;
        }
      }
      if (hit == nullptr) {
        ++i;
        continue;
      }
      const bool negated = std::any_of(cue_ends.begin(), cue_ends.end(), [&](std::size_t end) {
        return end <= i && end + kNegationWindow > i;
      });
      out.insert({hit->canonical, !negated});
      i += hit->tokens.size();
    }
  }
  return out;
}

Score entity_f1(std::string_view candidate, std::string_view reference, const EntityLexicon& lex) {
  const auto c = extract_entities(candidate, lex);
  const auto r = extract_entities(reference, lex);
  if (c.empty() && r.empty()) return Score::single(1.0);
  if (c.empty() || r.empty()) return {};
  std::size_t common = 0;
  for (const auto& e : c) common += r.count(e);
  return Score::from_pr(static_cast<double>(common) / static_cast<double>(c.size()),
                        static_cast<double>(common) / static_cast<double>(r.size()));
}

// ------------------------------------------------------------ aggregation

MetricRecord score_example(std::string_view candidate, std::string_view reference, const MetricContext& ctx) {
  if (ctx.encoder == nullptr || ctx.vocab == nullptr || ctx.lexicon == nullptr) {
    throw ContractError("score_example: metric context needs an encoder, a vocabulary and a lexicon");
  }
  return {rouge_l(candidate, reference).f1, meteor_lite(candidate, reference).f1,
          embed_score(candidate, reference, *ctx.encoder, *ctx.vocab).f1,
          entity_f1(candidate, reference, *ctx.lexicon).f1};
}

std::vector<MetricRecord> score_corpus(std::span<const std::string> candidates, std::span<const std::string> references,
                                       const MetricContext& ctx) {
  if (candidates.size() != references.size()) {
    throw ContractError("score_corpus: " + std::to_string(candidates.size()) + " candidates for " +
                        std::to_string(references.size()) + " references");
  }
  std::vector<MetricRecord> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back(score_example(candidates[i], references[i], ctx));
  return out;
}

MetricRecord mean_scores(std::span<const MetricRecord> records) {
  if (records.empty()) return {};
  const auto mean = [&](double MetricRecord::*field) {
    std::vector<double> v;
    v.reserve(records.size());
    for (const auto& r : records) v.push_back(r.*field);
    std::sort(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) total += x;
    return total / static_cast<double>(v.size());
  };
  return {mean(&MetricRecord::rouge_l), mean(&MetricRecord::meteor), mean(&MetricRecord::embed_score),
          mean(&MetricRecord::entity_f1)};
}

}  // namespace mt
