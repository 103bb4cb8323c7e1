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

#ifndef MT_CORPUS_HPP
#define MT_CORPUS_HPP

#include <cstdint>
#include "mt/tensor.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mt {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One radiology-style report. Findings is the summarization source and
/// Impression the target; both are whitespace-normalized and non-empty.
struct Report {
  std::string id;
  std::optional<std::string> indication;
  std::optional<std::string> comparison;
  std::string findings;
  std::string impression;

  friend bool operator==(const Report&, const Report&) = default;
};

/// Splits sectioned report text on `INDICATION:`, `COMPARISON:`, `FINDINGS:`
/// and `IMPRESSION:` headers (case-insensitive, at line start). Text before
/// the first header is ignored; a repeated header appends to its section.
Report parse_report(std::string_view raw, std::string id = {});

/// Inverse of parse_report for well-formed reports.
std::string render_report(const Report& report);

/// Findings and Impression joined by one space: the raw text used for
/// denoising stages.
std::string midtrain_sequence(const Report& report);

enum class Style { kGeneral, kRadiology };
Style parse_style(std::string_view name);
std::string_view style_name(Style style);

/// Grammar-based synthetic reports, pure in (seed, style, n). Radiology
/// reports are telegraphic with dense negation and an impression that
/// restates the salient abnormal findings in compressed form; general
/// documents use full sentences over a disjoint content vocabulary.
std::vector<Report> synth_corpus(std::uint64_t seed, Style style, std::size_t n);

/// Negation cues the radiology generator draws from.
std::span<const std::string_view> negation_phrases();

/// Content words (lowercase, stop words removed) of a text.
std::vector<std::string> content_words(std::string_view text);

/// Nested few-shot subsets: one seeded shuffle of the report ids, and the
/// first k ids for each k.
struct FewShotPlan {
  std::vector<std::size_t> ks;
  std::uint64_t seed = 0;
  std::map<std::size_t, std::vector<std::string>> selected;

  const std::vector<std::string>& at(std::size_t k) const;
  friend bool operator==(const FewShotPlan&, const FewShotPlan&) = default;
};

FewShotPlan fewshot_subsets(std::span<const Report> train, std::vector<std::size_t> ks, std::uint64_t seed);
/// Reports of `train` selected for k, in plan order.
std::vector<Report> select_reports(std::span<const Report> train, const FewShotPlan& plan, std::size_t k);

/// CSV with header `k,report_id`, one line per selected report.
std::string plan_to_csv(const FewShotPlan& plan);
FewShotPlan plan_from_csv(std::string_view csv);

struct Split {
  std::vector<Report> train, validation, test;
};
/// Seeded shuffle then contiguous train/validation/test cut by ratio.
Split split_reports(std::span<const Report> reports, double train_ratio, double validation_ratio, std::uint64_t seed);

/// JSONL with keys id, findings, impression and optional indication,
/// comparison. Lines that fail to parse raise ParseError with the line number.
std::vector<Report> load_jsonl(const std::filesystem::path& path);
std::vector<Report> parse_jsonl(std::string_view text);
void save_jsonl(const std::filesystem::path& path, std::span<const Report> reports);
std::string to_jsonl(std::span<const Report> reports);

/// Every `*.txt` file in a directory, parsed with parse_report and sorted by
/// file name (the stem becomes the report id).
std::vector<Report> load_txt_dir(const std::filesystem::path& dir);

}  // namespace mt

#endif  // MT_CORPUS_HPP
