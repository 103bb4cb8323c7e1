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

// Strategy comparison and few-shot sweeps on top of the training stack,
// plus the record files, tables and curves they produce.

#ifndef MT_EXPERIMENT_HPP
#define MT_EXPERIMENT_HPP

#include "mt/corpus.hpp"
#include "mt/metrics.hpp"
#include "mt/train.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adaptation strategies. Each chain extends the previous one:
/// general = [general pretrain], clinical = general + [clinical pretrain],
/// midtrain = clinical + [radiology midtrain].
enum class Strategy { kGeneral, kClinical, kMidtrain };

std::string_view strategy_name(Strategy s);
/// Accepts "general", "clinical", "midtrain" and the long forms
/// "general-only", "+clinical-pretrain", "+midtrain".
Strategy parse_strategy(std::string_view name);
/// Stage kinds the strategy runs before fine-tuning, in order.
std::vector<StageKind> strategy_chain(Strategy s);

/// Stage kinds of a checkpoint with consecutive repeats merged, so the
/// general and clinical pretraining runs read as one "pretrain" entry.
std::vector<std::string> collapsed_provenance(std::span<const std::string> provenance);

/// Synthetic corpora are seeded from the experiment seed.
struct CorpusSettings {
  std::size_t general_docs = 600;
  /// Clinical pretraining text: general documents plus radiology Findings
  /// drawn from a pool disjoint from the midtrain and fine-tune reports.
  std::size_t clinical_docs = 600;
  double clinical_radiology_share = 0.5;
  std::size_t midtrain_reports = 600;
  std::size_t finetune_reports = 300;
  /// Optional user corpora replacing the synthetic ones: plain text with one
  /// document per line for pretraining, report JSONL for the rest.
  std::optional<std::filesystem::path> general_text, clinical_text, midtrain_jsonl, finetune_jsonl;
  double train_ratio = 0.8;
  double validation_ratio = 0.1;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  CorpusSettings corpus;
  int vocab_size = 1024;
  int num_sentinels = 100;
  std::string preset = "toy";
  std::vector<Strategy> strategies{Strategy::kGeneral, Strategy::kClinical, Strategy::kMidtrain};
  StageConfig general_stage;
  StageConfig clinical_stage;
  StageConfig midtrain_stage;
  StageConfig finetune_stage;
  std::vector<std::size_t> ks{5, 10, 20, 50, 100, 200};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t beam_size = 4;
  std::size_t max_decode_len = 128;
  double length_penalty = 1.0;
  /// Test reports scored per run; 0 scores the whole test split.
  std::size_t eval_limit = 0;
  std::filesystem::path out_dir = "out";

  /// Defaults for the toy experiment (scaled learning rates, see README).
  static ExperimentConfig toy();
  /// Throws ConfigError.
  void validate() const;
};

/// INI text with [section] headers. Unknown keys are errors; missing keys
/// keep their toy() defaults.
ExperimentConfig parse_config(std::string_view ini);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_ini(const ExperimentConfig& cfg);

struct Corpora {
  std::vector<std::string> general, clinical, midtrain;
  Split finetune;
};

Corpora build_corpora(const ExperimentConfig& cfg);
/// Trained on the union of the three pretraining corpora.
Vocabulary build_vocab(const ExperimentConfig& cfg, const Corpora& corpora);
ModelConfig model_config(const ExperimentConfig& cfg, const Vocabulary& vocab);

/// One scored fine-tuning run. k is empty for a run on the full train split.
struct RunRecord {
  std::string strategy;
  std::string preset;
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;
  MetricRecord scores;
  /// Display name (fixture rows only; not part of records.csv).
  std::string model;

  std::string k_label() const { return k ? std::to_string(*k) : "full"; }
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline constexpr std::string_view kRecordsHeader = "strategy,preset,k,seed,rouge_l,meteor,embed_score,entity_f1";

std::string records_to_csv(std::span<const RunRecord> records);
std::vector<RunRecord> records_from_csv(std::string_view csv);
void save_records(const std::filesystem::path& path, std::span<const RunRecord> records);
std::vector<RunRecord> load_records(const std::filesystem::path& path);

struct Summary {
  std::string id, generated, reference;
};
std::string summaries_to_jsonl(std::span<const Summary> summaries);

/// Artifacts cache under cfg.out_dir: corpora are rebuilt on demand, the
/// vocabulary and pre-finetune checkpoints are loaded when present and
/// trained (then saved) otherwise.
class Workspace {
 public:
  explicit Workspace(ExperimentConfig cfg, std::function<void(const std::string&)> log = {});

  const ExperimentConfig& config() const { return cfg_; }
  const Corpora& corpora();
  const Vocabulary& vocab();
  /// Checkpoint after the strategy's chain (before fine-tuning).
  const Checkpoint& pretrained(Strategy s);
  /// Encoder used by embed_score: the general pretrain checkpoint, shared by
  /// every strategy so scores stay comparable.
  const ModelParams<float>& scoring_encoder();

  std::filesystem::path checkpoint_path(Strategy s) const;
  /// Full-split fine-tune outputs; the seed suffix appears only with
  /// several seeds.
  std::filesystem::path finetuned_path(Strategy s, std::uint64_t seed) const;
  std::filesystem::path summaries_path(Strategy s, std::uint64_t seed) const;

  /// Fine-tunes from the strategy's checkpoint on `train` with `seed`.
  Checkpoint finetune(Strategy s, std::span<const Report> train, std::uint64_t seed);
  /// Beam decodes the (eval_limit-capped) test split and scores it.
  std::pair<MetricRecord, std::vector<Summary>> evaluate(const ModelParams<float>& params);
  std::span<const Report> test_reports();

  void log(const std::string& message) const;

 private:
  ExperimentConfig cfg_;
  std::function<void(const std::string&)> log_;
  std::optional<Corpora> corpora_;
  std::optional<Vocabulary> vocab_;
  std::map<Strategy, Checkpoint> checkpoints_;
};

/// Fine-tunes every (strategy, seed) on the full train split and saves the
/// checkpoints at finetuned_path().
void finetune_full(Workspace& ws);
/// Scores the checkpoints written by finetune_full. Writes records.csv and
/// the summaries files.
std::vector<RunRecord> evaluate_finetuned(Workspace& ws);

/// For each strategy: chain, fine-tune on the full train split, decode the
/// test split, score. Writes records.csv, summaries_<strategy>.jsonl and the
/// fine-tuned checkpoints.
std::vector<RunRecord> run_pipeline(Workspace& ws);

/// Every (strategy, k, seed) cell fine-tunes on the nested few-shot subset
/// of size k chosen with that seed. Writes sweep/records.csv and the subset
/// plans under sweep/plans.
std::vector<RunRecord> sweep_fewshot(Workspace& ws);

// ----------------------------------------------------------------- render

/// Seed-aggregated cell of a results table.
struct TableRow {
  std::string model;
  std::string size;
  std::string strategy;
  std::string k;
  MetricRecord mean;
  std::size_t runs = 0;

  friend bool operator==(const TableRow&, const TableRow&) = default;
};

/// Mean over seeds per (size, strategy, k), sorted by model size (numeric
/// when the label parses as 0.2B / 220M / 220000), then strategy chain
/// length, then k.
std::vector<TableRow> aggregate(std::span<const RunRecord> records);

/// Markdown table; the best value per metric within each size is bold.
std::string render_table(std::span<const RunRecord> records);
std::string render_table_csv(std::span<const RunRecord> records);
std::vector<TableRow> parse_table_csv(std::string_view csv);

/// Published Table II rows (data/table2.csv) as records with k = full.
std::vector<RunRecord> load_table2(const std::filesystem::path& path);

struct AnchorPoint {
  std::string model, size, strategy;
  std::size_t k;
  double rouge_l;
};
std::vector<AnchorPoint> load_anchors(const std::filesystem::path& path);

inline constexpr std::array<std::string_view, 4> kMetricNames{"rouge_l", "meteor", "embed_score", "entity_f1"};
double metric_value(const MetricRecord& r, std::string_view metric);

/// SVG learning curve for one metric: log-scale k axis, one seed-mean line
/// per strategy with a min/max band; anchors are drawn as labelled markers.
std::string render_curve_svg(std::span<const RunRecord> records, std::string_view metric,
                             std::span<const AnchorPoint> anchors = {});

/// Writes table.md, table.csv and curves_<metric>.svg (when records carry k).
void render_all(std::span<const RunRecord> records, const std::filesystem::path& out_dir,
                std::span<const AnchorPoint> anchors = {});

// ---------------------------------------------------------------- compare

struct Ranked {
  std::string strategy;
  double mean = 0.0;
  /// Shares its mean with a neighbour in the ranking.
  bool tied = false;
};

struct Comparison {
  std::string size;
  std::string k;
  std::string metric;
  std::vector<Ranked> ranking;
};

/// Ranking by seed-mean for every (size, k, metric) shared by at least two
/// strategies. Ties list the longer chain first. Throws ContractError when
/// nothing is comparable.
std::vector<Comparison> compare_strategies(std::span<const RunRecord> records);
std::string render_comparison(std::span<const Comparison> comparisons);

}  // namespace mt

#endif  // MT_EXPERIMENT_HPP
