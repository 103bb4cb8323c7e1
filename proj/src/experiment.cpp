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

#include "mt/experiment.hpp"

#include "mt/decode.hpp"
#include "mt/text.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace mt {

namespace fs = std::filesystem;

// ------------------------------------------------------------- strategies

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kGeneral: return "general";
    case Strategy::kClinical: return "clinical";
    case Strategy::kMidtrain: return "midtrain";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "general" || name == "general-only") return Strategy::kGeneral;
  if (name == "clinical" || name == "+clinical-pretrain") return Strategy::kClinical;
  if (name == "midtrain" || name == "+midtrain") return Strategy::kMidtrain;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (general|clinical|midtrain)");
}

std::vector<StageKind> strategy_chain(Strategy s) {
  switch (s) {
    case Strategy::kGeneral: return {StageKind::kPretrain};
    case Strategy::kClinical: return {StageKind::kPretrain, StageKind::kPretrain};
    case Strategy::kMidtrain: return {StageKind::kPretrain, StageKind::kPretrain, StageKind::kMidtrain};
  }
  return {};
}

namespace {

int chain_rank(std::string_view strategy) {
  try {
    return static_cast<int>(strategy_chain(parse_strategy(strategy)).size());
  } catch (const ConfigError&) {
    return 0;
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("bad number '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

std::uint64_t parse_uint(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("bad integer '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(collapse_whitespace(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Non-empty, non-comment lines split on commas.
std::vector<std::vector<std::string>> csv_rows(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto trimmed = collapse_whitespace(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    rows.push_back(split(line, ','));
  }
  return rows;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<std::string> collapsed_provenance(std::span<const std::string> provenance) {
  std::vector<std::string> out;
  for (const auto& p : provenance) {
    if (out.empty() || out.back() != p) out.push_back(p);
  }
  return out;
}

// ----------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::toy() {
  ExperimentConfig cfg;
  // The published learning rates are tuned for 0.2B-3B models over billions
  // of tokens; the toy model needs larger steps to move in a few hundred.
  cfg.general_stage = pretrain_preset();
  cfg.general_stage.max_lr = 1e-3;
  cfg.general_stage.min_lr = 1e-4;
  cfg.general_stage.total_steps = 300;
  cfg.clinical_stage = cfg.general_stage;
  cfg.clinical_stage.total_steps = 200;
  cfg.midtrain_stage = midtrain_preset();
  cfg.midtrain_stage.max_lr = 3e-4;
  cfg.midtrain_stage.warmup_steps = 20;
  cfg.midtrain_stage.total_steps = 200;
  cfg.finetune_stage = finetune_preset();
  cfg.finetune_stage.max_lr = cfg.finetune_stage.min_lr = 1e-3;
  cfg.finetune_stage.epochs = 10;
  for (auto* s : {&cfg.general_stage, &cfg.clinical_stage, &cfg.midtrain_stage, &cfg.finetune_stage}) {
    s->num_sentinels = cfg.num_sentinels;
  }
  cfg.max_decode_len = 64;
  cfg.eval_limit = 30;
  return cfg;
}

void ExperimentConfig::validate() const {
  if (strategies.empty()) throw ConfigError("config: no strategies");
  if (std::set<Strategy>(strategies.begin(), strategies.end()).size() != strategies.size()) {
    throw ConfigError("config: duplicate strategy");
  }
  if (!std::is_sorted(ks.begin(), ks.end()) || std::adjacent_find(ks.begin(), ks.end()) != ks.end()) {
    throw ConfigError("config: k list must be strictly ascending");
  }
  if (!ks.empty() && ks.front() == 0) throw ConfigError("config: k must be positive");
  if (seeds.empty()) throw ConfigError("config: no seeds");
  if (beam_size == 0) throw ConfigError("config: beam_size must be at least 1");
  if (vocab_size <= num_sentinels + 3) throw ConfigError("config: vocab_size too small for the sentinels");
  for (const auto* s : {&general_stage, &clinical_stage, &midtrain_stage, &finetune_stage}) {
    if (s->num_sentinels > num_sentinels) throw ConfigError("config: stage uses more sentinels than the vocabulary");
  }
  try {
    preset_by_name(preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

namespace {

using boost::property_tree::ptree;

struct StageKeys {
  const char* section;
  StageConfig ExperimentConfig::*stage;
};
constexpr std::array<StageKeys, 4> kStageSections{{{"general", &ExperimentConfig::general_stage},
                                                   {"clinical", &ExperimentConfig::clinical_stage},
                                                   {"midtrain", &ExperimentConfig::midtrain_stage},
                                                   {"finetune", &ExperimentConfig::finetune_stage}}};

const std::set<std::string> kStageKeyNames{
    "max_lr",      "min_lr",      "warmup_fraction", "warmup_steps",    "decay",     "weight_decay",
    "beta1",       "beta2",       "adam_eps",        "clip_norm",       "batch_size", "epochs",
    "total_steps", "max_src_len", "max_tgt_len",     "corruption_rate", "mean_span", "num_sentinels",
    "eval_every",  "patience",    "min_delta"};

const std::map<std::string, std::set<std::string>> kSections{
    {"experiment", {"seed", "preset", "strategies", "ks", "seeds", "out_dir", "vocab_size", "num_sentinels"}},
    {"corpus",
     {"general_docs", "clinical_docs", "clinical_radiology_share", "midtrain_reports", "finetune_reports",
      "general_text", "clinical_text", "midtrain_jsonl", "finetune_jsonl", "train_ratio", "validation_ratio"}},
    {"decode", {"beam_size", "max_len", "length_penalty"}},
    {"eval", {"limit"}},
    {"general", kStageKeyNames},
    {"clinical", kStageKeyNames},
    {"midtrain", kStageKeyNames},
    {"finetune", kStageKeyNames},
};

void read_stage(const ptree& sec, StageConfig& s) {
  const auto num = [&](const char* key, double& field) {
    if (auto v = sec.get_optional<std::string>(key)) field = parse_double(*v, key);
  };
  const auto count = [&](const char* key, std::size_t& field) {
    if (auto v = sec.get_optional<std::string>(key)) field = parse_uint(*v, key);
  };
  num("max_lr", s.max_lr);
  num("min_lr", s.min_lr);
  num("warmup_fraction", s.warmup_fraction);
  if (auto v = sec.get_optional<std::string>("warmup_steps")) {
    if (*v == "none") s.warmup_steps.reset();
    else s.warmup_steps = parse_uint(*v, "warmup_steps");
  }
  if (auto v = sec.get_optional<std::string>("decay")) s.decay = parse_decay(*v);
  num("weight_decay", s.weight_decay);
  num("beta1", s.beta1);
  num("beta2", s.beta2);
  num("adam_eps", s.adam_eps);
  if (auto v = sec.get_optional<std::string>("clip_norm")) {
    if (*v == "none") s.clip_norm.reset();
    else s.clip_norm = parse_double(*v, "clip_norm");
  }
  count("batch_size", s.batch_size);
  count("epochs", s.epochs);
  if (auto v = sec.get_optional<std::string>("total_steps")) {
    if (*v == "none") s.total_steps.reset();
    else s.total_steps = parse_uint(*v, "total_steps");
  }
  count("max_src_len", s.max_src_len);
  count("max_tgt_len", s.max_tgt_len);
  num("corruption_rate", s.corruption_rate);
  num("mean_span", s.mean_span);
  if (auto v = sec.get_optional<std::string>("num_sentinels")) s.num_sentinels = static_cast<int>(parse_uint(*v, "num_sentinels"));
  count("eval_every", s.eval_every);
  count("patience", s.patience);
  num("min_delta", s.min_delta);
}

void write_stage(std::ostream& out, const char* section, const StageConfig& s) {
  out << "\n[" << section << "]\n";
  out << "max_lr = " << format_double(s.max_lr) << "\n";
  out << "min_lr = " << format_double(s.min_lr) << "\n";
  out << "warmup_fraction = " << format_double(s.warmup_fraction) << "\n";
  out << "warmup_steps = " << (s.warmup_steps ? std::to_string(*s.warmup_steps) : "none") << "\n";
  out << "decay = " << decay_name(s.decay) << "\n";
  out << "weight_decay = " << format_double(s.weight_decay) << "\n";
  out << "beta1 = " << format_double(s.beta1) << "\n";
  out << "beta2 = " << format_double(s.beta2) << "\n";
  out << "adam_eps = " << format_double(s.adam_eps) << "\n";
  out << "clip_norm = " << (s.clip_norm ? format_double(*s.clip_norm) : "none") << "\n";
  out << "batch_size = " << s.batch_size << "\n";
  out << "epochs = " << s.epochs << "\n";
  out << "total_steps = " << (s.total_steps ? std::to_string(*s.total_steps) : "none") << "\n";
  out << "max_src_len = " << s.max_src_len << "\n";
  out << "max_tgt_len = " << s.max_tgt_len << "\n";
  out << "corruption_rate = " << format_double(s.corruption_rate) << "\n";
  out << "mean_span = " << format_double(s.mean_span) << "\n";
  out << "num_sentinels = " << s.num_sentinels << "\n";
  out << "eval_every = " << s.eval_every << "\n";
  out << "patience = " << s.patience << "\n";
  out << "min_delta = " << format_double(s.min_delta) << "\n";
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_same_v<T, Strategy>) out += strategy_name(x);
    else out += std::to_string(x);
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view ini) {
  ptree tree;
  try {
    std::istringstream in{std::string(ini)};
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  auto cfg = ExperimentConfig::toy();
  try {
    for (const auto& [name, sec] : tree) {
      const auto known = kSections.find(name);
      if (known == kSections.end()) throw ConfigError("config: unknown section [" + name + "]");
      for (const auto& [key, value] : sec) {
        if (!known->second.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + name + "]");
      }
    }
    if (auto ex = tree.get_child_optional("experiment")) {
      if (auto v = ex->get_optional<std::string>("seed")) cfg.seed = parse_uint(*v, "seed");
      if (auto v = ex->get_optional<std::string>("preset")) cfg.preset = *v;
      if (auto v = ex->get_optional<std::string>("strategies")) {
        cfg.strategies.clear();
        for (const auto& s : split(*v, ',')) cfg.strategies.push_back(parse_strategy(s));
      }
      if (auto v = ex->get_optional<std::string>("ks")) {
        cfg.ks.clear();
        if (!collapse_whitespace(*v).empty()) {
          for (const auto& s : split(*v, ',')) cfg.ks.push_back(parse_uint(s, "ks"));
        }
      }
      if (auto v = ex->get_optional<std::string>("seeds")) {
        cfg.seeds.clear();
        for (const auto& s : split(*v, ',')) cfg.seeds.push_back(parse_uint(s, "seeds"));
      }
      if (auto v = ex->get_optional<std::string>("out_dir")) cfg.out_dir = *v;
      if (auto v = ex->get_optional<std::string>("vocab_size")) cfg.vocab_size = static_cast<int>(parse_uint(*v, "vocab_size"));
      if (auto v = ex->get_optional<std::string>("num_sentinels")) {
        cfg.num_sentinels = static_cast<int>(parse_uint(*v, "num_sentinels"));
        for (const auto& k : kStageSections) (cfg.*k.stage).num_sentinels = cfg.num_sentinels;
      }
    }
    if (auto c = tree.get_child_optional("corpus")) {
      auto& cs = cfg.corpus;
      const auto count = [&](const char* key, std::size_t& field) {
        if (auto v = c->get_optional<std::string>(key)) field = parse_uint(*v, key);
      };
      count("general_docs", cs.general_docs);
      count("clinical_docs", cs.clinical_docs);
      count("midtrain_reports", cs.midtrain_reports);
      count("finetune_reports", cs.finetune_reports);
      if (auto v = c->get_optional<std::string>("clinical_radiology_share")) {
        cs.clinical_radiology_share = parse_double(*v, "clinical_radiology_share");
      }
      if (auto v = c->get_optional<std::string>("train_ratio")) cs.train_ratio = parse_double(*v, "train_ratio");
      if (auto v = c->get_optional<std::string>("validation_ratio")) {
        cs.validation_ratio = parse_double(*v, "validation_ratio");
      }
      if (auto v = c->get_optional<std::string>("general_text")) cs.general_text = *v;
      if (auto v = c->get_optional<std::string>("clinical_text")) cs.clinical_text = *v;
      if (auto v = c->get_optional<std::string>("midtrain_jsonl")) cs.midtrain_jsonl = *v;
      if (auto v = c->get_optional<std::string>("finetune_jsonl")) cs.finetune_jsonl = *v;
    }
    if (auto d = tree.get_child_optional("decode")) {
      if (auto v = d->get_optional<std::string>("beam_size")) cfg.beam_size = parse_uint(*v, "beam_size");
      if (auto v = d->get_optional<std::string>("max_len")) cfg.max_decode_len = parse_uint(*v, "max_len");
      if (auto v = d->get_optional<std::string>("length_penalty")) {
        cfg.length_penalty = parse_double(*v, "length_penalty");
      }
    }
    if (auto e = tree.get_child_optional("eval")) {
      if (auto v = e->get_optional<std::string>("limit")) cfg.eval_limit = parse_uint(*v, "limit");
    }
    for (const auto& k : kStageSections) {
      if (auto sec = tree.get_child_optional(k.section)) read_stage(*sec, cfg.*k.stage);
    }
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) { return parse_config(read_file(path)); }

std::string config_to_ini(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "seed = " << cfg.seed << "\n";
  out << "preset = " << cfg.preset << "\n";
  out << "strategies = " << join_list(cfg.strategies) << "\n";
  out << "ks = " << join_list(cfg.ks) << "\n";
  out << "seeds = " << join_list(cfg.seeds) << "\n";
  out << "out_dir = " << cfg.out_dir.string() << "\n";
  out << "vocab_size = " << cfg.vocab_size << "\n";
  out << "num_sentinels = " << cfg.num_sentinels << "\n";
  const auto& cs = cfg.corpus;
  out << "\n[corpus]\n";
  out << "general_docs = " << cs.general_docs << "\n";
  out << "clinical_docs = " << cs.clinical_docs << "\n";
  out << "clinical_radiology_share = " << format_double(cs.clinical_radiology_share) << "\n";
  out << "midtrain_reports = " << cs.midtrain_reports << "\n";
  out << "finetune_reports = " << cs.finetune_reports << "\n";
  out << "train_ratio = " << format_double(cs.train_ratio) << "\n";
  out << "validation_ratio = " << format_double(cs.validation_ratio) << "\n";
  if (cs.general_text) out << "general_text = " << cs.general_text->string() << "\n";
  if (cs.clinical_text) out << "clinical_text = " << cs.clinical_text->string() << "\n";
  if (cs.midtrain_jsonl) out << "midtrain_jsonl = " << cs.midtrain_jsonl->string() << "\n";
  if (cs.finetune_jsonl) out << "finetune_jsonl = " << cs.finetune_jsonl->string() << "\n";
  out << "\n[decode]\n";
  out << "beam_size = " << cfg.beam_size << "\n";
  out << "max_len = " << cfg.max_decode_len << "\n";
  out << "length_penalty = " << format_double(cfg.length_penalty) << "\n";
  out << "\n[eval]\n";
  out << "limit = " << cfg.eval_limit << "\n";
  for (const auto& k : kStageSections) write_stage(out, k.section, cfg.*k.stage);
  return out.str();
}

// ---------------------------------------------------------------- corpora

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    auto t = collapse_whitespace(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  if (out.empty()) throw ConfigError("corpus file " + path.string() + " is empty");
  return out;
}

std::vector<Report> read_reports(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("corpus file " + path.string() + " does not exist");
  auto reports = load_jsonl(path);
  if (reports.empty()) throw ConfigError("corpus file " + path.string() + " is empty");
  return reports;
}

}  // namespace

Corpora build_corpora(const ExperimentConfig& cfg) {
  const auto& cs = cfg.corpus;
  Corpora c;
  if (cs.general_text) {
    c.general = read_lines(*cs.general_text);
  } else {
    for (const auto& r : synth_corpus(derive_seed(cfg.seed, 1), Style::kGeneral, cs.general_docs)) {
      c.general.push_back(midtrain_sequence(r));
    }
  }
  if (cs.clinical_text) {
    c.clinical = read_lines(*cs.clinical_text);
  } else {
    const auto n_rad = static_cast<std::size_t>(std::llround(cs.clinical_radiology_share * static_cast<double>(cs.clinical_docs)));
    for (const auto& r : synth_corpus(derive_seed(cfg.seed, 2), Style::kRadiology, n_rad)) {
      c.clinical.push_back(r.findings);
    }
    for (const auto& r : synth_corpus(derive_seed(cfg.seed, 3), Style::kGeneral, cs.clinical_docs - n_rad)) {
      c.clinical.push_back(midtrain_sequence(r));
    }
    std::mt19937_64 rng(derive_seed(cfg.seed, 3, 1));
    std::shuffle(c.clinical.begin(), c.clinical.end(), rng);
  }
  const auto midtrain = cs.midtrain_jsonl ? read_reports(*cs.midtrain_jsonl)
                                          : synth_corpus(derive_seed(cfg.seed, 4), Style::kRadiology, cs.midtrain_reports);
  for (const auto& r : midtrain) c.midtrain.push_back(midtrain_sequence(r));
  const auto finetune = cs.finetune_jsonl ? read_reports(*cs.finetune_jsonl)
                                          : synth_corpus(derive_seed(cfg.seed, 5), Style::kRadiology, cs.finetune_reports);
  c.finetune = split_reports(finetune, cs.train_ratio, cs.validation_ratio, derive_seed(cfg.seed, 6));
  if (c.finetune.test.empty()) throw ConfigError("corpus: the fine-tune test split is empty");
  if (!cfg.ks.empty() && cfg.ks.back() > c.finetune.train.size()) {
    throw ConfigError("config: k=" + std::to_string(cfg.ks.back()) + " exceeds the " +
                      std::to_string(c.finetune.train.size()) + " training reports");
  }
  return c;
}

Vocabulary build_vocab(const ExperimentConfig& cfg, const Corpora& corpora) {
  std::vector<std::string> all = corpora.general;
  all.insert(all.end(), corpora.clinical.begin(), corpora.clinical.end());
  all.insert(all.end(), corpora.midtrain.begin(), corpora.midtrain.end());
  return train_vocab(all, cfg.vocab_size, cfg.num_sentinels);
}

ModelConfig model_config(const ExperimentConfig& cfg, const Vocabulary& vocab) {
  auto m = preset_by_name(cfg.preset);
  m.vocab_size = vocab.size();
  return m;
}

// ---------------------------------------------------------------- records

std::string records_to_csv(std::span<const RunRecord> records) {
  std::string out(kRecordsHeader);
  out += '\n';
  for (const auto& r : records) {
    out += r.strategy + ',' + r.preset + ',' + r.k_label() + ',' + std::to_string(r.seed) + ',' +
           format_double(r.scores.rouge_l) + ',' + format_double(r.scores.meteor) + ',' +
           format_double(r.scores.embed_score) + ',' + format_double(r.scores.entity_f1) + '\n';
  }
  return out;
}

std::vector<RunRecord> records_from_csv(std::string_view csv) {
  const auto rows = csv_rows(csv);
  if (rows.empty() || rows.front() != split(kRecordsHeader, ',')) {
    throw ParseError("records: expected header '" + std::string(kRecordsHeader) + "'");
  }
  std::vector<RunRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 8) throw ParseError("records: row " + std::to_string(i) + " has " + std::to_string(row.size()) + " fields");
    RunRecord r;
    r.strategy = row[0];
    r.preset = row[1];
    if (row[2] != "full") r.k = parse_uint(row[2], "k");
    r.seed = parse_uint(row[3], "seed");
    r.scores = {parse_double(row[4], "rouge_l"), parse_double(row[5], "meteor"), parse_double(row[6], "embed_score"),
                parse_double(row[7], "entity_f1")};
    out.push_back(std::move(r));
  }
  return out;
}

void save_records(const fs::path& path, std::span<const RunRecord> records) {
  write_file(path, records_to_csv(records));
}

std::vector<RunRecord> load_records(const fs::path& path) { return records_from_csv(read_file(path)); }

std::string summaries_to_jsonl(std::span<const Summary> summaries) {
  std::string out;
  for (const auto& s : summaries) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["generated"] = s.generated;
    j["reference"] = s.reference;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// -------------------------------------------------------------- workspace

Workspace::Workspace(ExperimentConfig cfg, std::function<void(const std::string&)> log)
    : cfg_(std::move(cfg)), log_(std::move(log)) {
  cfg_.validate();
  const auto stamp = cfg_.out_dir / "config.ini";
  const auto text = config_to_ini(cfg_);
  if (fs::exists(stamp) && read_file(stamp) != text) {
    throw ConfigError(cfg_.out_dir.string() + " holds artifacts of a different configuration; use another --out");
  }
  write_file(stamp, text);
}

void Workspace::log(const std::string& message) const {
  if (log_) log_(message);
}

const Corpora& Workspace::corpora() {
  if (!corpora_) corpora_ = build_corpora(cfg_);
  return *corpora_;
}

const Vocabulary& Workspace::vocab() {
  if (!vocab_) {
    const auto path = cfg_.out_dir / "vocab.txt";
    if (fs::exists(path)) {
      vocab_ = Vocabulary::load(path);
    } else {
      log("training tokenizer");
      vocab_ = build_vocab(cfg_, corpora());
      vocab_->save(path);
    }
  }
  return *vocab_;
}

fs::path Workspace::checkpoint_path(Strategy s) const {
  return cfg_.out_dir / "checkpoints" / (std::string(strategy_name(s)) + ".ckpt");
}

namespace {

std::vector<std::vector<TokenId>> encode_all(const Vocabulary& vocab, std::span<const std::string> texts) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(vocab.encode(t));
  return out;
}

}  // namespace

const Checkpoint& Workspace::pretrained(Strategy s) {
  if (auto it = checkpoints_.find(s); it != checkpoints_.end()) return it->second;
  const auto path = checkpoint_path(s);
  if (fs::exists(path)) {
    return checkpoints_[s] = load_checkpoint(path);
  }
  const auto& v = vocab();
  Checkpoint start;
  StageConfig stage;
  std::span<const std::string> texts;
  std::string stage_label;
  switch (s) {
    case Strategy::kGeneral:
      start = Checkpoint::fresh(model_config(cfg_, v), cfg_.seed);
      stage = cfg_.general_stage;
      texts = corpora().general;
      break;
    case Strategy::kClinical:
      start = pretrained(Strategy::kGeneral);
      stage = cfg_.clinical_stage;
      texts = corpora().clinical;
      break;
    case Strategy::kMidtrain:
      start = pretrained(Strategy::kClinical);
      stage = cfg_.midtrain_stage;
      texts = corpora().midtrain;
      break;
  }
  stage.kind = s == Strategy::kMidtrain ? StageKind::kMidtrain : StageKind::kPretrain;
  stage.objective = Objective::kDenoise;
  stage.seed = derive_seed(cfg_.seed, 0x57A6E, static_cast<std::uint64_t>(s));
  log("running " + std::string(strategy_name(s)) + " " + std::string(stage_name(stage.kind)) + " stage");
  try {
    auto result = run_stage(start, stage, StageData::denoise(encode_all(v, texts)));
    save_log(cfg_.out_dir / "logs" / (std::string(strategy_name(s)) + ".csv"), result.log);
    fs::create_directories(path.parent_path());
    save_checkpoint(result.checkpoint, path);
    return checkpoints_[s] = std::move(result.checkpoint);
  } catch (const std::exception& e) {
    std::string chain;
    for (const auto& p : start.provenance) chain += (chain.empty() ? "" : ", ") + p;
    throw std::runtime_error("stage " + std::string(stage_name(stage.kind)) + " of strategy " +
                             std::string(strategy_name(s)) + " (after [" + chain + "]) failed: " + e.what());
  }
}

const ModelParams<float>& Workspace::scoring_encoder() { return pretrained(Strategy::kGeneral).params; }

Checkpoint Workspace::finetune(Strategy s, std::span<const Report> train, std::uint64_t seed) {
  const auto& v = vocab();
  std::vector<Pair> pairs;
  pairs.reserve(train.size());
  for (const auto& r : train) pairs.push_back({v.encode(r.findings), v.encode(r.impression)});
  auto stage = cfg_.finetune_stage;
  stage.kind = StageKind::kFinetune;
  stage.objective = Objective::kSupervised;
  stage.seed = derive_seed(cfg_.seed, 0xF17E, seed);
  return run_stage(pretrained(s), stage, StageData::supervised(std::move(pairs))).checkpoint;
}

std::span<const Report> Workspace::test_reports() {
  const auto& test = corpora().finetune.test;
  const std::size_t n = cfg_.eval_limit == 0 ? test.size() : std::min(cfg_.eval_limit, test.size());
  return std::span<const Report>(test).first(n);
}

std::pair<MetricRecord, std::vector<Summary>> Workspace::evaluate(const ModelParams<float>& params) {
  const auto& v = vocab();
  const MetricContext ctx{&scoring_encoder(), &v, &EntityLexicon::radiology()};
  std::vector<MetricRecord> scores;
  std::vector<Summary> summaries;
  for (const auto& r : test_reports()) {
    auto src = v.encode(r.findings);
    if (src.size() > cfg_.finetune_stage.max_src_len) src.resize(cfg_.finetune_stage.max_src_len);
    const auto out = beam(params, src, cfg_.beam_size, cfg_.max_decode_len, cfg_.length_penalty);
    const auto text = v.decode(out);
    scores.push_back(score_example(text, r.impression, ctx));
    summaries.push_back({r.id, text, r.impression});
  }
  return {mean_scores(scores), std::move(summaries)};
}

// -------------------------------------------------------------- pipelines

fs::path Workspace::finetuned_path(Strategy s, std::uint64_t seed) const {
  const auto suffix = cfg_.seeds.size() > 1 ? "_seed" + std::to_string(seed) : std::string();
  return cfg_.out_dir / "checkpoints" / (std::string(strategy_name(s)) + "_finetuned" + suffix + ".ckpt");
}

fs::path Workspace::summaries_path(Strategy s, std::uint64_t seed) const {
  const auto suffix = cfg_.seeds.size() > 1 ? "_seed" + std::to_string(seed) : std::string();
  return cfg_.out_dir / ("summaries_" + std::string(strategy_name(s)) + suffix + ".jsonl");
}

void finetune_full(Workspace& ws) {
  const auto& cfg = ws.config();
  for (const auto s : cfg.strategies) {
    for (const auto seed : cfg.seeds) {
      ws.log("fine-tuning " + std::string(strategy_name(s)) + " on the full train split, seed " + std::to_string(seed));
      save_checkpoint(ws.finetune(s, ws.corpora().finetune.train, seed), ws.finetuned_path(s, seed));
    }
  }
}

std::vector<RunRecord> evaluate_finetuned(Workspace& ws) {
  const auto& cfg = ws.config();
  std::vector<RunRecord> records;
  for (const auto s : cfg.strategies) {
    for (const auto seed : cfg.seeds) {
      const auto path = ws.finetuned_path(s, seed);
      if (!fs::exists(path)) throw ConfigError("no fine-tuned checkpoint at " + path.string() + "; run finetune first");
      ws.log("evaluating " + path.filename().string());
      auto [scores, summaries] = ws.evaluate(load_checkpoint(path).params);
      write_file(ws.summaries_path(s, seed), summaries_to_jsonl(summaries));
      records.push_back({std::string(strategy_name(s)), cfg.preset, std::nullopt, seed, scores, {}});
    }
  }
  save_records(cfg.out_dir / "records.csv", records);
  return records;
}

std::vector<RunRecord> run_pipeline(Workspace& ws) {
  finetune_full(ws);
  return evaluate_finetuned(ws);
}

std::vector<RunRecord> sweep_fewshot(Workspace& ws) {
  const auto& cfg = ws.config();
  if (cfg.ks.empty()) throw ConfigError("sweep: the k list is empty");
  const auto& train = ws.corpora().finetune.train;
  std::map<std::uint64_t, FewShotPlan> plans;
  for (const auto seed : cfg.seeds) {
    plans[seed] = fewshot_subsets(train, cfg.ks, derive_seed(cfg.seed, 0x5E1EC7, seed));
  }
  for (const auto& [seed, plan] : plans) {
    write_file(cfg.out_dir / "sweep" / "plans" / ("fewshot_seed" + std::to_string(seed) + ".csv"), plan_to_csv(plan));
  }
  std::vector<RunRecord> records;
  for (const auto s : cfg.strategies) {
    for (const auto k : cfg.ks) {
      for (const auto seed : cfg.seeds) {
        const auto subset = select_reports(train, plans.at(seed), k);
        const auto tuned = ws.finetune(s, subset, seed);
        const auto scores = ws.evaluate(tuned.params).first;
        ws.log(std::string(strategy_name(s)) + " k=" + std::to_string(k) + " seed=" + std::to_string(seed) +
               " rouge_l=" + format_double(scores.rouge_l));
        records.push_back({std::string(strategy_name(s)), cfg.preset, k, seed, scores, {}});
      }
    }
  }
  save_records(cfg.out_dir / "sweep" / "records.csv", records);
  return records;
}

// ----------------------------------------------------------------- render

namespace {

// Parameter count implied by a size label: "0.2B", "220M", "220000", or a
// named preset. Unknown labels sort last.
double size_key(std::string_view label) {
  if (label.empty()) return std::numeric_limits<double>::infinity();
  double scale = 1.0;
  std::string_view digits = label;
  const char unit = label.back();
  if (unit == 'B' || unit == 'b') scale = 1e9;
  if (unit == 'M' || unit == 'm') scale = 1e6;
  if (unit == 'K' || unit == 'k') scale = 1e3;
  if (scale != 1.0) digits.remove_suffix(1);
  double v = 0;
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (res.ec == std::errc() && res.ptr == digits.data() + digits.size()) return v * scale;
  try {
    return static_cast<double>(parameter_count(preset_by_name(label)));
  } catch (const std::invalid_argument&) {
    return std::numeric_limits<double>::infinity();
  }
}

double k_key(std::string_view k) {
  if (k == "full") return std::numeric_limits<double>::infinity();
  double v = 0;
  std::from_chars(k.data(), k.data() + k.size(), v);
  return v;
}

bool row_less(const TableRow& a, const TableRow& b) {
  const auto ka = std::make_tuple(size_key(a.size), a.size, k_key(a.k), chain_rank(a.strategy), a.strategy, a.model);
  const auto kb = std::make_tuple(size_key(b.size), b.size, k_key(b.k), chain_rank(b.strategy), b.strategy, b.model);
  return ka < kb;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

constexpr std::array<std::string_view, 4> kMetricTitles{"ROUGE-L", "METEOR", "Embed score", "Entity F1"};

}  // namespace

double metric_value(const MetricRecord& r, std::string_view metric) {
  if (metric == "rouge_l") return r.rouge_l;
  if (metric == "meteor") return r.meteor;
  if (metric == "embed_score") return r.embed_score;
  if (metric == "entity_f1") return r.entity_f1;
  throw ContractError("unknown metric '" + std::string(metric) + "'");
}

std::vector<TableRow> aggregate(std::span<const RunRecord> records) {
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::vector<MetricRecord>> groups;
  for (const auto& r : records) groups[{r.preset, r.strategy, r.k_label(), r.model}].push_back(r.scores);
  std::vector<TableRow> rows;
  for (const auto& [key, scores] : groups) {
    const auto& [size, strategy, k, model] = key;
    rows.push_back({model, size, strategy, k, mean_scores(scores), scores.size()});
  }
  std::stable_sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::string render_table(std::span<const RunRecord> records) {
  if (records.empty()) throw ContractError("render: no records");
  const auto rows = aggregate(records);
  const bool with_model = std::any_of(rows.begin(), rows.end(), [](const TableRow& r) { return !r.model.empty(); });
  const bool with_k = std::any_of(rows.begin(), rows.end(), [](const TableRow& r) { return r.k != "full"; });
  // Best value per metric within each (size, k) group.
  std::map<std::pair<std::string, std::string>, std::array<double, 4>> best;
  for (const auto& r : rows) {
    auto [it, fresh] = best.try_emplace({r.size, r.k});
    for (std::size_t m = 0; m < 4; ++m) {
      const double v = metric_value(r.mean, kMetricNames[m]);
      if (fresh || v > it->second[m]) it->second[m] = v;
    }
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header;
  if (with_model) header.push_back("Model");
  header.push_back("Size");
  header.push_back("Strategy");
  if (with_k) header.push_back("k");
  for (auto t : kMetricTitles) header.emplace_back(t);
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line;
    if (with_model) line.push_back(r.model);
    line.push_back(r.size);
    line.push_back(r.strategy);
    if (with_k) line.push_back(r.k);
    const auto& b = best.at({r.size, r.k});
    for (std::size_t m = 0; m < 4; ++m) {
      const double v = metric_value(r.mean, kMetricNames[m]);
      line.push_back(v == b[m] ? "**" + fixed4(v) + "**" : fixed4(v));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 3);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::string out;
  const auto emit = [&](const std::vector<std::string>& line) {
    out += '|';
    for (std::size_t c = 0; c < line.size(); ++c) out += ' ' + line[c] + std::string(width[c] - line[c].size(), ' ') + " |";
    out += '\n';
  };
  emit(cells.front());
  out += '|';
  for (auto w : width) out += std::string(w + 2, '-') + '|';
  out += '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return out;
}

std::string render_table_csv(std::span<const RunRecord> records) {
  if (records.empty()) throw ContractError("render: no records");
  std::string out = "model,size,strategy,k,runs,rouge_l,meteor,embed_score,entity_f1\n";
  for (const auto& r : aggregate(records)) {
    out += r.model + ',' + r.size + ',' + r.strategy + ',' + r.k + ',' + std::to_string(r.runs) + ',' +
           format_double(r.mean.rouge_l) + ',' + format_double(r.mean.meteor) + ',' +
           format_double(r.mean.embed_score) + ',' + format_double(r.mean.entity_f1) + '\n';
  }
  return out;
}

std::vector<TableRow> parse_table_csv(std::string_view csv) {
  const auto rows = csv_rows(csv);
  if (rows.empty() || rows.front() != split("model,size,strategy,k,runs,rouge_l,meteor,embed_score,entity_f1", ',')) {
    throw ParseError("table csv: unexpected header");
  }
  std::vector<TableRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 9) throw ParseError("table csv: row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    out.push_back({f[0], f[1], f[2], f[3],
                   {parse_double(f[5], "rouge_l"), parse_double(f[6], "meteor"), parse_double(f[7], "embed_score"),
                    parse_double(f[8], "entity_f1")},
                   parse_uint(f[4], "runs")});
  }
  return out;
}

std::vector<RunRecord> load_table2(const fs::path& path) {
  const auto rows = csv_rows(read_file(path));
  if (rows.empty() || rows.front() != split("model,size,strategy,rouge_l,meteor,embed_score,entity_f1", ',')) {
    throw ParseError("table2: unexpected header in " + path.string());
  }
  std::vector<RunRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 7) throw ParseError("table2: row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    RunRecord r;
    r.model = f[0];
    r.preset = f[1];
    r.strategy = std::string(strategy_name(parse_strategy(f[2])));
    r.scores = {parse_double(f[3], "rouge_l"), parse_double(f[4], "meteor"), parse_double(f[5], "embed_score"),
                parse_double(f[6], "entity_f1")};
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AnchorPoint> load_anchors(const fs::path& path) {
  const auto rows = csv_rows(read_file(path));
  if (rows.empty() || rows.front() != split("model,size,strategy,k,rouge_l", ',')) {
    throw ParseError("anchors: unexpected header in " + path.string());
  }
  std::vector<AnchorPoint> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 5) throw ParseError("anchors: row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    out.push_back({f[0], f[1], std::string(strategy_name(parse_strategy(f[2]))), parse_uint(f[3], "k"),
                   parse_double(f[4], "rouge_l")});
  }
  return out;
}

namespace {

constexpr std::array<std::string_view, 6> kPalette{"#1b6ca8", "#c8553d", "#2a9d8f", "#8d6a9f", "#e9a03b", "#555555"};

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_curve_svg(std::span<const RunRecord> records, std::string_view metric,
                             std::span<const AnchorPoint> anchors) {
  struct Stats {
    double sum = 0, lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
    std::size_t n = 0;
  };
  std::map<std::string, std::map<std::size_t, Stats>> lines;
  for (const auto& r : records) {
    if (!r.k) continue;
    auto& s = lines[r.strategy][*r.k];
    const double v = metric_value(r.scores, metric);
    s.sum += v;
    s.lo = std::min(s.lo, v);
    s.hi = std::max(s.hi, v);
    ++s.n;
  }
  if (lines.empty()) throw ContractError("render: no few-shot records to plot");
  std::vector<std::string> order;
  for (const auto& [name, pts] : lines) order.push_back(name);
  std::stable_sort(order.begin(), order.end(),
                   [](const std::string& a, const std::string& b) { return chain_rank(a) < chain_rank(b); });

  std::size_t kmin = std::numeric_limits<std::size_t>::max(), kmax = 0;
  double ylo = 0.0, yhi = 1.0;
  for (const auto& [name, pts] : lines) {
    for (const auto& [k, s] : pts) {
      kmin = std::min(kmin, k);
      kmax = std::max(kmax, k);
      ylo = std::min(ylo, s.lo);
      yhi = std::max(yhi, s.hi);
    }
  }
  const bool plot_anchors = metric == "rouge_l";
  if (plot_anchors) {
    for (const auto& a : anchors) {
      kmin = std::min(kmin, a.k);
      kmax = std::max(kmax, a.k);
    }
  }
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 170, kTop = 30, kBottom = 50;
  const double lx0 = std::log10(static_cast<double>(kmin)), lx1 = std::log10(static_cast<double>(kmax));
  const auto x_of = [&](std::size_t k) {
    if (lx1 == lx0) return kLeft + (kW - kLeft - kRight) / 2;
    return kLeft + (std::log10(static_cast<double>(k)) - lx0) / (lx1 - lx0) * (kW - kLeft - kRight);
  };
  const auto y_of = [&](double v) { return kTop + (yhi - v) / (yhi - ylo) * (kH - kTop - kBottom); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
      << kW << ' ' << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(metric)
      << " vs k (log scale), seed mean with min/max band</text>\n";
  // Axes and ticks.
  out << "<line x1=\"" << kLeft << "\" y1=\"" << svg_num(y_of(ylo)) << "\" x2=\"" << kW - kRight << "\" y2=\""
      << svg_num(y_of(ylo)) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << svg_num(y_of(yhi)) << "\" x2=\"" << kLeft << "\" y2=\""
      << svg_num(y_of(ylo)) << "\" stroke=\"black\"/>\n";
  std::set<std::size_t> ticks;
  for (const auto& [name, pts] : lines) {
    for (const auto& [k, s] : pts) ticks.insert(k);
  }
  for (auto k : ticks) {
    out << "<text x=\"" << svg_num(x_of(k)) << "\" y=\"" << svg_num(y_of(ylo) + 18)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << k << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = ylo + (yhi - ylo) * i / 4.0;
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << svg_num(y_of(v) + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fixed4(v).substr(0, 4)
        << "</text>\n";
  }
  for (std::size_t li = 0; li < order.size(); ++li) {
    const auto& pts = lines.at(order[li]);
    const auto color = kPalette[li % kPalette.size()];
    std::string band, upper, lower, mean;
    for (const auto& [k, s] : pts) upper += svg_num(x_of(k)) + ',' + svg_num(y_of(s.hi)) + ' ';
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
      lower += svg_num(x_of(it->first)) + ',' + svg_num(y_of(it->second.lo)) + ' ';
    }
    for (const auto& [k, s] : pts) {
      mean += svg_num(x_of(k)) + ',' + svg_num(y_of(s.sum / static_cast<double>(s.n))) + ' ';
    }
    mean.pop_back();
    out << "<polygon class=\"band\" data-strategy=\"" << xml_escape(order[li]) << "\" points=\"" << upper << lower
        << "\" fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    out << "<polyline class=\"mean\" data-strategy=\"" << xml_escape(order[li]) << "\" points=\"" << mean
        << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 16 * (li + 1) << "\" fill=\"" << color
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(order[li]) << "</text>\n";
  }
  if (plot_anchors && !anchors.empty()) {
    for (const auto& a : anchors) {
      out << "<circle class=\"anchor\" cx=\"" << svg_num(x_of(a.k)) << "\" cy=\"" << svg_num(y_of(a.rouge_l))
          << "\" r=\"4\" fill=\"none\" stroke=\"black\"><title>" << xml_escape(a.model) << " k=" << a.k << ' '
          << fixed4(a.rouge_l) << "</title></circle>\n";
    }
    out << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 16 * (order.size() + 2)
        << "\" font-family=\"sans-serif\" font-size=\"11\">o published results,</text>\n";
    out << "<text x=\"" << kW - kRight + 10 << "\" y=\"" << kTop + 16 * (order.size() + 3)
        << "\" font-family=\"sans-serif\" font-size=\"11\">  not reproduced</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void render_all(std::span<const RunRecord> records, const fs::path& out_dir, std::span<const AnchorPoint> anchors) {
  write_file(out_dir / "table.md", render_table(records));
  write_file(out_dir / "table.csv", render_table_csv(records));
  if (std::any_of(records.begin(), records.end(), [](const RunRecord& r) { return r.k.has_value(); })) {
    for (auto m : kMetricNames) {
      write_file(out_dir / ("curves_" + std::string(m) + ".svg"), render_curve_svg(records, m, anchors));
    }
  }
}

// ---------------------------------------------------------------- compare

std::vector<Comparison> compare_strategies(std::span<const RunRecord> records) {
  std::vector<Comparison> out;
  std::vector<std::pair<std::string, std::string>> cells;
  for (const auto& row : aggregate(records)) {
    std::pair<std::string, std::string> cell{row.size, row.k};
    if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
  }
  const auto rows = aggregate(records);
  for (const auto& [size, k] : cells) {
    for (auto metric : kMetricNames) {
      Comparison c{size, k, std::string(metric), {}};
      for (const auto& row : rows) {
        if (row.size == size && row.k == k) c.ranking.push_back({row.strategy, metric_value(row.mean, metric), false});
      }
      if (c.ranking.size() < 2) continue;
      std::stable_sort(c.ranking.begin(), c.ranking.end(), [](const Ranked& a, const Ranked& b) {
        if (a.mean != b.mean) return a.mean > b.mean;
        return chain_rank(a.strategy) > chain_rank(b.strategy);
      });
      for (std::size_t i = 0; i + 1 < c.ranking.size(); ++i) {
        if (c.ranking[i].mean == c.ranking[i + 1].mean) c.ranking[i].tied = c.ranking[i + 1].tied = true;
      }
      out.push_back(std::move(c));
    }
  }
  if (out.empty()) throw ContractError("compare: no (size, k) cell has two strategies");
  return out;
}

std::string render_comparison(std::span<const Comparison> comparisons) {
  std::string out;
  for (const auto& c : comparisons) {
    out += c.size + " k=" + c.k + " " + c.metric + ": ";
    for (std::size_t i = 0; i < c.ranking.size(); ++i) {
      const auto& r = c.ranking[i];
      if (i > 0) out += c.ranking[i - 1].tied && r.tied && c.ranking[i - 1].mean == r.mean ? " = " : " > ";
      out += r.strategy + " (" + fixed4(r.mean) + ")";
    }
    out += '\n';
  }
  return out;
}

}  // namespace mt
