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


// mtlab: command-line driver for the strategy comparison and few-shot sweep.

#include "mt/experiment.hpp"
#include "mt/text.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> strategies;
  std::string records;
  bool fixture = false;
  bool sweep = false;
  std::string anchors = MT_DATA_DIR "/figure1_anchors.csv";
  std::string table2 = MT_DATA_DIR "/table2.csv";
};

mt::ExperimentConfig resolve(const Options& o) {
  auto cfg = o.config.empty() ? mt::ExperimentConfig::toy() : mt::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : o.strategies) cfg.strategies.push_back(mt::parse_strategy(s));
  }
  cfg.validate();
  return cfg;
}

mt::Workspace workspace(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  return mt::Workspace(resolve(o), [start](const std::string& msg) {
    const auto s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "[%7.1fs] %s\n", s, msg.c_str());
  });
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + '\n';
  write_text(path, text);
}

std::vector<mt::RunRecord> input_records(const Options& o, const mt::ExperimentConfig& cfg) {
  if (o.fixture) return mt::load_table2(o.table2);
  if (!o.records.empty()) return mt::load_records(o.records);
  return mt::load_records(o.sweep ? cfg.out_dir / "sweep" / "records.csv" : cfg.out_dir / "records.csv");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive pretraining, mid-training and few-shot fine-tuning experiments"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "INI experiment config (defaults to the toy setup)")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Experiment seed override");
  app.add_option("--out", o.out, "Output directory override");
  app.add_option("--strategy", o.strategies, "Restrict to these strategies (repeatable)");

  auto* synth = app.add_subcommand("synth", "Write the corpora to <out>/corpus");
  auto* tokenize = app.add_subcommand("tokenize", "Train the tokenizer and report round-trip coverage");
  auto* pretrain = app.add_subcommand("pretrain", "Run the general and clinical pretraining stages");
  auto* midtrain = app.add_subcommand("midtrain", "Run the radiology mid-training stage");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune each strategy on the full train split");
  auto* eval = app.add_subcommand("eval", "Decode and score the fine-tuned checkpoints");
  auto* pipeline = app.add_subcommand("pipeline", "Every stage, fine-tune and eval in one go");
  auto* sweep = app.add_subcommand("sweep", "Few-shot sweep over k and seeds");
  auto* render = app.add_subcommand("render", "Tables and learning curves from records");
  auto* compare = app.add_subcommand("compare", "Rank strategies per size, k and metric");
  for (auto* sub : {render, compare}) {
    sub->add_option("--records", o.records, "records.csv (defaults to <out>/records.csv, or <out>/sweep/records.csv with --sweep)");
    sub->add_flag("--sweep", o.sweep, "Use the few-shot sweep records");
    sub->add_flag("--fixture", o.fixture, "Use the bundled published table instead of records");
    sub->add_option("--table2", o.table2, "Published table fixture")->check(CLI::ExistingFile);
  }
  render->add_option("--anchors", o.anchors, "Published few-shot points drawn as overlay markers");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto cfg = resolve(o);
      const auto c = mt::build_corpora(cfg);
      const auto dir = cfg.out_dir / "corpus";
      write_lines(dir / "general.txt", c.general);
      write_lines(dir / "clinical.txt", c.clinical);
      write_lines(dir / "midtrain.txt", c.midtrain);
      mt::save_jsonl(dir / "finetune_train.jsonl", c.finetune.train);
      mt::save_jsonl(dir / "finetune_validation.jsonl", c.finetune.validation);
      mt::save_jsonl(dir / "finetune_test.jsonl", c.finetune.test);
      std::cout << "wrote " << c.general.size() << " general, " << c.clinical.size() << " clinical, "
                << c.midtrain.size() << " midtrain documents and " << c.finetune.train.size() << "/"
                << c.finetune.validation.size() << "/" << c.finetune.test.size() << " reports to " << dir.string()
                << "\n";
    } else if (tokenize->parsed()) {
      auto ws = workspace(o);
      const auto& v = ws.vocab();
      const auto& c = ws.corpora();
      std::size_t total = 0, exact = 0;
      for (const auto* docs : {&c.general, &c.clinical, &c.midtrain}) {
        for (const auto& d : *docs) {
          ++total;
          exact += v.decode(v.encode(d)) == mt::normalize_text(d);
        }
      }
      std::cout << "vocabulary: " << v.size() << " pieces; lossless round-trip on " << exact << "/" << total
                << " documents\n";
    } else if (pretrain->parsed()) {
      auto ws = workspace(o);
      ws.pretrained(mt::Strategy::kGeneral);
      for (auto s : ws.config().strategies) {
        if (s != mt::Strategy::kGeneral) ws.pretrained(mt::Strategy::kClinical);
      }
      std::cout << "pretrain checkpoints in " << (ws.config().out_dir / "checkpoints").string() << "\n";
    } else if (midtrain->parsed()) {
      auto ws = workspace(o);
      ws.pretrained(mt::Strategy::kMidtrain);
      std::cout << "wrote " << ws.checkpoint_path(mt::Strategy::kMidtrain).string() << "\n";
    } else if (finetune->parsed()) {
      auto ws = workspace(o);
      mt::finetune_full(ws);
    } else if (eval->parsed()) {
      auto ws = workspace(o);
      std::cout << mt::render_table(mt::evaluate_finetuned(ws));
    } else if (pipeline->parsed()) {
      auto ws = workspace(o);
      std::cout << mt::render_table(mt::run_pipeline(ws));
    } else if (sweep->parsed()) {
      auto ws = workspace(o);
      const auto records = mt::sweep_fewshot(ws);
      mt::render_all(records, ws.config().out_dir / "sweep" / "report", mt::load_anchors(o.anchors));
      std::cout << mt::render_table(records);
    } else if (render->parsed()) {
      const auto cfg = resolve(o);
      const auto records = input_records(o, cfg);
      const auto anchors = o.anchors.empty() ? std::vector<mt::AnchorPoint>{} : mt::load_anchors(o.anchors);
      mt::render_all(records, cfg.out_dir / (o.sweep ? "sweep/report" : "report"), anchors);
      std::cout << mt::render_table(records);
    } else if (compare->parsed()) {
      const auto cfg = resolve(o);
      const auto cmp = mt::compare_strategies(input_records(o, cfg));
      std::cout << mt::render_comparison(cmp);
    }
  } catch (const mt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
