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

#include "oracles.hpp"
#include "mt/corpus.hpp"
#include "mt/metrics.hpp"
#include "mt/text.hpp"
#include "mt/train.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace mt;
using mt::testing::brute_lcs;
using mt::testing::join;
using mt::testing::meteor_formula;

namespace {

struct Encoder {
  Vocabulary vocab;
  ModelParams<float> params;
};

const Encoder& encoder() {
  static const Encoder e = [] {
    Encoder x;
    const auto reports = synth_corpus(5, Style::kRadiology, 200);
    std::vector<std::string> texts;
    for (const auto& r : reports) texts.push_back(midtrain_sequence(r));
    x.vocab = train_vocab(texts, 512, 32);
    std::vector<std::vector<TokenId>> seqs;
    for (const auto& t : texts) seqs.push_back(x.vocab.encode(t));
    auto cfg = pretrain_preset();
    cfg.total_steps = 60;
    cfg.batch_size = 8;
    cfg.max_lr = 2e-3;
    cfg.min_lr = 2e-4;
    cfg.num_sentinels = 32;
    x.params = run_stage(Checkpoint::fresh(toy_preset(x.vocab.size()), 1), cfg, StageData::denoise(seqs))
                   .checkpoint.params;
    return x;
  }();
  return e;
}

}  // namespace

TEST_CASE("rouge_l examples") {
  CHECK(rouge_l("No acute process.", "no ACUTE process") == Score{1, 1, 1});
  CHECK(rouge_l("left effusion", "mild cardiomegaly") == Score{0, 0, 0});
  const auto s = rouge_l("the cat sat on mat", "the cat lay on mat");
  CHECK(s.precision == doctest::Approx(0.8));
  CHECK(s.recall == doctest::Approx(0.8));
  CHECK(s.f1 == doctest::Approx(0.8));
  CHECK(rouge_l("", "something") == Score{});
  CHECK(rouge_l("...", "") == Score{});
}

TEST_CASE("rouge_l against brute-force LCS") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> c(1 + rng() % 12), r(1 + rng() % 12);
    for (auto& w : c) w = alphabet[rng() % alphabet.size()];
    for (auto& w : r) w = alphabet[rng() % alphabet.size()];
    const auto l = static_cast<double>(brute_lcs(c, r));
    const Score expected = l == 0 ? Score{} : Score::from_pr(l / c.size(), l / r.size());
    CHECK(lcs_length(c, r) == brute_lcs(c, r));
    CHECK(rouge_l(join(c), join(r)) == expected);

    const auto swapped = rouge_l(join(r), join(c));
    CHECK(swapped.precision == expected.recall);
    CHECK(swapped.recall == expected.precision);
    CHECK(swapped.f1 == expected.f1);
  }
}

TEST_CASE("rouge_l F1 does not drop as the candidate approaches the reference") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> alphabet{"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> c(1 + rng() % 8), r(1 + rng() % 8);
    for (auto& w : c) w = alphabet[rng() % alphabet.size()];
    for (auto& w : r) w = alphabet[rng() % 3];
    double prev = rouge_l(join(c), join(r)).f1;
    for (std::size_t i = 0; i < std::max(c.size(), r.size()); ++i) {
      if (i < r.size() && i < c.size()) c[i] = r[i];
      else if (i < r.size()) c.push_back(r[i]);
      else c.resize(r.size());
      const double f = rouge_l(join(c), join(r)).f1;
      CHECK(f >= prev);
      prev = f;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("stemming") {
  CHECK(stem("cats") == "cat");
  CHECK(stem("running") == "run");
  CHECK(stem("runs") == "run");
  CHECK(stem("opacities") == "opacitie");
  CHECK(stem("stopped") == "stop");
  CHECK(stem("filling") == "fill");
  CHECK(stem("glass") == "glass");
  CHECK(stem("is") == "is");
  CHECK(stem("red") == "red");
}

TEST_CASE("meteor_lite examples") {
  CHECK(meteor_lite("left effusion", "mild cardiomegaly").f1 == 0.0);
  CHECK(meteor_lite("a b c d", "a b c d").f1 == 0.9921875);
  // cats~cat and running~runs both match by stem, in order: m=2, one chunk.
  const double stemmed = meteor_lite("cats running", "cat runs").f1;
  CHECK(stemmed == doctest::Approx(meteor_formula(2, 1, 2, 2)).epsilon(1e-12));
  CHECK(stemmed == doctest::Approx(0.9375).epsilon(1e-12));
  // Swapped word order: two chunks.
  CHECK(meteor_lite("b a", "a b").f1 == doctest::Approx(meteor_formula(2, 2, 2, 2)).epsilon(1e-12));
  CHECK(meteor_lite("", "a").f1 == 0.0);
}

TEST_CASE("meteor_lite against the formula on constructed alignments") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = mt::testing::meteor_case(rng);
    const double expected = mt::testing::meteor_expected(c);
    const auto got = meteor_lite(join(c.candidate), join(c.reference));
    CHECK(std::abs(got.f1 - expected) <= 1e-9);
    CHECK(got.precision == got.f1);
    CHECK(got.f1 >= 0.0);
    CHECK(got.f1 <= 1.0);
  }
}

TEST_CASE("lexicon parsing") {
  const auto lex = EntityLexicon::parse(
      "# comment\nEffusion\npleural effusion = effusion\neffusion  # dup\nfree air\n\n[negation]\nno\nnegative for\n");
  REQUIRE(lex.terms().size() == 3);
  CHECK(lex.terms()[0].tokens == std::vector<std::string>{"free", "air"});
  CHECK(lex.terms()[1].tokens == std::vector<std::string>{"pleural", "effusion"});
  CHECK(lex.terms()[1].canonical == "effusion");
  CHECK(lex.terms()[2].canonical == "effusion");
  CHECK(lex.negations().size() == 2);
  CHECK_THROWS_AS(EntityLexicon::parse("[other]\nx\n"), FormatError);
  CHECK_THROWS_AS(EntityLexicon::parse("= effusion\n"), FormatError);

  const auto file = EntityLexicon::load(MT_SOURCE_DIR "/data/radiology.lex");
  const auto& builtin = EntityLexicon::radiology();
  REQUIRE(file.terms().size() == builtin.terms().size());
  for (std::size_t i = 0; i < file.terms().size(); ++i) {
    CHECK(file.terms()[i].tokens == builtin.terms()[i].tokens);
    CHECK(file.terms()[i].canonical == builtin.terms()[i].canonical);
  }
  for (std::size_t i = 1; i < builtin.terms().size(); ++i) {
    CHECK(builtin.terms()[i - 1].tokens.size() >= builtin.terms()[i].tokens.size());
  }
}

TEST_CASE("entity extraction") {
  const auto& lex = EntityLexicon::radiology();
  using S = std::set<Entity>;
  CHECK(extract_entities("Small left pleural effusion. No pneumothorax.", lex) ==
        S{{"effusion", true}, {"pneumothorax", false}});
  CHECK(extract_entities("No evidence of interstitial pulmonary edema.", lex) == S{{"edema", false}});
  // The cue belongs to the previous sentence.
  CHECK(extract_entities("No pneumothorax. Mild cardiomegaly.", lex) ==
        S{{"pneumothorax", false}, {"cardiomegaly", true}});
  // Cue too far back.
  CHECK(extract_entities("No change in the appearance of cardiomegaly.", lex) == S{{"cardiomegaly", true}});
  CHECK(extract_entities("Lungs clear.", lex).empty());
}

TEST_CASE("entity_f1 examples") {
  const auto& lex = EntityLexicon::radiology();
  const auto s = entity_f1("Effusion. No pneumothorax.", "Effusion. Consolidation.", lex);
  CHECK(s == Score{0.5, 0.5, 0.5});
  CHECK(entity_f1("There is a small effusion and cardiomegaly.", "Effusion. Cardiomegaly present.", lex) ==
        Score{1, 1, 1});
  CHECK(entity_f1("no pleural effusion", "pleural effusion", lex) == Score{0, 0, 0});
  CHECK(entity_f1("Lungs clear.", "Heart normal.", lex) == Score{1, 1, 1});
  CHECK(entity_f1("Lungs clear.", "Effusion.", lex) == Score{0, 0, 0});
}

TEST_CASE("entity_f1 against set overlap on constructed reports") {
  const auto& lex = EntityLexicon::radiology();
  mt::testing::EntityCases cases(lex, 21);
  REQUIRE(cases.vocabulary() >= 10);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = cases.random_set();
    const auto r = cases.random_set();
    const auto ct = cases.render(c), rt = cases.render(r);
    INFO(ct << " || " << rt);
    REQUIRE(extract_entities(ct, lex) == c);
    REQUIRE(extract_entities(rt, lex) == r);
    CHECK(entity_f1(ct, rt, lex) == mt::testing::entity_overlap(c, r));
  }
}

TEST_CASE("embed_score") {
  const auto& e = encoder();
  const std::string text = "Moderate right pleural effusion. Mild cardiomegaly.";
  const auto self = embed_score(text, text, e.params, e.vocab);
  CHECK(self.precision == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(self.recall == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(self.f1 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(embed_score("", text, e.params, e.vocab) == Score{});

  const auto a = embed_score("Left basilar atelectasis.", text, e.params, e.vocab);
  const auto b = embed_score(text, "Left basilar atelectasis.", e.params, e.vocab);
  CHECK(a.precision == b.recall);
  CHECK(a.recall == b.precision);
  CHECK(a.f1 == b.f1);

  const auto reports = synth_corpus(77, Style::kRadiology, 40);
  for (std::size_t i = 0; i + 1 < reports.size(); ++i) {
    const auto s = embed_score(reports[i].impression, reports[i + 1].findings, e.params, e.vocab);
    CHECK(s.precision >= -1.0);
    CHECK(s.precision <= 1.0 + 1e-12);
    CHECK(s.recall >= -1.0);
    CHECK(s.recall <= 1.0 + 1e-12);
    CHECK(s.f1 >= 0.0);
    CHECK(s.f1 <= 1.0 + 1e-12);
  }
  std::string longest(600, 'x');
  for (std::size_t i = 0; i < 600; i += 2) longest[i] = ' ';
  CHECK_THROWS_AS(embed_score(longest, text, e.params, e.vocab), ContractError);
}

TEST_CASE("embed_score ranks paraphrases above unrelated findings") {
  const auto& e = encoder();
  struct Triple {
    std::string anchor, paraphrase, unrelated;
  };
  const std::vector<Triple> triples{
      {"Small left pleural effusion.", "Small left effusion.", "Acute right rib fracture."},
      {"Moderate right pleural effusion.", "Moderate right effusion.", "Mild cardiomegaly."},
      {"Large bilateral pleural effusion.", "Large bilateral effusion.", "Endotracheal tube in standard position."},
      {"Left lower lobe opacity, concerning for pneumonia.", "Left lower lobe pneumonia.", "Marked cardiomegaly."},
      {"Right upper lobe opacity, concerning for pneumonia.", "Right upper lobe pneumonia.",
       "Small left apical pneumothorax."},
      {"Mild interstitial pulmonary edema.", "Mild pulmonary edema.", "Right basilar atelectasis."},
      {"Marked interstitial pulmonary edema.", "Marked pulmonary edema.", "Acute left rib fracture."},
      {"Small left apical pneumothorax.", "Left pneumothorax.", "Moderate cardiomegaly."},
      {"Small right apical pneumothorax.", "Right pneumothorax.", "Mild pulmonary edema."},
      {"Left basilar atelectasis.", "Left basilar atelectasis.", "Large right effusion."},
      {"Bilateral basilar atelectasis.", "Bilateral basilar atelectasis.", "Endotracheal tube in standard position."},
      {"Acute left fifth rib fracture.", "Acute left rib fracture.", "Moderate pulmonary edema."},
      {"Acute right seventh rib fracture.", "Acute right rib fracture.", "Small bilateral effusion."},
      {"8 mm nodule in the left upper lobe.", "Left upper lobe nodule, recommend CT.", "Mild cardiomegaly."},
      {"6 mm nodule in the right upper lobe.", "Right upper lobe nodule, recommend CT.",
       "Acute left rib fracture."},
      {"Endotracheal tube terminates 4 cm above the carina.", "Endotracheal tube in standard position.",
       "Moderate left effusion."},
      {"Mild cardiomegaly.", "Mild cardiomegaly.", "Right lower lobe pneumonia."},
      {"Marked cardiomegaly.", "Marked cardiomegaly.", "Left pneumothorax."},
      {"No pneumothorax. No pleural effusion.", "No acute cardiopulmonary process.", "Marked pulmonary edema."},
      {"Osseous structures intact.", "No acute osseous abnormality.", "Moderate left effusion."},
  };
  int wins = 0;
  for (const auto& t : triples) {
    const double close = embed_score(t.paraphrase, t.anchor, e.params, e.vocab).f1;
    const double far = embed_score(t.unrelated, t.anchor, e.params, e.vocab).f1;
    INFO(t.anchor << ": paraphrase " << close << " unrelated " << far);
    CHECK(close > far);
    wins += close > far;
  }
  CHECK(wins == 20);
}

TEST_CASE("aggregation") {
  const auto& e = encoder();
  const MetricContext ctx{&e.params, &e.vocab};
  const std::vector<std::string> cands{"Small left effusion.", "Mild cardiomegaly.", "No acute process.", ""};
  const std::vector<std::string> refs{"Small left effusion.", "Moderate cardiomegaly.", "Left pneumothorax.", "x"};
  const auto records = score_corpus(cands, refs, ctx);
  REQUIRE(records.size() == 4);
  CHECK(records[0].rouge_l == 1.0);
  CHECK(records[0].entity_f1 == 1.0);
  // No entities on either side counts as agreement.
  CHECK(records[3] == MetricRecord{0, 0, 0, 1});
  for (const auto& r : records) {
    for (double v : {r.rouge_l, r.meteor, r.entity_f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const auto mean = mean_scores(records);
  double rouge = 0;
  for (const auto& r : records) rouge += r.rouge_l;
  CHECK(mean.rouge_l == doctest::Approx(rouge / 4));

  std::mt19937_64 rng(4);
  std::vector<MetricRecord> many;
  for (int i = 0; i < 200; ++i) {
    std::uniform_real_distribution<double> u;
    many.push_back({u(rng), u(rng), u(rng), u(rng)});
  }
  const auto reference = mean_scores(many);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(many.begin(), many.end(), rng);
    CHECK(mean_scores(many) == reference);
  }
  CHECK(mean_scores({}) == MetricRecord{});
  CHECK_THROWS_AS(score_corpus(cands, std::vector<std::string>{"a"}, ctx), ContractError);
  CHECK_THROWS_AS(score_example("a", "b", MetricContext{}), ContractError);
}
