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
#include "mt/decode.hpp"
#include "mt/text.hpp"
#include "mt/train.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace mt;
using mt::testing::random_scorer;

namespace {

constexpr TokenId kEos = 1;

struct Trained {
  Vocabulary vocab;
  ModelParams<float> params;
  std::vector<Pair> pairs;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained x;
    const auto reports = synth_corpus(31, Style::kRadiology, 150);
    std::vector<std::string> texts;
    for (const auto& r : reports) texts.push_back(midtrain_sequence(r));
    x.vocab = train_vocab(texts, 512, 32);
    for (const auto& r : reports) x.pairs.push_back({x.vocab.encode(r.findings), x.vocab.encode(r.impression)});
    auto cfg = finetune_preset();
    cfg.total_steps = 150;
    cfg.batch_size = 8;
    cfg.max_lr = cfg.min_lr = 2e-3;
    const std::vector<Pair> train(x.pairs.begin(), x.pairs.begin() + 100);
    x.params = run_stage(Checkpoint::fresh(toy_preset(x.vocab.size()), 3), cfg, StageData::supervised(train))
                   .checkpoint.params;
    return x;
  }();
  return t;
}

}  // namespace

TEST_CASE("synthetic table where greedy is suboptimal") {
  // vocab: 0 pad, 1 eos, 2, 3. eos and pad are nearly impossible.
  const double tiny = std::log(1e-12);
  const StepScorer table = [&](std::span<const TokenId> prefix) -> std::vector<double> {
    if (prefix.empty()) return {tiny, tiny, std::log(0.6), std::log(0.4)};
    if (prefix[0] == 2) return {tiny, tiny, std::log(0.4), std::log(0.4)};
    return {tiny, tiny, std::log(0.1), std::log(0.9)};
  };
  const auto g = greedy_search(table, 3);
  CHECK(g.tokens == std::vector<TokenId>{2, 2, 2});
  const auto b = beam_search(table, 2, 3, 1.0);
  CHECK(b.tokens == std::vector<TokenId>{3, 3, 3});
  CHECK(b.logprob > g.logprob);
  CHECK(b.logprob == doctest::Approx(std::log(0.4 * 0.9 * 0.9)).epsilon(1e-6));
  const auto e = mt::testing::exhaustive_search(table, 4, kEos, 3, 1.0);
  CHECK(e.tokens == b.tokens);
}

TEST_CASE("full-width beam equals exhaustive search") {
  for (TokenId vocab : {3, 4, 6}) {
    for (std::size_t max_len : {1u, 2u, 3u, 4u}) {
      if (vocab == 6 && max_len == 4) continue;  // single seed below, it is slow
      const auto width = static_cast<std::size_t>(std::pow(vocab, max_len));
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto scorer = random_scorer(seed * 131 + static_cast<std::uint64_t>(vocab), vocab);
        for (double penalty : {0.0, 1.0}) {
          const auto b = beam_search(scorer, width, max_len, penalty);
          const auto e = mt::testing::exhaustive_search(scorer, vocab, kEos, max_len, penalty);
          INFO("V=" << vocab << " L=" << max_len << " seed " << seed << " penalty " << penalty);
          CHECK(b.score(penalty) == doctest::Approx(e.score(penalty)).epsilon(1e-12));
          CHECK(b.tokens == e.tokens);
        }
      }
    }
  }
  const auto scorer = random_scorer(99, 6);
  CHECK(beam_search(scorer, 1296, 4, 1.0).tokens == mt::testing::exhaustive_search(scorer, 6, kEos, 4, 1.0).tokens);
}

TEST_CASE("beam of one is greedy") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto scorer = random_scorer(seed, 8, 1.0);
    CHECK(beam_search(scorer, 1, 12, 1.0).tokens == greedy_search(scorer, 12).tokens);
  }
}

TEST_CASE("no hypothesis grows past eos") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inner = random_scorer(seed, 5, 1.0);
    bool extended = false;
    const StepScorer guard = [&](std::span<const TokenId> prefix) {
      if (std::find(prefix.begin(), prefix.end(), kEos) != prefix.end()) extended = true;
      return inner(prefix);
    };
    const auto h = beam_search(guard, 4, 10, 1.0);
    CHECK_FALSE(extended);
    const auto eos_at = std::find(h.tokens.begin(), h.tokens.end(), kEos);
    CHECK((eos_at == h.tokens.end() || eos_at + 1 == h.tokens.end()));
    CHECK(h.tokens.size() <= 10);
  }
}

TEST_CASE("beam argument checks and length caps") {
  const auto scorer = random_scorer(1, 5);
  CHECK_THROWS_AS(beam_search(scorer, 0, 5, 1.0), ContractError);
  CHECK(greedy_search(scorer, 1).tokens.size() == 1);
  CHECK(beam_search(scorer, 3, 1, 1.0).tokens.size() == 1);
  CHECK(greedy_search(scorer, 0).tokens.empty());
}

TEST_CASE("model decoding") {
  const auto& t = trained();
  const auto& src = t.pairs[0].src;
  CHECK(greedy(t.params, src, 20) == greedy(t.params, src, 20));
  CHECK(greedy(t.params, src, 1).size() <= 1);
  CHECK_THROWS_AS(greedy(t.params, std::vector<TokenId>{}, 5), ContractError);
  CHECK_THROWS_AS(beam(t.params, src, 0, 5), ContractError);

  // The cached-encoder scorer agrees with a full forward pass.
  const auto scorer = model_scorer(t.params, src);
  const std::vector<TokenId> prefix{t.pairs[0].tgt[0], t.pairs[0].tgt[1]};
  const auto lp = scorer(prefix);
  const auto full = forward_logits(t.params, src, std::vector<TokenId>{0, prefix[0], prefix[1]});
  const auto row = full.values().row(2).cast<double>();
  const double lse = std::log((row.array() - row.maxCoeff()).exp().sum()) + row.maxCoeff();
  for (Index i = 0; i < row.size(); i += 37) CHECK(lp[static_cast<std::size_t>(i)] == doctest::Approx(row(i) - lse).epsilon(1e-5));
}

TEST_CASE("beam against greedy on a trained model") {
  const auto& t = trained();
  int beam_not_worse = 0, one_equals_greedy = 0;
  int monotone = 0;
  for (std::size_t i = 100; i < 150; ++i) {
    const auto scorer = model_scorer(t.params, t.pairs[i].src);
    const auto g = greedy_search(scorer, 32);
    const auto b1 = beam_search(scorer, 1, 32, 1.0);
    const auto b4 = beam_search(scorer, 4, 32, 1.0);
    one_equals_greedy += b1.tokens == g.tokens;
    beam_not_worse += b4.score(1.0) >= g.score(1.0) - 1e-9;
    double prev = -1e300;
    bool mono = true;
    for (std::size_t k : {1u, 2u, 4u, 8u}) {
      const double s = beam_search(scorer, k, 32, 1.0).score(1.0);
      mono = mono && s >= prev - 1e-9;
      prev = s;
    }
    monotone += mono;
  }
  MESSAGE("beam(4) >= greedy: " << beam_not_worse << "/50, monotone in k: " << monotone << "/50");
  CHECK(one_equals_greedy == 50);
  CHECK(beam_not_worse == 50);
  CHECK(monotone == 50);
}

TEST_CASE("overfitted model reproduces its training target") {
  const auto& t = trained();
  auto cfg = finetune_preset();
  cfg.total_steps = 200;
  cfg.batch_size = 1;
  cfg.max_lr = cfg.min_lr = 3e-3;
  const auto& pair = t.pairs[120];
  const auto fitted = run_stage(Checkpoint::fresh(toy_preset(t.vocab.size()), 9), cfg, StageData::supervised({pair}))
                          .checkpoint.params;
  CHECK(greedy(fitted, pair.src, 64) == pair.tgt);
  CHECK(beam(fitted, pair.src, 4, 64) == pair.tgt);
}
