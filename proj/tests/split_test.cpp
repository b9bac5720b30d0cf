// split_test.cpp
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "slu/split.hpp"
#include "slu/synth.hpp"

using namespace slu;

namespace {

// Builds an utterance carrying the given slot types, one single-token span
// each, with a distinguishable value token per (type, value index).
Utterance utt_with_types(const std::vector<std::string>& types, int value = 0,
                         const std::string& intent = "f") {
  Utterance u;
  u.intent = intent;
  u.tokens.push_back("ctx");
  u.slot_labels.push_back("O");
  for (const auto& t : types) {
    u.tokens.push_back(t + "v" + std::to_string(value));
    u.slot_labels.push_back("B-" + t);
  }
  return u;
}

Corpus corpus_of(std::vector<Utterance> utts) {
  return Corpus::from_utterances(std::move(utts));
}

std::set<SlotCombination> combos(const Corpus& c) {
  std::set<SlotCombination> out;
  for (const auto& u : c.utterances()) out.insert(slot_combination(u));
  return out;
}

}  // namespace

TEST_CASE("novel combination split: minimal instance") {
  Corpus train = corpus_of({utt_with_types({"to"}), utt_with_types({"from"}),
                            utt_with_types({"to", "from"})});
  Corpus test = corpus_of({utt_with_types({"to", "from"}, 1)});
  SplitConfig cfg;
  cfg.mode = SplitMode::NovelCombination;

  SplitResult r = novel_combination_split(train, test, cfg);
  CHECK(r.train.size() == 2);
  CHECK(r.test.size() == 1);
  CHECK(combos(r.train).count({"to", "from"}) == 0);
  CHECK(r.report.violations.empty());
}

TEST_CASE("novel combination split drops single-slot test utterances") {
  Corpus train = corpus_of({utt_with_types({"to"}), utt_with_types({"from"}),
                            utt_with_types({"to", "from"})});
  Corpus test = corpus_of({utt_with_types({"to"}, 1), utt_with_types({"to", "from"}, 1)});
  SplitConfig cfg;
  cfg.mode = SplitMode::NovelCombination;

  SplitResult r = novel_combination_split(train, test, cfg);
  CHECK(r.test.size() == 1);
  CHECK(slot_combination(r.test[0]) == SlotCombination{"from", "to"});
  CHECK(r.report.dropped_test == 1);
}

TEST_CASE("exhaustive check over small type universes") {
  // Every train/test corpus over subsets of three types, one utterance per
  // combination: the guarantee must hold and single-slot test utterances
  // must never survive.
  std::vector<SlotCombination> all_combos = {
      {"a"}, {"b"}, {"c"}, {"a", "b"}, {"a", "c"}, {"b", "c"}, {"a", "b", "c"}};
  for (unsigned train_mask = 1; train_mask < 128; ++train_mask) {
    for (unsigned test_mask = 1; test_mask < 128; ++test_mask) {
      std::vector<Utterance> train_utts, test_utts;
      for (std::size_t i = 0; i < all_combos.size(); ++i) {
        std::vector<std::string> types(all_combos[i].begin(), all_combos[i].end());
        if (train_mask & (1u << i)) train_utts.push_back(utt_with_types(types, 0));
        if (test_mask & (1u << i)) test_utts.push_back(utt_with_types(types, 1));
      }
      Corpus train = corpus_of(train_utts);
      Corpus test = corpus_of(test_utts);
      SplitConfig cfg;
      cfg.mode = SplitMode::NovelCombination;
      cfg.oov_substitution = false;  // value pools are disjoint by construction
      try {
        SplitResult r = novel_combination_split(train, test, cfg);
        CHECK(r.report.violations.empty());
        std::set<SlotCombination> train_c = combos(r.train);
        for (const auto& u : r.test.utterances()) {
          CHECK(slot_combination(u).size() >= 2);
          CHECK(train_c.count(slot_combination(u)) == 0);
        }
      } catch (const SplitError& e) {
        CHECK(e.kind() == SplitError::Kind::EmptyResult);
      }
    }
  }
}

TEST_CASE("length split: threshold rule and guarantee") {
  Corpus train = corpus_of({utt_with_types({"a"}), utt_with_types({"a", "b"}),
                            utt_with_types({"a", "b", "c"})});
  Corpus test = corpus_of({utt_with_types({"a", "b", "c"}, 1),
                           utt_with_types({"a", "b"}, 1)});
  SplitConfig cfg;
  cfg.mode = SplitMode::LengthGeneralization;
  cfg.k = 2;
  cfg.oov_substitution = false;

  SplitResult r = length_split(train, test, cfg);
  CHECK(r.train.size() == 2);
  for (const auto& u : r.train.utterances()) CHECK(slot_count(u) <= 2);
  // {a,b} occurs in train', so only the 3-slot test utterance survives.
  CHECK(r.test.size() == 1);
  CHECK(slot_count(r.test[0]) == 3);
  CHECK(r.report.dropped_test == 1);
  CHECK(r.report.violations.empty());
}

TEST_CASE("length split on synthetic corpus keeps longer test utterances") {
  SynthGrammarConfig scfg;
  scfg.n_train = 600;
  scfg.n_test = 200;
  scfg.seed = 5;
  SynthResult synth = synth_generate(scfg);
  SplitConfig cfg;
  cfg.mode = SplitMode::LengthGeneralization;
  cfg.k = 2;
  cfg.seed = 17;

  SplitResult r = length_split(synth.train, synth.test, cfg);
  CHECK(r.report.violations.empty());
  std::size_t max_train = 0, max_test = 0;
  for (const auto& u : r.train.utterances()) max_train = std::max(max_train, slot_count(u));
  for (const auto& u : r.test.utterances()) max_test = std::max(max_test, slot_count(u));
  CHECK(max_train <= 2);
  CHECK(max_test > 2);
}

TEST_CASE("substitute_oov: in-pool values unchanged") {
  ValuePool pool{{"to", {"boston"}}};
  Utterance u{{"go", "boston"}, {"O", "B-to"}, "f"};
  Rng rng(1);
  std::size_t subs = 0;
  Utterance out = substitute_oov(u, pool, rng, &subs);
  CHECK(out == u);
  CHECK(subs == 0);
}

TEST_CASE("substitute_oov: forced single-choice substitution") {
  ValuePool pool{{"to", {"boston"}}};
  Utterance u{{"go", "zzz"}, {"O", "B-to"}, "f"};
  Rng rng(1);
  std::size_t subs = 0;
  Utterance out = substitute_oov(u, pool, rng, &subs);
  CHECK(out.tokens == std::vector<std::string>{"go", "boston"});
  CHECK(out.slot_labels == std::vector<std::string>{"O", "B-to"});
  CHECK(subs == 1);
}

TEST_CASE("substitute_oov: span length can change") {
  ValuePool pool{{"to", {"la"}}};
  Utterance u{{"go", "new", "york", "now"}, {"O", "B-to", "I-to", "O"}, "f"};
  Rng rng(1);
  Utterance out = substitute_oov(u, pool, rng, nullptr);
  CHECK(out.tokens == std::vector<std::string>{"go", "la", "now"});
  CHECK(out.slot_labels == std::vector<std::string>{"O", "B-to", "O"});

  ValuePool pool2{{"to", {"new york city"}}};
  Utterance u2{{"go", "home"}, {"O", "B-to"}, "f"};
  Rng rng2(1);
  Utterance out2 = substitute_oov(u2, pool2, rng2, nullptr);
  CHECK(out2.tokens == std::vector<std::string>{"go", "new", "york", "city"});
  CHECK(out2.slot_labels ==
        std::vector<std::string>{"O", "B-to", "I-to", "I-to"});
}

TEST_CASE("substitute_oov relabeling stays valid IOB under random pools") {
  Rng rng(23);
  static const char* values[] = {"x", "y z", "p q r", "w"};
  for (int iter = 0; iter < 200; ++iter) {
    ValuePool pool;
    pool["t"] = {values[rng.uniform(4)], values[rng.uniform(4)]};
    Utterance u{{"a", "b", "c", "d"}, {"O", "B-t", "I-t", "O"}, "f"};
    u.tokens[1] = "oov" + std::to_string(iter);
    Rng child = rng.split(iter);
    Utterance out = substitute_oov(u, pool, child, nullptr);
    CHECK_NOTHROW(validate_utterance(out));
    // non-slot tokens unchanged
    CHECK(out.tokens.front() == "a");
    CHECK(out.tokens.back() == "d");
  }
}

TEST_CASE("substitute_oov: missing pool raises") {
  ValuePool pool;
  Utterance u{{"go", "zzz"}, {"O", "B-to"}, "f"};
  Rng rng(1);
  try {
    substitute_oov(u, pool, rng, nullptr);
    FAIL("expected SplitError");
  } catch (const SplitError& e) {
    CHECK(e.kind() == SplitError::Kind::MissingValuePool);
    CHECK(e.slot_type() == "to");
  }
}

TEST_CASE("split determinism: identical inputs give identical outputs") {
  SynthGrammarConfig scfg;
  scfg.n_train = 300;
  scfg.n_test = 100;
  scfg.seed = 9;
  SynthResult synth = synth_generate(scfg);
  SplitConfig cfg;
  cfg.mode = SplitMode::NovelCombination;
  cfg.seed = 42;

  SplitResult a = novel_combination_split(synth.train, synth.test, cfg);
  SplitResult b = novel_combination_split(synth.train, synth.test, cfg);
  CorpusText ta = serialize_corpus(a.test);
  CorpusText tb = serialize_corpus(b.test);
  CHECK(ta.seq_in == tb.seq_in);
  CHECK(ta.seq_out == tb.seq_out);
  CHECK(ta.label == tb.label);
  CHECK(report_to_json(a.report) == report_to_json(b.report));
}

TEST_CASE("after substitution every test value is in the train pool") {
  SynthGrammarConfig scfg;
  scfg.n_train = 500;
  scfg.n_test = 150;
  scfg.seed = 21;
  SynthResult synth = synth_generate(scfg);
  for (SplitMode mode : {SplitMode::NovelCombination, SplitMode::LengthGeneralization}) {
    SplitConfig cfg;
    cfg.mode = mode;
    cfg.k = 2;
    cfg.seed = 3;
    SplitResult r = mode == SplitMode::NovelCombination
                        ? novel_combination_split(synth.train, synth.test, cfg)
                        : length_split(synth.train, synth.test, cfg);
    ValuePool pool = value_pool(r.train);
    for (const auto& u : r.test.utterances()) {
      for (const auto& span : slot_spans(u)) {
        CHECK(pool[span.slot_type].count(span.value) == 1);
      }
    }
    // train' is a subset of train
    std::set<std::string> train_keys;
    for (const auto& u : synth.train.utterances()) {
      CorpusText t = serialize_corpus(Corpus::from_utterances({u}));
      train_keys.insert(t.seq_in + "|" + t.seq_out + "|" + t.label);
    }
    for (const auto& u : r.train.utterances()) {
      CorpusText t = serialize_corpus(Corpus::from_utterances({u}));
      CHECK(train_keys.count(t.seq_in + "|" + t.seq_out + "|" + t.label) == 1);
    }
  }
}

TEST_CASE("empty result raises") {
  Corpus train = corpus_of({utt_with_types({"a", "b"})});
  Corpus test = corpus_of({utt_with_types({"a", "b"}, 1)});
  SplitConfig cfg;
  cfg.mode = SplitMode::NovelCombination;
  // the only training utterance has the test combination -> empty train side
  CHECK_THROWS_AS(novel_combination_split(train, test, cfg), SplitError);
}
