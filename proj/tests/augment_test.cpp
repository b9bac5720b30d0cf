// augment_test.cpp
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

#include <algorithm>

#include "slu/augment.hpp"
#include "slu/synth.hpp"

using namespace slu;

TEST_CASE("pair_utterances concatenates with an O-labeled separator") {
  Utterance a{{"show", "flights", "to", "boston"}, {"O", "O", "O", "B-to"}, "flight"};
  Utterance b{{"find", "flights", "from", "atlanta"}, {"O", "O", "O", "B-from"}, "flight"};
  Utterance out = pair_utterances(a, b, ".");
  REQUIRE(out.tokens.size() == 9);
  CHECK(out.tokens[4] == ".");
  CHECK(out.slot_labels[4] == "O");
  CHECK(out.slot_labels[3] == "B-to");
  CHECK(out.slot_labels[8] == "B-from");
  CHECK(out.intent == "flight");
  CHECK(slot_count(out) == 2);
  CHECK(slot_count(out) == slot_count(a) + slot_count(b));
}

TEST_CASE("pair_utterances rejects overlapping slot types") {
  Utterance a{{"to", "boston"}, {"O", "B-to"}, "flight"};
  Utterance b{{"to", "denver"}, {"O", "B-to"}, "flight"};
  try {
    pair_utterances(a, b, ".");
    FAIL("expected PairError");
  } catch (const PairError& e) {
    CHECK(e.kind() == PairError::Kind::OverlappingSlots);
  }
}

TEST_CASE("pair_utterances rejects intent mismatch") {
  Utterance a{{"to", "boston"}, {"O", "B-to"}, "flight"};
  Utterance b{{"from", "atlanta"}, {"O", "B-from"}, "hotel"};
  try {
    pair_utterances(a, b, ".");
    FAIL("expected PairError");
  } catch (const PairError& e) {
    CHECK(e.kind() == PairError::Kind::IntentMismatch);
  }
}

TEST_CASE("pair_utterances rejects identical utterances") {
  Utterance a{{"x"}, {"O"}, "flight"};
  try {
    pair_utterances(a, a, ".");
    FAIL("expected PairError");
  } catch (const PairError& e) {
    CHECK(e.kind() == PairError::Kind::IdenticalUtterances);
  }
}

TEST_CASE("n_pairs = 0 returns the input unchanged") {
  Corpus train = Corpus::from_utterances(
      {{{"a"}, {"O"}, "f"}, {{"b", "x"}, {"O", "B-t"}, "f"}});
  AugmentConfig cfg;
  cfg.n_pairs = 0;
  AugmentResult r = augment_corpus(train, cfg);
  CHECK(r.corpus.size() == train.size());
  CHECK(r.synthesized == 0);
  CHECK(r.shortfall == 0);
  CHECK(r.corpus.utterances() == train.utterances());
}

TEST_CASE("no eligible pair means full shortfall") {
  // every utterance shares slot type t
  Corpus train = Corpus::from_utterances({{{"a", "v1"}, {"O", "B-t"}, "f"},
                                          {{"b", "v2"}, {"O", "B-t"}, "f"},
                                          {{"c", "v3"}, {"O", "B-t"}, "f"}});
  AugmentConfig cfg;
  cfg.n_pairs = 10;
  AugmentResult r = augment_corpus(train, cfg);
  CHECK(r.synthesized == 0);
  CHECK(r.shortfall == 10);
  CHECK(r.corpus.size() == 3);
}

TEST_CASE("augmentation is deterministic under a fixed seed") {
  SynthGrammarConfig scfg;
  scfg.n_train = 400;
  scfg.n_test = 50;
  scfg.seed = 3;
  Corpus train = synth_generate(scfg).train;
  AugmentConfig cfg;
  cfg.n_pairs = 500;
  cfg.seed = 77;
  AugmentResult a = augment_corpus(train, cfg);
  AugmentResult b = augment_corpus(train, cfg);
  CorpusText ta = serialize_corpus(a.corpus);
  CorpusText tb = serialize_corpus(b.corpus);
  CHECK(ta.seq_in == tb.seq_in);
  CHECK(ta.seq_out == tb.seq_out);
  CHECK(ta.label == tb.label);
  CHECK(a.synthesized == b.synthesized);
}

TEST_CASE("synthesized samples satisfy the paired-training invariants") {
  SynthGrammarConfig scfg;
  scfg.n_train = 800;
  scfg.n_test = 50;
  scfg.seed = 31;
  Corpus train = synth_generate(scfg).train;
  AugmentConfig cfg;
  cfg.n_pairs = 1200;
  cfg.seed = 5;
  AugmentResult r = augment_corpus(train, cfg);
  REQUIRE(r.synthesized >= 1000);

  // originals preserved verbatim, in order, before synthesized samples
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(r.corpus[i] == train[i]);
  }

  for (std::size_t i = train.size(); i < r.corpus.size(); ++i) {
    const Utterance& u = r.corpus[i];
    CHECK_NOTHROW(validate_utterance(u));
    CHECK(train.intent_vocab().count(u.intent) == 1);
    // separator splits the sample into the two parents
    auto sep = std::find(u.tokens.begin(), u.tokens.end(), ".");
    REQUIRE(sep != u.tokens.end());
    std::size_t cut = static_cast<std::size_t>(sep - u.tokens.begin());
    CHECK(u.slot_labels[cut] == "O");
    Utterance left{{u.tokens.begin(), u.tokens.begin() + cut},
                   {u.slot_labels.begin(), u.slot_labels.begin() + cut},
                   u.intent};
    Utterance right{{u.tokens.begin() + cut + 1, u.tokens.end()},
                    {u.slot_labels.begin() + cut + 1, u.slot_labels.end()},
                    u.intent};
    SlotCombination cl = slot_combination(left), cr = slot_combination(right);
    for (const auto& t : cl) CHECK(cr.count(t) == 0);
    CHECK(slot_combination(u).size() == cl.size() + cr.size());
    CHECK(u.tokens.size() == left.tokens.size() + right.tokens.size() + 1);
  }
}
