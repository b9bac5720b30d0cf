// synth_test.cpp
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

#include "slu/synth.hpp"

using namespace slu;

TEST_CASE("generation is deterministic") {
  SynthGrammarConfig cfg;
  cfg.n_train = 200;
  cfg.n_test = 50;
  cfg.seed = 12;
  SynthResult a = synth_generate(cfg);
  SynthResult b = synth_generate(cfg);
  CHECK(serialize_corpus(a.train).seq_in == serialize_corpus(b.train).seq_in);
  CHECK(serialize_corpus(a.train).seq_out == serialize_corpus(b.train).seq_out);
  CHECK(serialize_corpus(a.test).seq_in == serialize_corpus(b.test).seq_in);
}

TEST_CASE("n_train = 0 yields a valid empty training corpus") {
  SynthGrammarConfig cfg;
  cfg.n_train = 0;
  cfg.n_test = 10;
  SynthResult r = synth_generate(cfg);
  CHECK(r.train.empty());
  CHECK(r.test.size() == 10);
  CHECK(serialize_corpus(r.train).seq_in.empty());
}

TEST_CASE("every generated utterance survives a parse round trip") {
  SynthGrammarConfig cfg;
  cfg.n_train = 500;
  cfg.n_test = 100;
  cfg.seed = 4;
  SynthResult r = synth_generate(cfg);
  for (const Corpus* c : {&r.train, &r.test}) {
    CorpusText text = serialize_corpus(*c);
    Corpus parsed = parse_corpus(text.seq_in, text.seq_out, text.label);
    CHECK(parsed.size() == c->size());
    CorpusText again = serialize_corpus(parsed);
    CHECK(again.seq_in == text.seq_in);
    CHECK(again.seq_out == text.seq_out);
    CHECK(again.label == text.label);
  }
}

TEST_CASE("slot counts span 1..max_slots_per_template") {
  SynthGrammarConfig cfg;
  cfg.n_train = 1000;
  cfg.n_test = 100;
  cfg.seed = 8;
  SynthResult r = synth_generate(cfg);
  std::set<std::size_t> counts;
  for (const auto& u : r.train.utterances()) counts.insert(slot_count(u));
  for (std::size_t k = 1; k <= cfg.max_slots_per_template; ++k) {
    CHECK(counts.count(k) == 1);
  }
}

TEST_CASE("train and test are disjoint at the utterance level") {
  SynthGrammarConfig cfg;
  cfg.n_train = 300;
  cfg.n_test = 100;
  cfg.seed = 15;
  SynthResult r = synth_generate(cfg);
  std::set<std::string> train_keys;
  for (const auto& u : r.train.utterances()) {
    std::string key = u.intent;
    for (const auto& t : u.tokens) key += " " + t;
    train_keys.insert(key);
  }
  for (const auto& u : r.test.utterances()) {
    std::string key = u.intent;
    for (const auto& t : u.tokens) key += " " + t;
    CHECK(train_keys.count(key) == 0);
  }
}

TEST_CASE("every slot type appears in low-slot-count utterances") {
  SynthGrammarConfig cfg;
  cfg.n_train = 2000;
  cfg.n_test = 100;
  cfg.seed = 2;
  SynthResult r = synth_generate(cfg);
  std::set<std::string> covered;
  for (const auto& u : r.train.utterances()) {
    if (slot_count(u) > 2) continue;
    for (const auto& t : slot_combination(u)) covered.insert(t);
  }
  CHECK(covered.size() == cfg.n_slot_types);
}

TEST_CASE("invalid configs are rejected") {
  SynthGrammarConfig cfg;
  cfg.max_slots_per_template = 2;
  CHECK_THROWS_AS(synth_generate(cfg), ModelError);
  SynthGrammarConfig cfg2;
  cfg2.n_intents = 0;
  CHECK_THROWS_AS(synth_generate(cfg2), ModelError);
}

TEST_CASE("config json round trip") {
  SynthGrammarConfig cfg;
  cfg.n_train = 123;
  cfg.seed = 99;
  SynthGrammarConfig back = synth_config_from_json(synth_config_to_json(cfg));
  CHECK(back.n_train == 123);
  CHECK(back.seed == 99);
  CHECK(back.n_slot_types == cfg.n_slot_types);
}
