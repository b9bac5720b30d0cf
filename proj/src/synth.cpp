// synth.cpp
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

#include "slu/synth.hpp"

#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "slu/errors.hpp"
#include "slu/rng.hpp"

namespace slu {

namespace {

constexpr std::size_t kValueLexicon = 40;  // shared surface forms across types

struct Template {
  std::size_t intent = 0;
  std::vector<std::size_t> slot_types;  // instances, in order
};

void check_config(const SynthGrammarConfig& cfg) {
  if (cfg.n_intents < 1 || cfg.n_slot_types < 1 || cfg.values_per_slot < 1 ||
      cfg.templates_per_intent < 1) {
    throw ModelError(ModelError::Kind::InvalidConfig,
                     "synthetic grammar dimensions must be >= 1");
  }
  if (cfg.max_slots_per_template < 3) {
    throw ModelError(ModelError::Kind::InvalidConfig,
                     "max_slots_per_template must be >= 3 for meaningful length splits");
  }
}

std::string carrier_word(std::size_t intent, std::size_t idx) {
  return "iw" + std::to_string(intent) + "x" + std::to_string(idx);
}

std::string trigger_word(std::size_t type) { return "trg" + std::to_string(type); }

std::string slot_type_name(std::size_t type) { return "st" + std::to_string(type); }

// Value string for (type, value index). Values come from a lexicon shared
// across types, so the same surface token can carry different labels; every
// fourth value is two tokens to exercise multi-token spans.
std::string value_string(const SynthGrammarConfig& cfg, std::size_t type, std::size_t v) {
  (void)cfg;
  std::size_t a = (type * 7 + v * 3) % kValueLexicon;
  if (v % 4 == 3) {
    std::size_t b = (type * 11 + v * 5 + 1) % kValueLexicon;
    return "val" + std::to_string(a) + " val" + std::to_string(b);
  }
  return "val" + std::to_string(a);
}

// The first n_slot_types templates (interleaved across intents) are
// single-slot, one per type, so every type keeps a non-empty value pool
// under both split kinds; the rest cycle through 2..max slots.
std::vector<Template> build_templates(const SynthGrammarConfig& cfg, Rng rng) {
  std::vector<std::size_t> single_types(cfg.n_slot_types);
  for (std::size_t t = 0; t < cfg.n_slot_types; ++t) single_types[t] = t;
  for (std::size_t t = single_types.size(); t > 1; --t) {
    std::size_t j = rng.uniform(t);
    std::swap(single_types[t - 1], single_types[j]);
  }

  std::vector<Template> templates;
  templates.reserve(cfg.n_intents * cfg.templates_per_intent);
  std::size_t counter = 0;
  for (std::size_t t = 0; t < cfg.templates_per_intent; ++t) {
    for (std::size_t intent = 0; intent < cfg.n_intents; ++intent) {
      Template tpl;
      tpl.intent = intent;
      if (counter < single_types.size()) {
        tpl.slot_types.push_back(single_types[counter]);
      } else {
        std::size_t n_slots = 2 + counter % (cfg.max_slots_per_template - 1);
        std::set<std::size_t> used;
        for (std::size_t s = 0; s < n_slots; ++s) {
          std::size_t type = rng.uniform(cfg.n_slot_types);
          // prefer distinct types within one template when possible
          std::size_t guard = 0;
          while (used.count(type) && guard++ < cfg.n_slot_types) {
            type = (type + 1) % cfg.n_slot_types;
          }
          used.insert(type);
          tpl.slot_types.push_back(type);
        }
      }
      ++counter;
      templates.push_back(std::move(tpl));
    }
  }
  return templates;
}

Utterance realize(const SynthGrammarConfig& cfg, const Template& tpl, Rng& rng) {
  Utterance u;
  u.intent = "intent" + std::to_string(tpl.intent);
  auto push_carrier = [&]() {
    u.tokens.push_back(carrier_word(tpl.intent, rng.uniform(6)));
    u.slot_labels.push_back(kOutsideLabel);
  };
  push_carrier();
  push_carrier();
  for (std::size_t s = 0; s < tpl.slot_types.size(); ++s) {
    if (s > 0 && rng.bernoulli(0.3)) push_carrier();
    std::size_t type = tpl.slot_types[s];
    u.tokens.push_back(trigger_word(type));
    u.slot_labels.push_back(kOutsideLabel);
    std::string value = value_string(cfg, type, rng.uniform(cfg.values_per_slot));
    bool first = true;
    std::size_t pos = 0;
    while (pos <= value.size()) {
      std::size_t space = value.find(' ', pos);
      std::string word = value.substr(pos, space == std::string::npos ? std::string::npos
                                                                      : space - pos);
      u.tokens.push_back(word);
      u.slot_labels.push_back((first ? "B-" : "I-") + slot_type_name(type));
      first = false;
      if (space == std::string::npos) break;
      pos = space + 1;
    }
  }
  return u;
}

std::string utterance_key(const Utterance& u) {
  std::string key = u.intent;
  for (std::size_t i = 0; i < u.tokens.size(); ++i) {
    key += '\x01';
    key += u.tokens[i];
    key += '\x02';
    key += u.slot_labels[i];
  }
  return key;
}

}  // namespace

SynthResult synth_generate(const SynthGrammarConfig& cfg) {
  check_config(cfg);
  Rng root(cfg.seed);
  std::vector<Template> templates = build_templates(cfg, root.split(1));

  Rng sampler = root.split(2);
  std::set<std::string> seen;
  std::size_t attempts = 0;
  std::size_t max_attempts = 200 * (cfg.n_train + cfg.n_test + 1);
  auto generate = [&](std::size_t want, bool cover_templates) {
    std::vector<Utterance> out;
    out.reserve(want);
    while (out.size() < want) {
      if (++attempts > max_attempts) {
        throw ModelError(ModelError::Kind::InvalidConfig,
                         "grammar too small to generate " + std::to_string(want) +
                             " distinct utterances");
      }
      // One pass over all templates first, so every value pool is populated.
      const Template& tpl = cover_templates && out.size() < templates.size()
                                ? templates[out.size()]
                                : templates[sampler.uniform(templates.size())];
      Utterance u = realize(cfg, tpl, sampler);
      if (seen.insert(utterance_key(u)).second) out.push_back(std::move(u));
    }
    return out;
  };

  SynthResult result;
  std::vector<Utterance> train = generate(cfg.n_train, true);
  std::vector<Utterance> test = generate(cfg.n_test, false);
  result.train = Corpus::from_utterances(std::move(train));
  result.test = Corpus::from_utterances(std::move(test));
  return result;
}

SynthGrammarConfig synth_config_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  SynthGrammarConfig cfg;
  cfg.n_intents = j.value("n_intents", cfg.n_intents);
  cfg.n_slot_types = j.value("n_slot_types", cfg.n_slot_types);
  cfg.values_per_slot = j.value("values_per_slot", cfg.values_per_slot);
  cfg.templates_per_intent = j.value("templates_per_intent", cfg.templates_per_intent);
  cfg.max_slots_per_template = j.value("max_slots_per_template", cfg.max_slots_per_template);
  cfg.n_train = j.value("n_train", cfg.n_train);
  cfg.n_test = j.value("n_test", cfg.n_test);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

std::string synth_config_to_json(const SynthGrammarConfig& cfg) {
  nlohmann::json j;
  j["n_intents"] = cfg.n_intents;
  j["n_slot_types"] = cfg.n_slot_types;
  j["values_per_slot"] = cfg.values_per_slot;
  j["templates_per_intent"] = cfg.templates_per_intent;
  j["max_slots_per_template"] = cfg.max_slots_per_template;
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

}  // namespace slu
