// synth.hpp
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

#pragma once

#include <cstdint>

#include "slu/corpus.hpp"

namespace slu {

// Template-grammar generator standing in for the public SLU benchmarks at
// desk scale. Each intent owns carrier templates with slot placeholders;
// every slot is introduced by a type-specific trigger word and filled from a
// shared value lexicon, so the slot label is only recoverable from context.
struct SynthGrammarConfig {
  std::size_t n_intents = 5;
  std::size_t n_slot_types = 12;
  std::size_t values_per_slot = 20;
  std::size_t templates_per_intent = 8;
  std::size_t max_slots_per_template = 5;  // must be >= 3
  std::size_t n_train = 3000;
  std::size_t n_test = 500;
  std::uint64_t seed = 0;
};

struct SynthResult {
  Corpus train;
  Corpus test;
};

SynthResult synth_generate(const SynthGrammarConfig& cfg);

SynthGrammarConfig synth_config_from_json(const std::string& json_text);
std::string synth_config_to_json(const SynthGrammarConfig& cfg);

}  // namespace slu
