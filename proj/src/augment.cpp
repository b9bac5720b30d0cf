// augment.cpp
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

#include "slu/augment.hpp"

#include <algorithm>
#include <set>
#include <utility>

namespace slu {

Utterance pair_utterances(const Utterance& a, const Utterance& b,
                          const std::string& separator) {
  if (a.intent != b.intent) {
    throw PairError(PairError::Kind::IntentMismatch,
                    "cannot pair utterances with intents '" + a.intent + "' and '" +
                        b.intent + "'");
  }
  if (a == b) {
    throw PairError(PairError::Kind::IdenticalUtterances,
                    "cannot pair an utterance with itself");
  }
  SlotCombination ca = slot_combination(a);
  SlotCombination cb = slot_combination(b);
  for (const std::string& t : ca) {
    if (cb.count(t)) {
      throw PairError(PairError::Kind::OverlappingSlots,
                      "slot type '" + t + "' occurs in both utterances");
    }
  }

  Utterance out;
  out.intent = a.intent;
  out.tokens.reserve(a.tokens.size() + b.tokens.size() + 1);
  out.slot_labels.reserve(out.tokens.capacity());
  out.tokens.insert(out.tokens.end(), a.tokens.begin(), a.tokens.end());
  out.slot_labels.insert(out.slot_labels.end(), a.slot_labels.begin(), a.slot_labels.end());
  out.tokens.push_back(separator);
  out.slot_labels.push_back(kOutsideLabel);
  out.tokens.insert(out.tokens.end(), b.tokens.begin(), b.tokens.end());
  out.slot_labels.insert(out.slot_labels.end(), b.slot_labels.begin(), b.slot_labels.end());
  validate_utterance(out);
  return out;
}

AugmentResult augment_corpus(const Corpus& train, const AugmentConfig& cfg) {
  if (cfg.separator.empty() ||
      cfg.separator.find_first_of(" \t\r\n") != std::string::npos) {
    throw Error("separator must be a single whitespace-free token");
  }
  std::size_t target = cfg.n_pairs.value_or(train.size());

  std::vector<Utterance> out = train.utterances();
  std::set<std::pair<std::size_t, std::size_t>> emitted;
  Rng rng(cfg.seed);

  std::size_t produced = 0;
  bool exhausted = train.size() < 2;
  while (produced < target && !exhausted) {
    bool found = false;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts_per_pair; ++attempt) {
      std::size_t i = rng.uniform(train.size());
      std::size_t j = rng.uniform(train.size());
      if (i == j) continue;
      if (emitted.count({i, j})) continue;
      const Utterance& a = train[i];
      const Utterance& b = train[j];
      if (a.intent != b.intent || a == b) continue;
      SlotCombination ca = slot_combination(a);
      SlotCombination cb = slot_combination(b);
      bool overlap = std::any_of(ca.begin(), ca.end(),
                                 [&](const std::string& t) { return cb.count(t) > 0; });
      if (overlap) continue;
      out.push_back(pair_utterances(a, b, cfg.separator));
      emitted.insert({i, j});
      ++produced;
      found = true;
      break;
    }
    if (!found) exhausted = true;  // eligible pairs rare or gone
  }

  AugmentResult result;
  result.corpus = Corpus::from_utterances(std::move(out));
  result.synthesized = produced;
  result.shortfall = target - produced;
  return result;
}

}  // namespace slu
