// split.cpp
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

#include "slu/split.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace slu {

namespace {

std::string combination_to_string(const SlotCombination& c) {
  std::string out = "{";
  for (const std::string& t : c) {
    if (out.size() > 1) out += ',';
    out += t;
  }
  out += '}';
  return out;
}

std::set<SlotCombination> combinations_of(const Corpus& corpus) {
  std::set<SlotCombination> combos;
  for (const Utterance& u : corpus.utterances()) combos.insert(slot_combination(u));
  return combos;
}

// Applies OOV substitution to every test utterance and finalizes the report.
SplitResult finalize(std::vector<Utterance> train_out, std::vector<Utterance> test_out,
                     const SplitConfig& cfg, std::size_t dropped_test,
                     std::size_t max_train_slots) {
  if (train_out.empty()) {
    throw SplitError(SplitError::Kind::EmptyResult, "",
                     "split produced an empty training set");
  }
  if (test_out.empty()) {
    throw SplitError(SplitError::Kind::EmptyResult, "",
                     "split produced an empty test set");
  }

  SplitResult result;
  result.train = Corpus::from_utterances(std::move(train_out));

  std::size_t substituted = 0;
  if (cfg.oov_substitution) {
    ValuePool pool = value_pool(result.train);
    Rng root(cfg.seed);
    for (std::size_t i = 0; i < test_out.size(); ++i) {
      Rng child = root.split(i);
      test_out[i] = substitute_oov(test_out[i], pool, child, &substituted);
    }
  }
  result.test = Corpus::from_utterances(std::move(test_out));

  SplitReport& report = result.report;
  report.train_size = result.train.size();
  report.test_size = result.test.size();
  std::set<SlotCombination> train_combos = combinations_of(result.train);
  report.train_combinations = train_combos.size();
  report.test_combinations = combinations_of(result.test).size();
  report.substituted_spans = substituted;
  report.dropped_test = dropped_test;

  // Exhaustive guarantee check; any hit is recorded as a violation.
  for (std::size_t i = 0; i < result.test.size(); ++i) {
    if (train_combos.count(slot_combination(result.test[i]))) {
      report.violations.push_back(
          "test utterance " + std::to_string(i + 1) + " combination " +
          combination_to_string(slot_combination(result.test[i])) +
          " occurs in training");
    }
  }
  if (cfg.mode == SplitMode::LengthGeneralization && max_train_slots > cfg.k) {
    report.violations.push_back("training utterance exceeds k=" + std::to_string(cfg.k) +
                                " slots (max " + std::to_string(max_train_slots) + ")");
  }
  if (cfg.oov_substitution) {
    ValuePool pool = value_pool(result.train);
    for (std::size_t i = 0; i < result.test.size(); ++i) {
      for (const SlotSpan& span : slot_spans(result.test[i])) {
        auto it = pool.find(span.slot_type);
        if (it == pool.end() || !it->second.count(span.value)) {
          report.violations.push_back("test utterance " + std::to_string(i + 1) +
                                      " span value '" + span.value +
                                      "' not in training pool for type " + span.slot_type);
        }
      }
    }
  }
  return result;
}

}  // namespace

Utterance substitute_oov(const Utterance& u, const ValuePool& pool, Rng& rng,
                         std::size_t* substituted) {
  Utterance out;
  out.intent = u.intent;
  std::vector<SlotSpan> spans = slot_spans(u);
  std::size_t span_idx = 0;
  std::size_t i = 0;
  while (i < u.tokens.size()) {
    if (span_idx < spans.size() && spans[span_idx].start == i) {
      const SlotSpan& span = spans[span_idx];
      auto pool_it = pool.find(span.slot_type);
      bool in_pool = pool_it != pool.end() && pool_it->second.count(span.value) > 0;
      if (in_pool) {
        for (std::size_t t = span.start; t < span.end; ++t) {
          out.tokens.push_back(u.tokens[t]);
          out.slot_labels.push_back(u.slot_labels[t]);
        }
      } else {
        if (pool_it == pool.end() || pool_it->second.empty()) {
          throw SplitError(SplitError::Kind::MissingValuePool, span.slot_type,
                           "no training value available for slot type '" +
                               span.slot_type + "'");
        }
        // Uniform draw, excluding the original value when other options exist.
        std::vector<const std::string*> candidates;
        candidates.reserve(pool_it->second.size());
        for (const std::string& v : pool_it->second) {
          if (v != span.value || pool_it->second.size() == 1) candidates.push_back(&v);
        }
        const std::string& replacement = *candidates[rng.uniform(candidates.size())];
        std::istringstream words(replacement);
        std::string word;
        bool first = true;
        while (words >> word) {
          out.tokens.push_back(word);
          out.slot_labels.push_back((first ? "B-" : "I-") + span.slot_type);
          first = false;
        }
        if (substituted) ++*substituted;
      }
      i = span.end;
      ++span_idx;
    } else {
      out.tokens.push_back(u.tokens[i]);
      out.slot_labels.push_back(u.slot_labels[i]);
      ++i;
    }
  }
  validate_utterance(out);
  return out;
}

SplitResult novel_combination_split(const Corpus& train, const Corpus& test,
                                    const SplitConfig& cfg) {
  std::set<SlotCombination> test_combos = combinations_of(test);

  // (a) Training side: drop utterances whose >=2-type combination occurs in
  // the test set; single-slot utterances are fundamental examples and stay.
  std::vector<Utterance> train_out;
  std::set<SlotCombination> train_combos;
  for (const Utterance& u : train.utterances()) {
    SlotCombination combo = slot_combination(u);
    if (combo.size() >= 2 && test_combos.count(combo)) continue;
    train_combos.insert(combo);
    train_out.push_back(u);
  }

  // (b) Test side: combinations with <2 distinct types cannot be novel
  // (single-slot training utterances are retained); combinations that still
  // occur in the filtered training set are dropped as well.
  std::vector<Utterance> test_out;
  std::size_t dropped = 0;
  for (const Utterance& u : test.utterances()) {
    SlotCombination combo = slot_combination(u);
    if (combo.size() < 2 || train_combos.count(combo)) {
      ++dropped;
      continue;
    }
    test_out.push_back(u);
  }

  return finalize(std::move(train_out), std::move(test_out), cfg, dropped, 0);
}

SplitResult length_split(const Corpus& train, const Corpus& test, const SplitConfig& cfg) {
  if (cfg.k < 1) {
    throw Error("length split requires k >= 1");
  }
  std::vector<Utterance> train_out;
  std::set<SlotCombination> train_combos;
  std::size_t max_slots = 0;
  for (const Utterance& u : train.utterances()) {
    std::size_t n = slot_count(u);
    if (n > cfg.k) continue;
    max_slots = std::max(max_slots, n);
    train_combos.insert(slot_combination(u));
    train_out.push_back(u);
  }

  std::vector<Utterance> test_out;
  std::size_t dropped = 0;
  for (const Utterance& u : test.utterances()) {
    if (train_combos.count(slot_combination(u))) {
      ++dropped;
      continue;
    }
    test_out.push_back(u);
  }

  return finalize(std::move(train_out), std::move(test_out), cfg, dropped, max_slots);
}

std::string report_to_json(const SplitReport& report) {
  nlohmann::json j;
  j["train_size"] = report.train_size;
  j["test_size"] = report.test_size;
  j["train_combinations"] = report.train_combinations;
  j["test_combinations"] = report.test_combinations;
  j["substituted_spans"] = report.substituted_spans;
  j["dropped_test"] = report.dropped_test;
  j["violations"] = report.violations;
  return j.dump(2);
}

void write_split_result(const SplitResult& result, const std::filesystem::path& dir) {
  write_corpus_dir(result.train, dir / "train");
  write_corpus_dir(result.test, dir / "test");
  std::ofstream out(dir / "report.json");
  if (!out) throw Error("cannot write " + (dir / "report.json").string());
  out << report_to_json(result.report) << '\n';
}

}  // namespace slu
