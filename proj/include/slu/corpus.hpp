// corpus.hpp
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

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slu/errors.hpp"

namespace slu {

// Reserved vocabulary symbols. PAD/UNK/CLS are always present in the token
// vocabulary, "O" in the slot vocabulary.
inline constexpr const char* kPadToken = "PAD";
inline constexpr const char* kUnkToken = "UNK";
inline constexpr const char* kClsToken = "CLS";
inline constexpr const char* kOutsideLabel = "O";

// One sample: parallel token/IOB2-label sequences plus an intent label.
struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::string> slot_labels;
  std::string intent;

  bool operator==(const Utterance&) const = default;
};

// Maximal span of one slot instance. `end` is exclusive; `value` is the
// space-joined token substring.
struct SlotSpan {
  std::string slot_type;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string value;

  bool operator==(const SlotSpan&) const = default;
};

// Set of distinct slot types occurring in one utterance.
using SlotCombination = std::set<std::string>;

// slot_type -> distinct observed value strings.
using ValuePool = std::map<std::string, std::set<std::string>>;

struct ParseOptions {
  bool lowercase = true;     // mirror the uncased setting
  bool lenient_iob = false;  // repair bare I-t to B-t instead of failing
};

// Ordered, validated collection of utterances with derived vocabularies.
// Immutable after construction; safe to share across threads.
class Corpus {
 public:
  Corpus() = default;

  // Validates every utterance and derives the vocabularies.
  static Corpus from_utterances(std::vector<Utterance> utterances);

  const std::vector<Utterance>& utterances() const { return utterances_; }
  const Utterance& operator[](std::size_t i) const { return utterances_[i]; }
  std::size_t size() const { return utterances_.size(); }
  bool empty() const { return utterances_.empty(); }

  const std::set<std::string>& token_vocab() const { return token_vocab_; }
  const std::set<std::string>& slot_vocab() const { return slot_vocab_; }
  const std::set<std::string>& intent_vocab() const { return intent_vocab_; }

 private:
  std::vector<Utterance> utterances_;
  std::set<std::string> token_vocab_;
  std::set<std::string> slot_vocab_;
  std::set<std::string> intent_vocab_;
};

// Throws ParseError on any invariant violation. `line` is used in messages
// (1-based); pass 0 for programmatically built utterances.
void validate_utterance(const Utterance& u, std::size_t line = 0);

// Parses the three-file corpus format from in-memory text. Inputs are the
// contents of seq.in (space-separated tokens), seq.out (space-separated IOB
// labels) and label (one intent per line).
Corpus parse_corpus(const std::string& seq_in_text, const std::string& seq_out_text,
                    const std::string& label_text, const ParseOptions& options = {});

struct CorpusText {
  std::string seq_in;
  std::string seq_out;
  std::string label;
};

// Inverse of parse_corpus: newline-normalized three-file text.
CorpusText serialize_corpus(const Corpus& corpus);

// JSON-lines export: one object per utterance with fields tokens/labels/intent.
std::string corpus_to_jsonl(const Corpus& corpus);

// Directory-based three-file I/O (seq.in, seq.out, label).
Corpus load_corpus_dir(const std::filesystem::path& dir, const ParseOptions& options = {});
void write_corpus_dir(const Corpus& corpus, const std::filesystem::path& dir);

// Set of types t such that a B-t label occurs in the utterance.
SlotCombination slot_combination(const Utterance& u);

// Number of slot instances (B- labels), counting duplicates of one type.
std::size_t slot_count(const Utterance& u);

// Maximal left-to-right spans covering every B-/I- label exactly once.
std::vector<SlotSpan> slot_spans(const Utterance& u);
std::vector<SlotSpan> slot_spans_from_labels(const std::vector<std::string>& labels,
                                             const std::vector<std::string>& tokens);

// Distinct span values per slot type over the whole corpus.
ValuePool value_pool(const Corpus& corpus);

// Label without its 2-character B-/I- prefix.
std::string slot_type_of_label(const std::string& label);

}  // namespace slu
