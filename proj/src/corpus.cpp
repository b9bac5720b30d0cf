// corpus.cpp
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

#include "slu/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace slu {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) {
    if (current.back() == '\r') current.pop_back();
    lines.push_back(current);
  }
  return lines;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

bool label_shape_ok(const std::string& label) {
  if (label == kOutsideLabel) return true;
  if (label.size() < 3) return false;
  if (label[1] != '-') return false;
  return label[0] == 'B' || label[0] == 'I';
}

// Repairs bare I-t sequences to B-t (lenient mode).
void repair_iob(std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& l = labels[i];
    if (l.size() < 2 || l[0] != 'I') continue;
    bool chained = false;
    if (i > 0) {
      const std::string& prev = labels[i - 1];
      if (prev.size() >= 2 && (prev[0] == 'B' || prev[0] == 'I') &&
          prev.substr(2) == l.substr(2)) {
        chained = true;
      }
    }
    if (!chained) labels[i] = "B" + l.substr(1);
  }
}

}  // namespace

std::string slot_type_of_label(const std::string& label) {
  return label.size() > 2 ? label.substr(2) : std::string();
}

void validate_utterance(const Utterance& u, std::size_t line) {
  if (u.tokens.empty()) {
    throw ParseError(ParseError::Kind::EmptyLine, line, 0,
                     "utterance has no tokens (line " + std::to_string(line) + ")");
  }
  if (u.tokens.size() != u.slot_labels.size()) {
    throw ParseError(ParseError::Kind::TokenLabelLengthMismatch, line, 0,
                     "token/label count mismatch at line " + std::to_string(line) +
                         ": " + std::to_string(u.tokens.size()) + " tokens vs " +
                         std::to_string(u.slot_labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < u.slot_labels.size(); ++i) {
    const std::string& l = u.slot_labels[i];
    if (!label_shape_ok(l)) {
      throw ParseError(ParseError::Kind::InvalidIob, line, i + 1,
                       "malformed label '" + l + "' at line " + std::to_string(line) +
                           " position " + std::to_string(i + 1));
    }
    if (l[0] == 'I') {
      bool chained = false;
      if (i > 0) {
        const std::string& prev = u.slot_labels[i - 1];
        if ((prev[0] == 'B' || prev[0] == 'I') &&
            slot_type_of_label(prev) == slot_type_of_label(l)) {
          chained = true;
        }
      }
      if (!chained) {
        throw ParseError(ParseError::Kind::InvalidIob, line, i + 1,
                         "'" + l + "' without preceding B-/I- of the same type at line " +
                             std::to_string(line) + " position " + std::to_string(i + 1));
      }
    }
  }
}

Corpus Corpus::from_utterances(std::vector<Utterance> utterances) {
  Corpus c;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    validate_utterance(utterances[i], i + 1);
  }
  c.token_vocab_ = {kPadToken, kUnkToken, kClsToken};
  c.slot_vocab_ = {kOutsideLabel};
  for (const Utterance& u : utterances) {
    c.token_vocab_.insert(u.tokens.begin(), u.tokens.end());
    c.slot_vocab_.insert(u.slot_labels.begin(), u.slot_labels.end());
    c.intent_vocab_.insert(u.intent);
  }
  c.utterances_ = std::move(utterances);
  return c;
}

Corpus parse_corpus(const std::string& seq_in_text, const std::string& seq_out_text,
                    const std::string& label_text, const ParseOptions& options) {
  std::vector<std::string> in_lines = split_lines(seq_in_text);
  std::vector<std::string> out_lines = split_lines(seq_out_text);
  std::vector<std::string> label_lines = split_lines(label_text);

  if (in_lines.size() != out_lines.size() || in_lines.size() != label_lines.size()) {
    throw ParseError(ParseError::Kind::LineCountMismatch, 0, 0,
                     "line counts differ: seq.in=" + std::to_string(in_lines.size()) +
                         " seq.out=" + std::to_string(out_lines.size()) +
                         " label=" + std::to_string(label_lines.size()));
  }

  std::vector<Utterance> utterances;
  utterances.reserve(in_lines.size());
  for (std::size_t i = 0; i < in_lines.size(); ++i) {
    std::size_t line = i + 1;
    if (is_blank(in_lines[i]) || is_blank(out_lines[i]) || is_blank(label_lines[i])) {
      throw ParseError(ParseError::Kind::EmptyLine, line, 0,
                       "empty line " + std::to_string(line));
    }
    Utterance u;
    u.tokens = split_tokens(in_lines[i]);
    u.slot_labels = split_tokens(out_lines[i]);
    u.intent = label_lines[i];
    while (!u.intent.empty() && std::isspace(static_cast<unsigned char>(u.intent.back())))
      u.intent.pop_back();
    if (options.lowercase) {
      for (std::string& t : u.tokens) t = lowercase(t);
    }
    if (u.tokens.size() != u.slot_labels.size()) {
      throw ParseError(ParseError::Kind::TokenLabelLengthMismatch, line, 0,
                       "token/label count mismatch at line " + std::to_string(line) +
                           ": " + std::to_string(u.tokens.size()) + " tokens vs " +
                           std::to_string(u.slot_labels.size()) + " labels");
    }
    if (options.lenient_iob) repair_iob(u.slot_labels);
    validate_utterance(u, line);
    utterances.push_back(std::move(u));
  }
  return Corpus::from_utterances(std::move(utterances));
}

CorpusText serialize_corpus(const Corpus& corpus) {
  CorpusText text;
  for (const Utterance& u : corpus.utterances()) {
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      if (i) text.seq_in += ' ';
      text.seq_in += u.tokens[i];
    }
    for (std::size_t i = 0; i < u.slot_labels.size(); ++i) {
      if (i) text.seq_out += ' ';
      text.seq_out += u.slot_labels[i];
    }
    text.seq_in += '\n';
    text.seq_out += '\n';
    text.label += u.intent;
    text.label += '\n';
  }
  return text;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const Utterance& u : corpus.utterances()) {
    nlohmann::json j;
    j["tokens"] = u.tokens;
    j["labels"] = u.slot_labels;
    j["intent"] = u.intent;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Corpus load_corpus_dir(const std::filesystem::path& dir, const ParseOptions& options) {
  return parse_corpus(read_file(dir / "seq.in"), read_file(dir / "seq.out"),
                      read_file(dir / "label"), options);
}

void write_corpus_dir(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CorpusText text = serialize_corpus(corpus);
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << content;
  };
  write("seq.in", text.seq_in);
  write("seq.out", text.seq_out);
  write("label", text.label);
}

SlotCombination slot_combination(const Utterance& u) {
  SlotCombination types;
  for (const std::string& l : u.slot_labels) {
    if (l.size() > 2 && l[0] == 'B') types.insert(slot_type_of_label(l));
  }
  return types;
}

std::size_t slot_count(const Utterance& u) {
  std::size_t n = 0;
  for (const std::string& l : u.slot_labels) {
    if (l.size() > 2 && l[0] == 'B') ++n;
  }
  return n;
}

std::vector<SlotSpan> slot_spans_from_labels(const std::vector<std::string>& labels,
                                             const std::vector<std::string>& tokens) {
  std::vector<SlotSpan> spans;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i].size() > 2 && labels[i][0] == 'B') {
      SlotSpan span;
      span.slot_type = slot_type_of_label(labels[i]);
      span.start = i;
      std::size_t j = i + 1;
      while (j < labels.size() && labels[j].size() > 2 && labels[j][0] == 'I' &&
             slot_type_of_label(labels[j]) == span.slot_type) {
        ++j;
      }
      span.end = j;
      for (std::size_t t = span.start; t < span.end && t < tokens.size(); ++t) {
        if (t > span.start) span.value += ' ';
        span.value += tokens[t];
      }
      spans.push_back(std::move(span));
      i = j;
    } else {
      ++i;
    }
  }
  return spans;
}

std::vector<SlotSpan> slot_spans(const Utterance& u) {
  return slot_spans_from_labels(u.slot_labels, u.tokens);
}

ValuePool value_pool(const Corpus& corpus) {
  ValuePool pool;
  for (const Utterance& u : corpus.utterances()) {
    for (const SlotSpan& span : slot_spans(u)) {
      pool[span.slot_type].insert(span.value);
    }
  }
  return pool;
}

}  // namespace slu
