// attention.cpp
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

#include "slu/attention.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace slu {

AttentionDump dump_attention(const Model& model, const Vocab& vocab, bool lowercase,
                             const std::string& utterance_text) {
  std::istringstream in(utterance_text);
  std::vector<std::string> words;
  std::string word;
  while (in >> word) {
    if (lowercase) {
      std::transform(word.begin(), word.end(), word.begin(),
                     [](unsigned char c) { return std::tolower(c); });
    }
    words.push_back(word);
  }
  if (words.empty()) throw Error("attention dump needs a non-empty utterance");

  std::vector<int> ids(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) ids[i] = vocab.token_id(words[i]);

  std::vector<ForwardOutput> outputs = model.forward({ids}, false, nullptr, nullptr);
  const AttentionStack& attn = outputs[0].attention;

  AttentionDump dump;
  dump.tokens.reserve(words.size() + 1);
  dump.tokens.push_back(kClsToken);
  dump.tokens.insert(dump.tokens.end(), words.begin(), words.end());
  dump.per_head = attn;
  dump.matrix.assign(attn.n * attn.n, 0.0);
  for (std::size_t i = 0; i < attn.n; ++i) {
    for (std::size_t j = 0; j < attn.n; ++j) {
      double sum = 0.0;
      for (std::size_t h = 0; h < attn.n_heads; ++h) sum += attn.at(h, i, j);
      dump.matrix[i * attn.n + j] = sum / static_cast<double>(attn.n_heads);
    }
  }
  return dump;
}

std::string attention_to_csv(const AttentionDump& dump) {
  const std::size_t n = dump.tokens.size();
  std::string out = "token";
  for (const std::string& tok : dump.tokens) {
    out += ',';
    out += tok;
  }
  out += '\n';
  char buf[40];
  for (std::size_t i = 0; i < n; ++i) {
    out += dump.tokens[i];
    for (std::size_t j = 0; j < n; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", dump.matrix[i * n + j]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string attention_per_head_json(const AttentionDump& dump) {
  nlohmann::json j;
  j["tokens"] = dump.tokens;
  const AttentionStack& a = dump.per_head;
  nlohmann::json heads = nlohmann::json::array();
  for (std::size_t h = 0; h < a.n_heads; ++h) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < a.n; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t jj = 0; jj < a.n; ++jj) row.push_back(a.at(h, i, jj));
      rows.push_back(row);
    }
    heads.push_back(rows);
  }
  j["per_head"] = heads;
  return j.dump();
}

}  // namespace slu
