// attention.hpp
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

#include <string>
#include <vector>

#include "slu/model.hpp"
#include "slu/train.hpp"

namespace slu {

// Final-layer attention for one utterance: the head-averaged matrix plus the
// per-head stack it was reduced from. Row/column 0 is the CLS position.
struct AttentionDump {
  std::vector<std::string> tokens;  // "CLS" followed by the input tokens
  std::vector<double> matrix;       // [n * n], mean over heads
  AttentionStack per_head;
};

AttentionDump dump_attention(const Model& model, const Vocab& vocab, bool lowercase,
                             const std::string& utterance_text);

// CSV with a token header row and a leading token column; full precision.
std::string attention_to_csv(const AttentionDump& dump);

// {"tokens": [...], "per_head": [h][i][j]}
std::string attention_per_head_json(const AttentionDump& dump);

}  // namespace slu
