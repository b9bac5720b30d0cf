// checkpoint.hpp
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

#include <filesystem>

#include "slu/model.hpp"
#include "slu/train.hpp"

namespace slu {

inline constexpr const char* kCheckpointFormat = "slu-checkpoint-v1";

struct LoadedCheckpoint {
  Model model;
  Vocab vocab;
  bool lowercase = true;
};

// Self-describing JSON checkpoint: format tag, config, vocab maps, and all
// parameters as base64 little-endian doubles (exact round trip).
void save_checkpoint(const Model& model, const Vocab& vocab, bool lowercase,
                     const std::filesystem::path& path);

// Throws ModelError(CheckpointFormat) on a bad tag or malformed payload.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace slu
