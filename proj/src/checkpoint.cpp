// checkpoint.cpp
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

#include "slu/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace slu {

namespace {

constexpr char kB64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned v = data[i] << 16;
    if (i + 1 < len) v |= data[i + 1] << 8;
    if (i + 2 < len) v |= data[i + 2];
    out.push_back(kB64Chars[(v >> 18) & 0x3F]);
    out.push_back(kB64Chars[(v >> 12) & 0x3F]);
    out.push_back(i + 1 < len ? kB64Chars[(v >> 6) & 0x3F] : '=');
    out.push_back(i + 2 < len ? kB64Chars[v & 0x3F] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  unsigned buffer = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    int v = value_of(c);
    if (v < 0) {
      throw ModelError(ModelError::Kind::CheckpointFormat,
                       "invalid base64 payload in checkpoint");
    }
    buffer = (buffer << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buffer >> bits) & 0xFF));
    }
  }
  return out;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["n_layers"] = cfg.n_layers;
  j["n_heads"] = cfg.n_heads;
  j["d_model"] = cfg.d_model;
  j["d_ff"] = cfg.d_ff;
  j["max_len"] = cfg.max_len;
  j["vocab_size"] = cfg.vocab_size;
  j["n_slot_labels"] = cfg.n_slot_labels;
  j["n_intents"] = cfg.n_intents;
  j["dropout"] = cfg.dropout;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.n_slot_labels = j.at("n_slot_labels").get<int>();
  cfg.n_intents = j.at("n_intents").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  return cfg;
}

}  // namespace

void save_checkpoint(const Model& model, const Vocab& vocab, bool lowercase,
                     const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["model_config"] = config_to_json(model.config());
  j["vocab"] = {{"tokens", vocab.tokens}, {"labels", vocab.labels},
                {"intents", vocab.intents}};
  j["lowercase"] = lowercase;
  const std::vector<double>& params = model.params();
  j["n_params"] = params.size();
  j["params_b64"] = base64_encode(
      reinterpret_cast<const unsigned char*>(params.data()),
      params.size() * sizeof(double));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ModelError(ModelError::Kind::CheckpointFormat,
                     "cannot open checkpoint " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(ModelError::Kind::CheckpointFormat,
                     "checkpoint is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw ModelError(ModelError::Kind::CheckpointFormat,
                     "unrecognized checkpoint format tag");
  }
  LoadedCheckpoint loaded;
  try {
    ModelConfig cfg = config_from_json(j.at("model_config"));
    std::vector<unsigned char> bytes = base64_decode(j.at("params_b64").get<std::string>());
    std::size_t n_params = j.at("n_params").get<std::size_t>();
    if (bytes.size() != n_params * sizeof(double)) {
      throw ModelError(ModelError::Kind::CheckpointFormat,
                       "parameter payload size mismatch");
    }
    std::vector<double> params(n_params);
    std::memcpy(params.data(), bytes.data(), bytes.size());
    loaded.model = Model::from_params(cfg, std::move(params));

    const nlohmann::json& v = j.at("vocab");
    loaded.vocab.tokens = v.at("tokens").get<std::vector<std::string>>();
    loaded.vocab.labels = v.at("labels").get<std::vector<std::string>>();
    loaded.vocab.intents = v.at("intents").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < loaded.vocab.tokens.size(); ++i)
      loaded.vocab.token_ids[loaded.vocab.tokens[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < loaded.vocab.labels.size(); ++i)
      loaded.vocab.label_ids[loaded.vocab.labels[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < loaded.vocab.intents.size(); ++i)
      loaded.vocab.intent_ids[loaded.vocab.intents[i]] = static_cast<int>(i);
    loaded.lowercase = j.value("lowercase", true);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(ModelError::Kind::CheckpointFormat,
                     "malformed checkpoint: " + std::string(e.what()));
  }
  return loaded;
}

}  // namespace slu
