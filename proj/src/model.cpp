// Copyright 2026 The Midtrain Lab Authors.
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

#include "mt/model.hpp"

#include <algorithm>
#include <sstream>

namespace mt {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("model config: " + msg); };
  if (vocab_size < 4) fail("vocab_size must be at least 4");
  if (d_model <= 0 || n_heads <= 0 || d_ff <= 0) fail("dimensions must be positive");
  if (d_model % n_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (n_enc_layers < 1 || n_dec_layers < 1) fail("need at least one encoder and one decoder layer");
  if (max_context < 1 || max_context > 512) fail("max_context must lie in [1, 512]");
  if (rel_pos_buckets < 4 || rel_pos_max_distance < rel_pos_buckets / 2) fail("bad relative position settings");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "vocab_size=" << vocab_size << '\n'
     << "d_model=" << d_model << '\n'
     << "n_heads=" << n_heads << '\n'
     << "d_ff=" << d_ff << '\n'
     << "n_enc_layers=" << n_enc_layers << '\n'
     << "n_dec_layers=" << n_dec_layers << '\n'
     << "max_context=" << max_context << '\n'
     << "rel_pos_buckets=" << rel_pos_buckets << '\n'
     << "rel_pos_max_distance=" << rel_pos_max_distance << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig cfg;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("model config line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const long long value = std::stoll(line.substr(eq + 1));
    if (key == "vocab_size") cfg.vocab_size = static_cast<TokenId>(value);
    else if (key == "d_model") cfg.d_model = value;
    else if (key == "n_heads") cfg.n_heads = value;
    else if (key == "d_ff") cfg.d_ff = value;
    else if (key == "n_enc_layers") cfg.n_enc_layers = value;
    else if (key == "n_dec_layers") cfg.n_dec_layers = value;
    else if (key == "max_context") cfg.max_context = value;
    else if (key == "rel_pos_buckets") cfg.rel_pos_buckets = value;
    else if (key == "rel_pos_max_distance") cfg.rel_pos_max_distance = value;
    else throw std::invalid_argument("unknown model config key: " + key);
  }
  cfg.validate();
  return cfg;
}

ModelConfig toy_preset(TokenId vocab_size) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = 64;
  cfg.n_heads = 4;
  cfg.d_ff = 256;
  cfg.n_enc_layers = 2;
  cfg.n_dec_layers = 2;
  return cfg;
}

ModelConfig preset_by_name(std::string_view name) {
  if (name == "toy") return toy_preset();
  ModelConfig cfg;
  cfg.vocab_size = 32128;
  if (name == "base") {
    cfg.d_model = 768;
    cfg.n_heads = 12;
    cfg.d_ff = 3072;
    cfg.n_enc_layers = cfg.n_dec_layers = 12;
  } else if (name == "large") {
    cfg.d_model = 1024;
    cfg.n_heads = 16;
    cfg.d_ff = 4096;
    cfg.n_enc_layers = cfg.n_dec_layers = 24;
  } else if (name == "xl") {
    cfg.d_model = 2048;
    cfg.n_heads = 32;
    cfg.d_ff = 8192;
    cfg.n_enc_layers = cfg.n_dec_layers = 24;
  } else {
    throw std::invalid_argument("unknown model preset '" + std::string(name) + "' (toy|base|large|xl)");
  }
  return cfg;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const Index d = cfg.d_model;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("shared.embedding", Shape{cfg.vocab_size, d});
  out.emplace_back("encoder.rel_bias", Shape{cfg.rel_pos_buckets, cfg.n_heads});
  auto attn = [&](const std::string& pre) {
    for (const char* m : {".q", ".k", ".v", ".o"}) out.emplace_back(pre + m, Shape{d, d});
  };
  auto ff = [&](const std::string& pre) {
    out.emplace_back(pre + ".wi", Shape{d, cfg.d_ff});
    out.emplace_back(pre + ".wo", Shape{cfg.d_ff, d});
  };
  for (Index l = 0; l < cfg.n_enc_layers; ++l) {
    const std::string pre = "encoder.layer" + std::to_string(l);
    out.emplace_back(pre + ".attn_norm", Shape{d});
    attn(pre + ".attn");
    out.emplace_back(pre + ".ff_norm", Shape{d});
    ff(pre + ".ff");
  }
  out.emplace_back("encoder.final_norm", Shape{d});
  out.emplace_back("decoder.rel_bias", Shape{cfg.rel_pos_buckets, cfg.n_heads});
  for (Index l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string pre = "decoder.layer" + std::to_string(l);
    out.emplace_back(pre + ".self_norm", Shape{d});
    attn(pre + ".self");
    out.emplace_back(pre + ".cross_norm", Shape{d});
    attn(pre + ".cross");
    out.emplace_back(pre + ".ff_norm", Shape{d});
    ff(pre + ".ff");
  }
  out.emplace_back("decoder.final_norm", Shape{d});
  return out;
}

std::int64_t parameter_count(const ModelConfig& cfg) {
  std::int64_t total = 0;
  for (const auto& [name, shape] : parameter_shapes(cfg)) total += element_count(shape);
  return total;
}

Index relative_position_bucket(Index relative, bool bidirectional, Index num_buckets, Index max_distance) {
  Index bucket = 0;
  Index n = -relative;
  if (bidirectional) {
    num_buckets /= 2;
    if (n < 0) bucket += num_buckets;
    n = n < 0 ? -n : n;
  } else {
    n = std::max<Index>(n, 0);
  }
  const Index max_exact = num_buckets / 2;
  if (n < max_exact) return bucket + n;
  const double scaled = std::log(static_cast<double>(n) / static_cast<double>(max_exact)) /
                        std::log(static_cast<double>(max_distance) / static_cast<double>(max_exact)) *
                        static_cast<double>(num_buckets - max_exact);
  const Index large = std::min<Index>(max_exact + static_cast<Index>(scaled), num_buckets - 1);
  return bucket + large;
}

ShiftedTarget shift_target(std::span<const TokenId> tgt, TokenId pad_id, TokenId eos_id) {
  ShiftedTarget s;
  s.decoder_input.reserve(tgt.size() + 1);
  s.decoder_input.push_back(pad_id);
  s.decoder_input.insert(s.decoder_input.end(), tgt.begin(), tgt.end());
  s.labels.assign(tgt.begin(), tgt.end());
  s.labels.push_back(eos_id);
  return s;
}

}  // namespace mt
