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

#include "mt/train.hpp"

#include "mt/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mt {
namespace {

constexpr std::string_view kMagic = "MTCK";
constexpr std::uint32_t kVersion = 1;

// ---- little-endian writer / reader ----

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw ContractError("checkpoint: string longer than 65535 bytes");
    uint<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str16(name);
    uint<std::uint8_t>(0);
    uint<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (Index d : t.shape()) uint<std::uint32_t>(static_cast<std::uint32_t>(d));
    const float* data = t.data();
    for (Index i = 0; i < t.size(); ++i) uint<std::uint32_t>(std::bit_cast<std::uint32_t>(data[i]));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}
  std::size_t offset() const { return pos_; }
  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw CheckpointFormatError("checkpoint: " + what + " at byte offset " + std::to_string(at));
  }
  std::string_view bytes(std::size_t n) {
    if (buf_.size() - pos_ < n) fail("truncated (need " + std::to_string(n) + " bytes)", pos_);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint() {
    const auto s = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string str16() {
    const auto n = uint<std::uint16_t>();
    return std::string(bytes(n));
  }
  void tensor(const std::string& expected_name, Tensor<float>& dst) {
    const std::size_t at = pos_;
    const std::string name = str16();
    if (name != expected_name) fail("expected tensor '" + expected_name + "', found '" + name + "'", at);
    const std::size_t dtype_at = pos_;
    if (uint<std::uint8_t>() != 0) fail("unsupported dtype for '" + name + "'", dtype_at);
    const std::size_t shape_at = pos_;
    const auto rank = uint<std::uint8_t>();
    Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(uint<std::uint32_t>()));
    if (shape != dst.shape()) {
      fail("tensor '" + name + "' has shape " + to_string(shape) + ", config implies " + to_string(dst.shape()),
           shape_at);
    }
    float* data = dst.mutable_values().data();
    for (Index i = 0; i < dst.size(); ++i) data[i] = std::bit_cast<float>(uint<std::uint32_t>());
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

std::vector<TokenId> truncated(std::span<const TokenId> ids, std::size_t max_len) {
  return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), max_len))};
}

// One training/evaluation example after truncation and corruption. The
// target excludes the trailing eos; nll() appends it.
Pair make_example(const StageConfig& cfg, const StageData& data, std::size_t index, std::uint64_t stream,
                  TokenId vocab_size) {
  if (data.objective == Objective::kSupervised) {
    const auto& p = data.pairs[index];
    return {truncated(p.src, cfg.max_src_len), truncated(p.tgt, cfg.max_tgt_len)};
  }
  const SentinelScheme scheme{vocab_size, cfg.num_sentinels};
  std::mt19937_64 rng(stream);
  auto ex = corrupt(truncated(data.sequences[index], cfg.max_src_len), cfg.corruption_rate, cfg.mean_span, rng, scheme);
  ex.target_ids.pop_back();
  return {std::move(ex.input_ids), std::move(ex.target_ids)};
}

}  // namespace

std::string_view stage_name(StageKind kind) {
  switch (kind) {
    case StageKind::kPretrain:
      return "pretrain";
    case StageKind::kMidtrain:
      return "midtrain";
    case StageKind::kFinetune:
      return "finetune";
  }
  return "?";
}

StageKind parse_stage_kind(std::string_view name) {
  if (name == "pretrain") return StageKind::kPretrain;
  if (name == "midtrain") return StageKind::kMidtrain;
  if (name == "finetune") return StageKind::kFinetune;
  throw std::invalid_argument("unknown stage '" + std::string(name) + "' (pretrain|midtrain|finetune)");
}

std::string_view decay_name(Decay decay) {
  switch (decay) {
    case Decay::kAnnealToMin:
      return "anneal";
    case Decay::kLinearToZero:
      return "linear";
    case Decay::kConstant:
      return "constant";
  }
  return "?";
}

Decay parse_decay(std::string_view name) {
  if (name == "anneal") return Decay::kAnnealToMin;
  if (name == "linear") return Decay::kLinearToZero;
  if (name == "constant") return Decay::kConstant;
  throw std::invalid_argument("unknown decay '" + std::string(name) + "' (anneal|linear|constant)");
}

std::size_t StageConfig::warmup_for(std::size_t total_steps) const {
  // Absolute warmups longer than a short stage are clamped to its length.
  if (warmup_steps) return std::min(*warmup_steps, total_steps);
  return static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

void StageConfig::validate(std::size_t total_steps) const {
  auto fail = [](const std::string& msg) { throw ContractError("stage config: " + msg); };
  if (!(max_lr >= 0.0) || !(min_lr >= 0.0) || min_lr > max_lr) fail("need 0 <= min_lr <= max_lr");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) fail("warmup fraction must lie in [0, 1]");
  if (warmup_for(total_steps) > total_steps) {
    fail("warmup " + std::to_string(warmup_for(total_steps)) + " exceeds total steps " + std::to_string(total_steps));
  }
  if (batch_size == 0) fail("batch_size must be positive");
  if (max_src_len == 0 || max_src_len > 512) fail("max_src_len must lie in [1, 512]");
  if (max_tgt_len == 0 || max_tgt_len > 512) fail("max_tgt_len must lie in [1, 512]");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (clip_norm && !(*clip_norm > 0.0)) fail("clip_norm must be positive");
}

StageConfig pretrain_preset() {
  StageConfig c;
  c.kind = StageKind::kPretrain;
  c.objective = Objective::kDenoise;
  c.max_lr = 1e-4;
  c.min_lr = 1e-5;
  c.warmup_fraction = 0.01;
  c.decay = Decay::kAnnealToMin;
  c.weight_decay = 0.01;
  return c;
}

StageConfig midtrain_preset() {
  StageConfig c;
  c.kind = StageKind::kMidtrain;
  c.objective = Objective::kDenoise;
  c.max_lr = 1e-6;
  c.min_lr = 0.0;
  c.warmup_steps = 200;
  c.decay = Decay::kLinearToZero;
  c.weight_decay = 0.0;
  c.batch_size = 16;
  c.epochs = 2;
  return c;
}

StageConfig finetune_preset() {
  StageConfig c;
  c.kind = StageKind::kFinetune;
  c.objective = Objective::kSupervised;
  c.max_lr = 5e-5;
  c.min_lr = 5e-5;
  c.decay = Decay::kConstant;
  c.weight_decay = 0.0;
  c.batch_size = 16;
  c.max_src_len = 512;
  c.max_tgt_len = 128;
  return c;
}

double lr_at(const StageConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (step > total_steps) {
    throw ContractError("lr_at: step " + std::to_string(step) + " beyond total " + std::to_string(total_steps));
  }
  if (cfg.decay == Decay::kConstant && cfg.warmup_for(total_steps) == 0) return cfg.max_lr;
  const std::size_t warmup = cfg.warmup_for(total_steps);
  if (step < warmup) return cfg.max_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (cfg.decay == Decay::kConstant) return cfg.max_lr;
  const double floor = cfg.decay == Decay::kAnnealToMin ? cfg.min_lr : 0.0;
  const double t = total_steps > warmup
                       ? static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup)
                       : 1.0;
  return std::lerp(cfg.max_lr, floor, t);
}

Checkpoint Checkpoint::fresh(const ModelConfig& cfg, std::uint64_t seed) {
  Checkpoint c;
  c.params = init_params<float>(cfg, seed);
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    c.m.emplace_back(c.params[i].shape());
    c.v.emplace_back(c.params[i].shape());
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic);
  w.uint<std::uint32_t>(kVersion);
  const std::string config = ckpt.config().to_text();
  w.uint<std::uint64_t>(config.size());
  w.bytes(config);
  const auto& names = ckpt.params.names();
  for (std::size_t i = 0; i < names.size(); ++i) w.tensor(names[i], ckpt.params[i]);
  for (std::size_t i = 0; i < names.size(); ++i) w.tensor("m/" + names[i], ckpt.m.at(i));
  for (std::size_t i = 0; i < names.size(); ++i) w.tensor("v/" + names[i], ckpt.v.at(i));
  w.uint<std::uint64_t>(ckpt.step);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ckpt.provenance.size()));
  for (const auto& s : ckpt.provenance) w.str16(s);
  return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != kMagic) r.fail("bad magic (expected MTCK)", 0);
  const std::size_t version_at = r.offset();
  if (const auto v = r.uint<std::uint32_t>(); v != kVersion) {
    r.fail("unsupported version " + std::to_string(v), version_at);
  }
  const std::size_t len_at = r.offset();
  const auto config_len = r.uint<std::uint64_t>();
  if (config_len > bytes.size()) r.fail("config length " + std::to_string(config_len) + " exceeds file", len_at);
  const std::size_t config_at = r.offset();
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_text(r.bytes(static_cast<std::size_t>(config_len)));
  } catch (const CheckpointFormatError&) {
    throw;
  } catch (const std::exception& e) {
    r.fail(std::string("bad model config (") + e.what() + ")", config_at);
  }
  Checkpoint c = Checkpoint::fresh(cfg, 0);
  const auto& names = c.params.names();
  for (std::size_t i = 0; i < names.size(); ++i) r.tensor(names[i], c.params[i]);
  for (std::size_t i = 0; i < names.size(); ++i) r.tensor("m/" + names[i], c.m[i]);
  for (std::size_t i = 0; i < names.size(); ++i) r.tensor("v/" + names[i], c.v[i]);
  c.step = r.uint<std::uint64_t>();
  const std::size_t count_at = r.offset();
  const auto count = r.uint<std::uint32_t>();
  if (count > bytes.size()) r.fail("provenance count " + std::to_string(count) + " exceeds file", count_at);
  for (std::uint32_t i = 0; i < count; ++i) c.provenance.push_back(r.str16());
  if (!r.done()) r.fail("trailing bytes", r.offset());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_checkpoint(ss.str());
}

StageData StageData::denoise(std::vector<std::vector<TokenId>> sequences) {
  StageData d;
  d.objective = Objective::kDenoise;
  d.sequences = std::move(sequences);
  return d;
}

StageData StageData::supervised(std::vector<Pair> pairs) {
  StageData d;
  d.objective = Objective::kSupervised;
  d.pairs = std::move(pairs);
  return d;
}

std::size_t steps_for(const StageConfig& cfg, std::size_t data_size) {
  if (data_size == 0) return 0;
  if (cfg.total_steps) return *cfg.total_steps;
  const std::size_t batch = std::min(cfg.batch_size, data_size);
  return cfg.epochs * (data_size / batch);
}

double evaluate_loss(const ModelParams<float>& params, const StageConfig& cfg, const StageData& data) {
  if (data.size() == 0) throw ContractError("evaluate_loss: empty dataset");
  double weighted = 0.0, tokens = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ex = make_example(cfg, data, i, derive_seed(cfg.seed, 0xE7A1, i), params.config().vocab_size);
    const double n = static_cast<double>(ex.tgt.size() + 1);
    weighted += static_cast<double>(nll_value(params, ex.src, ex.tgt)) * n;
    tokens += n;
  }
  return weighted / tokens;
}

StageResult run_stage(const Checkpoint& start, const StageConfig& cfg, const StageData& data,
                      const StageData* heldout) {
  if (data.size() == 0) throw ContractError("run_stage: empty dataset");
  if (data.objective != cfg.objective) throw ContractError("run_stage: data objective does not match stage objective");
  if (data.objective == Objective::kDenoise) {
    for (const auto& s : data.sequences)
      if (s.empty()) throw ContractError("run_stage: empty sequence in denoising data");
  } else {
    for (const auto& p : data.pairs)
      if (p.src.empty() || p.tgt.empty()) throw ContractError("run_stage: empty source or target in supervised data");
  }
  const std::size_t n = data.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const std::size_t per_epoch = n / batch;
  const std::size_t total = steps_for(cfg, n);
  cfg.validate(total);
  if (total == 0) throw ContractError("run_stage: zero training steps");

  StageResult result;
  result.checkpoint = start;
  auto& params = result.checkpoint.params;
  const TokenId vocab = params.config().vocab_size;
  const std::uint64_t kind = static_cast<std::uint64_t>(cfg.kind);
  auto moments = Moments<float>::zeros_like(params.tensors());
  const AdamWSettings adam{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};

  std::vector<Tensor<float>> grads;
  for (std::size_t i = 0; i < params.size(); ++i) grads.emplace_back(params[i].shape());

  std::vector<std::size_t> order(n);
  std::size_t epoch = 0, cursor = per_epoch;
  double best = std::numeric_limits<double>::infinity();
  std::optional<ModelParams<float>> best_params;
  std::size_t bad_evals = 0, done = 0;

  for (std::size_t step = 1; step <= total; ++step) {
    if (cursor == per_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kind, epoch));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      ++epoch;
      cursor = 0;
    }
    std::vector<Pair> examples;
    examples.reserve(batch);
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t idx = order[cursor * batch + b];
      examples.push_back(make_example(cfg, data, idx, derive_seed(cfg.seed, 16 + kind, epoch, idx), vocab));
      tokens += examples.back().tgt.size() + 1;
    }
    ++cursor;

    for (auto& g : grads) g.mutable_values().setZero();
    double batch_loss = 0.0;
    for (const auto& ex : examples) {
      const double weight = static_cast<double>(ex.tgt.size() + 1) / static_cast<double>(tokens);
      Tape<float> tape;
      BoundParams<float> bound(tape, params, true);
      auto loss = nll(bound, ex.src, ex.tgt);
      batch_loss += static_cast<double>(loss.tensor().item()) * weight;
      tape.backward(scale(loss, static_cast<float>(weight)));
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (tape.has_grad(bound.vars()[i])) grads[i].mutable_values() += tape.grad_matrix(bound.vars()[i]);
      }
    }
    if (cfg.clip_norm) {
      double sq = 0.0;
      for (const auto& g : grads) sq += g.values().template cast<double>().squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > *cfg.clip_norm) {
        const auto factor = static_cast<float>(*cfg.clip_norm / norm);
        for (auto& g : grads) g.mutable_values() *= factor;
      }
    }
    const double lr = lr_at(cfg, step, total);
    adamw_step<float>(params.tensors(), grads, moments, lr, adam);
    done = step;
    result.log.push_back({static_cast<std::size_t>(start.step) + step, lr, batch_loss});

    if (heldout && cfg.eval_every > 0 && step % cfg.eval_every == 0) {
      const double held = evaluate_loss(params, cfg, *heldout);
      result.evals.emplace_back(static_cast<std::size_t>(start.step) + step, held);
      if (held < best - cfg.min_delta) {
        best = held;
        best_params = params;
        bad_evals = 0;
      } else if (++bad_evals >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (result.stopped_early && best_params) params = std::move(*best_params);
  result.checkpoint.m = std::move(moments.m);
  result.checkpoint.v = std::move(moments.v);
  result.checkpoint.step = start.step + done;
  result.checkpoint.provenance.emplace_back(stage_name(cfg.kind));
  return result;
}

std::string log_to_csv(std::span<const LogRow> log) {
  std::ostringstream os;
  os.precision(9);
  os << "step,lr,loss\n";
  for (const auto& r : log) os << r.step << ',' << r.lr << ',' << r.loss << '\n';
  return os.str();
}

void save_log(const std::filesystem::path& path, std::span<const LogRow> log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write log " + path.string());
  os << log_to_csv(log);
}

}  // namespace mt
