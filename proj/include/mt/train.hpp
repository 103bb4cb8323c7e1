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

// Optimizer, learning-rate schedules, checkpoints and the stage runner.

#ifndef MT_TRAIN_HPP
#define MT_TRAIN_HPP

#include "mt/denoise.hpp"
#include "mt/model.hpp"
#include "mt/tokenizer.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mt {

enum class StageKind { kPretrain, kMidtrain, kFinetune };
enum class Objective { kDenoise, kSupervised };
enum class Decay { kAnnealToMin, kLinearToZero, kConstant };

std::string_view stage_name(StageKind kind);
StageKind parse_stage_kind(std::string_view name);
std::string_view decay_name(Decay decay);
Decay parse_decay(std::string_view name);

struct StageConfig {
  StageKind kind = StageKind::kPretrain;
  Objective objective = Objective::kDenoise;
  double max_lr = 1e-4;
  double min_lr = 1e-5;
  /// Absolute warmup steps win over the fraction when set.
  double warmup_fraction = 0.0;
  std::optional<std::size_t> warmup_steps;
  Decay decay = Decay::kAnnealToMin;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> clip_norm;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  /// Overrides epochs; data is cycled with a fresh shuffle per pass.
  std::optional<std::size_t> total_steps;
  std::size_t max_src_len = 512;
  std::size_t max_tgt_len = 128;
  double corruption_rate = 0.15;
  double mean_span = 3.0;
  int num_sentinels = 100;
  std::uint64_t seed = 42;
  /// Held-out evaluation cadence in steps (0 disables early stopping).
  std::size_t eval_every = 0;
  std::size_t patience = 3;
  double min_delta = 1e-3;

  std::size_t warmup_for(std::size_t total_steps) const;
  /// Throws ContractError on inconsistent settings.
  void validate(std::size_t total_steps) const;
};

/// Schedules quoted for the three stages: pretrain 1e-4 -> 1e-5 with 1% warmup
/// and weight decay 0.01; midtrain 1e-6 with 200 warmup steps, linear decay,
/// batch 16, 2 epochs; finetune constant 5e-5, batch 16, 512/128 truncation.
StageConfig pretrain_preset();
StageConfig midtrain_preset();
StageConfig finetune_preset();

/// Linear warmup to max_lr, then the configured decay. `step` counts from 0
/// to total_steps inclusive; training step s (1-based) uses lr_at(s).
double lr_at(const StageConfig& cfg, std::size_t step, std::size_t total_steps);

/// First and second moments plus the bias-correction counter.
template <typename Scalar>
struct Moments {
  std::vector<Tensor<Scalar>> m, v;
  std::uint64_t t = 0;

  static Moments zeros_like(std::span<const Tensor<Scalar>> params) {
    Moments out;
    for (const auto& p : params) {
      out.m.emplace_back(p.shape());
      out.v.emplace_back(p.shape());
    }
    return out;
  }
};

struct AdamWSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled weight decay:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
template <typename Scalar>
void adamw_step(std::span<Tensor<Scalar>> params, std::span<const Tensor<Scalar>> grads, Moments<Scalar>& moments,
                double lr, const AdamWSettings& s) {
  if (grads.size() != params.size() || moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw ContractError("adamw_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || moments.m[i].shape() != params[i].shape() ||
        moments.v[i].shape() != params[i].shape()) {
      throw ContractError("adamw_step: shape mismatch at tensor " + std::to_string(i) + ": " +
                          to_string(params[i].shape()) + " vs " + to_string(grads[i].shape()));
    }
  }
  ++moments.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(moments.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(moments.t));
  const auto b1 = static_cast<Scalar>(s.beta1), b2 = static_cast<Scalar>(s.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i].values().array();
    auto m = moments.m[i].mutable_values().array();
    auto v = moments.v[i].mutable_values().array();
    auto p = params[i].mutable_values().array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    const auto m_hat = m / static_cast<Scalar>(c1);
    const auto v_hat = v / static_cast<Scalar>(c2);
    p -= static_cast<Scalar>(lr) * (m_hat / (v_hat.sqrt() + static_cast<Scalar>(s.eps)) +
                                    static_cast<Scalar>(s.weight_decay) * p);
  }
}

/// Raised on malformed checkpoint bytes; the message names the byte offset.
class CheckpointFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct Checkpoint {
  ModelParams<float> params;
  /// Optimizer moments in parameter order (zeros for a fresh model).
  std::vector<Tensor<float>> m, v;
  std::uint64_t step = 0;
  /// Stage names in the order they ran; append-only.
  std::vector<std::string> provenance;

  const ModelConfig& config() const { return params.config(); }
  static Checkpoint fresh(const ModelConfig& cfg, std::uint64_t seed);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Binary layout (little-endian): "MTCK", u32 version 1, u64 config length,
/// config text, tensor records [u16 name length, name, u8 dtype 0=f32, u8 rank,
/// u32 dims..., payload] for params, then for m ("m/<name>") and v ("v/<name>"),
/// u64 step, u32 provenance count, [u16 length, bytes] per stage name.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct Pair {
  std::vector<TokenId> src, tgt;
};

/// Stage input: raw token sequences for denoising, pairs for supervision.
struct StageData {
  Objective objective = Objective::kDenoise;
  std::vector<std::vector<TokenId>> sequences;
  std::vector<Pair> pairs;

  std::size_t size() const { return objective == Objective::kDenoise ? sequences.size() : pairs.size(); }
  static StageData denoise(std::vector<std::vector<TokenId>> sequences);
  static StageData supervised(std::vector<Pair> pairs);
};

struct LogRow {
  std::size_t step;
  double lr;
  double loss;
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
  /// (step, held-out loss) at each evaluation.
  std::vector<std::pair<std::size_t, double>> evals;
  bool stopped_early = false;
};

std::size_t steps_for(const StageConfig& cfg, std::size_t data_size);

/// Token-weighted mean NLL over `data`; denoising examples are corrupted with
/// a fixed per-example seed so repeated evaluations are comparable.
double evaluate_loss(const ModelParams<float>& params, const StageConfig& cfg, const StageData& data);

/// Runs one stage from `start`. Optimizer moments start at zero; the step
/// counter continues from start.step; the stage name is appended to the
/// provenance. With `heldout` and cfg.eval_every > 0, training stops after
/// `patience` evaluations without a `min_delta` improvement and the best
/// evaluated parameters are returned.
StageResult run_stage(const Checkpoint& start, const StageConfig& cfg, const StageData& data,
                      const StageData* heldout = nullptr);

std::string log_to_csv(std::span<const LogRow> log);
void save_log(const std::filesystem::path& path, std::span<const LogRow> log);

}  // namespace mt

#endif  // MT_TRAIN_HPP
