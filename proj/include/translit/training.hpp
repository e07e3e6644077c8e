#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "translit/corpus.hpp"
#include "translit/decoding.hpp"
#include "translit/seq2seq.hpp"

namespace translit {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct OptimizerState {
  AdamConfig hp;
  std::size_t step = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
};

/// Zeroed moments shaped like `params`.
OptimizerState make_optimizer(const ad::ParameterStore& params, AdamConfig hp = {});

/// Bias-corrected Adam update from each parameter's `grad`. A NaN or infinite
/// gradient throws NanGradientError naming the parameter before anything changes.
void adam_step(ad::ParameterStore& params, OptimizerState& state, double lr);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ad::ParameterStore& params, double max_norm);

enum class ScheduleKind { step_decay, warmup };

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::step_decay;
  double base_lr = 5e-4;
  double decay_factor = 0.9;
  int decay_every_epochs = 20;
  int warmup_steps = 8000;
  int d_model = 128;

  void validate() const;
};

/// base_lr * decay_factor^floor(epoch / decay_every_epochs).
double rnn_lr_schedule(int epoch, const ScheduleSpec& spec);
/// base_lr * d_model^-0.5 * min(step^-0.5, step * warmup_steps^-1.5), step >= 1.
double warmup_lr_schedule(long step, const ScheduleSpec& spec);

struct TrainConfig {
  int epochs = 100;
  long max_steps = 0;          // 0: no step limit
  std::size_t batch_size = 32;
  std::size_t batch_tokens = 0;  // > 0 switches to token-budget batches
  double clip_norm = 5.0;
  int eval_every = 0;          // epochs between evaluations; 0 disables
  BeamConfig eval_beam{1, 0, 0.0};
  ScheduleSpec schedule;
  std::uint64_t seed = 1;
};

struct TrainRecord {
  int epoch = 0;  // 1-based, epochs completed
  long step = 0;
  double loss = 0.0;  // token-weighted mean over the epoch
  double lr = 0.0;
  double train_wer = std::numeric_limits<double>::quiet_NaN();
  double train_cer = std::numeric_limits<double>::quiet_NaN();
  double test_wer = std::numeric_limits<double>::quiet_NaN();
  double test_cer = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;

  /// One JSON object; metrics that were not computed are null.
  std::string json() const;
};

struct TrainReport {
  std::vector<TrainRecord> records;

  std::string jsonl() const;
};

/// Called after every epoch; returning false ends training.
using TrainCallback = std::function<bool(const TrainRecord&)>;

/// Teacher-forced training with Adam and gradient clipping. Evaluation decodes
/// `train` (and `test`, when given) every `eval_every` epochs and after the last.
TrainReport train_loop(Seq2SeqModel& model, const Corpus& train, const Corpus* test, const TrainConfig& cfg,
                       const TrainCallback& on_epoch = {});

}  // namespace translit
