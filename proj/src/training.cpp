#include "translit/training.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "translit/errors.hpp"
#include "translit/metrics.hpp"

namespace translit {

using ad::ParameterStore;
using ad::Tensor;

OptimizerState make_optimizer(const ParameterStore& params, AdamConfig hp) {
  OptimizerState s;
  s.hp = hp;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

void adam_step(ParameterStore& params, OptimizerState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("optimizer state does not match the parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.size() != p.value.size() || state.m[i].size() != p.value.size())
      throw ShapeError("gradient shape mismatch for " + p.name);
    for (double g : p.grad.data())
      if (!std::isfinite(g)) throw NanGradientError("non-finite gradient in " + p.name);
  }
  ++state.step;
  const auto& hp = state.hp;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t), c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.storage();
    const auto g = params[i].grad.data();
    auto& m = state.m[i].storage();
    auto& v = state.v[i].storage();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
      v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + hp.eps);
    }
  }
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad.storage()) g *= f;
  }
  return norm;
}

void ScheduleSpec::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay factor must be in (0, 1]");
  if (decay_every_epochs < 1) throw ConfigError("decay interval must be >= 1");
  if (kind == ScheduleKind::warmup && warmup_steps < 1) throw ConfigError("warmup steps must be >= 1");
  if (kind == ScheduleKind::warmup && d_model < 1) throw ConfigError("schedule d_model must be >= 1");
}

double rnn_lr_schedule(int epoch, const ScheduleSpec& spec) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  return spec.base_lr * std::pow(spec.decay_factor, epoch / spec.decay_every_epochs);
}

double warmup_lr_schedule(long step, const ScheduleSpec& spec) {
  if (step < 1) throw ConfigError("step must be >= 1");
  const double s = static_cast<double>(step);
  return spec.base_lr / std::sqrt(static_cast<double>(spec.d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(static_cast<double>(spec.warmup_steps), -1.5));
}

std::string TrainRecord::json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss"] = num(loss);
  j["lr"] = num(lr);
  j["train_wer"] = num(train_wer);
  j["train_cer"] = num(train_cer);
  j["test_wer"] = num(test_wer);
  j["test_cer"] = num(test_cer);
  j["seconds"] = num(seconds);
  return j.dump();
}

std::string TrainReport::jsonl() const {
  std::string out;
  for (const auto& r : records) out += r.json() + "\n";
  return out;
}

TrainReport train_loop(Seq2SeqModel& model, const Corpus& train, const Corpus* test, const TrainConfig& cfg,
                       const TrainCallback& on_epoch) {
  cfg.schedule.validate();
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (train.empty()) throw EmptyModel("training corpus is empty");
  const auto pairs = encode_pairs(train, model.source_vocab(), model.target_vocab());
  auto& params = model.params();
  auto opt = make_optimizer(params);
  auto dropout_rng = make_rng(cfg.seed, 0xD40F);
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = cfg.batch_tokens > 0 ? batch_iter_tokens(pairs, cfg.batch_tokens, cfg.seed, epoch)
                                        : batch_iter(pairs, cfg.batch_size, cfg.seed, epoch);
    double loss_sum = 0.0, tokens = 0.0, lr = 0.0;
    bool out_of_steps = false;
    for (const Batch& b : batches) {
      ++step;
      lr = cfg.schedule.kind == ScheduleKind::warmup ? warmup_lr_schedule(step, cfg.schedule)
                                                      : rnn_lr_schedule(epoch, cfg.schedule);
      params.zero_grad();
      ad::Tape tape;
      ad::Var loss = model.loss(tape, b, &dropout_rng);
      tape.backward(loss);
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, opt, lr);
      const double n = static_cast<double>(b.target_tokens());
      loss_sum += loss.value().item() * n;
      tokens += n;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
    }

    TrainRecord rec;
    rec.epoch = epoch + 1;
    rec.step = step;
    rec.loss = tokens > 0 ? loss_sum / tokens : 0.0;
    rec.lr = lr;
    const bool last = out_of_steps || epoch + 1 == cfg.epochs;
    if ((cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) || (last && cfg.eval_every > 0)) {
      auto tr = evaluate(decode_corpus(model, train, cfg.eval_beam), train.groups);
      rec.train_wer = tr.wer;
      rec.train_cer = tr.cer;
      if (test && !test->empty()) {
        auto te = evaluate(decode_corpus(model, *test, cfg.eval_beam), test->groups);
        rec.test_wer = te.wer;
        rec.test_cer = te.cer;
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.records.push_back(rec);
    if (on_epoch && !on_epoch(rec)) break;
    if (out_of_steps) break;
  }
  return report;
}

}  // namespace translit
