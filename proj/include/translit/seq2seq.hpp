#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "translit/corpus.hpp"
#include "translit/script_codec.hpp"
#include "translit/tensor.hpp"

namespace translit {

enum class ModelKind { rnn, rnn_attention, transformer };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Next-token log-probabilities for one source word. Prefixes start with BOS.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> next_log_probs(std::span<const int> prefix) = 0;
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Named parameters plus an architecture. Both neural backbones implement it.
class Seq2SeqModel {
 public:
  Seq2SeqModel(Vocabulary source_vocab, Vocabulary target_vocab)
      : source_vocab_(std::move(source_vocab)), target_vocab_(std::move(target_vocab)) {}
  virtual ~Seq2SeqModel() = default;

  virtual ModelKind kind() const = 0;
  /// Architecture hyperparameters, written to checkpoint headers.
  virtual ConfigEntries config_entries() const = 0;
  /// Mean masked cross-entropy under teacher forcing. `rng` drives dropout; null disables it.
  virtual ad::Var loss(ad::Tape& tape, const Batch& batch, std::mt19937_64* rng) = 0;
  virtual std::unique_ptr<SequenceScorer> scorer(std::span<const int> source) = 0;

  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }
  const Vocabulary& source_vocab() const { return source_vocab_; }
  const Vocabulary& target_vocab() const { return target_vocab_; }

 protected:
  ad::ParameterStore params_;
  Vocabulary source_vocab_;
  Vocabulary target_vocab_;
};

enum class ParamInit { zeros, ones, xavier, embedding, forget_bias };

struct ParamSpec {
  std::string name;
  ad::Shape shape;
  ParamInit init = ParamInit::zeros;
};

/// Draws a fresh value for `spec`. Embeddings use uniform(-embed_r, embed_r);
/// forget_bias is zero except +1 on the second quarter (LSTM forget gate).
ad::Tensor initial_value(const ParamSpec& spec, double embed_r, std::mt19937_64& rng);

/// Uniform(-r, r), r = sqrt(6 / (fan_in + fan_out)).
ad::Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
ad::Tensor uniform_tensor(ad::Shape shape, double r, std::mt19937_64& rng);

/// Per-row masked-carry helpers: constant [B, width] tensors repeating each row's mask.
ad::Tensor row_mask(std::span<const double> mask, std::size_t width);

}  // namespace translit
