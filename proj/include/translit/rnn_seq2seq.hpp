#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "translit/seq2seq.hpp"

namespace translit {

struct RnnConfig {
  int embed_dim = 128;
  int hidden = 512;
  int layers = 1;
  bool attention = true;
  double dropout = 0.0;
};

/// Gate blocks are laid out i, f, g, o along the last axis.
struct LstmParams {
  ad::Var w_x;  // [d, 4U]
  ad::Var w_h;  // [U, 4U]
  ad::Var b;    // [4U]
};

struct LstmState {
  ad::Var h;
  ad::Var c;
};

/// One LSTM step; x is [d] or [B, d] with matching state rank.
LstmState lstm_step(ad::Var x, const LstmState& state, const LstmParams& p);

struct AttentionState {
  ad::Var weights;  // [n] or [B, n]
  ad::Var context;  // [2U] or [B, 2U]
};

/// Bilinear attention: e_n = s^T W h_n with W stored as w_att[2U, U].
/// `mask_bias` (optional, [B, n]) is added to the scores.
AttentionState attention_context(ad::Var s, ad::Var enc, ad::Var w_att, ad::Var mask_bias = {});

class RnnModel : public Seq2SeqModel {
 public:
  RnnModel(const RnnConfig& config, Vocabulary source_vocab, Vocabulary target_vocab, std::uint64_t seed);

  /// Parameter names, shapes and initializers for a configuration.
  static std::vector<ParamSpec> layout(const RnnConfig& config, std::size_t source_vocab, std::size_t target_vocab);

  const RnnConfig& config() const { return config_; }
  ModelKind kind() const override { return config_.attention ? ModelKind::rnn_attention : ModelKind::rnn; }
  ConfigEntries config_entries() const override;
  ad::Var loss(ad::Tape& tape, const Batch& batch, std::mt19937_64* rng) override;
  std::unique_ptr<SequenceScorer> scorer(std::span<const int> source) override;

  struct Encoded {
    std::size_t batch = 0;
    std::size_t length = 0;
    ad::Var states;     // [B, n, 2U], top layer
    ad::Var projected;  // states @ w_att, [B, n, U] (attention only)
    ad::Var mask_bias;  // [B, n], invalid when nothing is padded
    std::vector<LstmState> fwd_final, bwd_final;  // per layer
  };

  struct DecoderState {
    std::vector<LstmState> layers;
  };

  /// `ids` is row-major [B, n]; `mask` marks real positions.
  Encoded encode(ad::Tape& tape, std::span<const int> ids, std::size_t batch, std::size_t length,
                 std::span<const double> mask, std::mt19937_64* rng);
  DecoderState initial_state(ad::Tape& tape, const Encoded& enc);
  /// Feeds `prev` ([B] ids), advances `state`, returns logits [B, V].
  ad::Var decode_step(ad::Tape& tape, std::span<const int> prev, DecoderState& state, const Encoded& enc,
                      std::mt19937_64* rng, ad::Var* attention_weights = nullptr);

  LstmParams lstm_params(ad::Tape& tape, const std::string& prefix);

 private:
  RnnConfig config_;
};

/// Single-sequence encoder output [n, 2U].
ad::Var encode_bilstm(ad::Tape& tape, RnnModel& model, std::span<const int> ids);

}  // namespace translit
