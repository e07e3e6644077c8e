#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "translit/seq2seq.hpp"

namespace translit {

struct TransformerConfig {
  int d_model = 128;
  int heads = 4;
  int layers = 2;
  int ffn_dim = 0;  // 0 means 4 * d_model
  double dropout = 0.0;
  double label_smoothing = 0.0;

  int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * d_model; }
};

/// Sinusoidal table [length, d_model]; odd d_model throws ConfigError.
ad::Tensor positional_encoding(std::size_t length, std::size_t d_model);

/// Additive attention mask [B * H, Tq, Tk]: -1e9 on padded keys and, when
/// causal, on keys after the query. The diagonal is never masked in causal mode.
ad::Tensor attention_mask(std::size_t batch, std::size_t heads, std::size_t tq, std::size_t tk,
                          std::span<const double> key_mask, bool causal);

struct AttentionParams {
  ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct MultiHeadResult {
  ad::Var out;      // [B, Tq, d]
  ad::Var weights;  // [B * H, Tq, Tk]
};

/// q: [B, Tq, d], k/v: [B, Tk, d]. `mask` may be invalid (no masking).
MultiHeadResult multi_head_attention(ad::Var q, ad::Var k, ad::Var v, ad::Var mask, std::size_t heads,
                                     const AttentionParams& p);

struct BlockParams {
  ad::Var norm1_g, norm1_b;
  AttentionParams self_attn;
  ad::Var norm2_g, norm2_b;  // cross-attention sub-layer, decoder only
  AttentionParams cross_attn;
  bool has_cross = false;
  ad::Var norm3_g, norm3_b;
  ad::Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct BlockOutput {
  ad::Var out;
  ad::Var self_weights;
  ad::Var cross_weights;
};

/// Pre-norm block: x + SelfAttn(norm(x)) [+ CrossAttn(norm(.), context)] + FFN(norm(.)).
BlockOutput transformer_block(ad::Var x, ad::Var context, ad::Var self_mask, ad::Var cross_mask, std::size_t heads,
                              const BlockParams& p, double dropout_rate = 0.0, std::mt19937_64* rng = nullptr);

class TransformerModel : public Seq2SeqModel {
 public:
  TransformerModel(const TransformerConfig& config, Vocabulary source_vocab, Vocabulary target_vocab,
                   std::uint64_t seed);

  static std::vector<ParamSpec> layout(const TransformerConfig& config, std::size_t source_vocab,
                                       std::size_t target_vocab);

  const TransformerConfig& config() const { return config_; }
  ModelKind kind() const override { return ModelKind::transformer; }
  ConfigEntries config_entries() const override;
  ad::Var loss(ad::Tape& tape, const Batch& batch, std::mt19937_64* rng) override;
  std::unique_ptr<SequenceScorer> scorer(std::span<const int> source) override;

  BlockParams block_params(ad::Tape& tape, const std::string& prefix, bool cross);

  /// [B, n, d] after the final encoder norm. `weights` collects self-attention weights per layer.
  ad::Var encode(ad::Tape& tape, std::span<const int> ids, std::size_t batch, std::size_t length,
                 std::span<const double> mask, std::mt19937_64* rng, std::vector<ad::Var>* weights = nullptr);
  /// Logits [B, t, V] for decoder inputs `prefix` ([B, t], BOS first).
  ad::Var decode_logits(ad::Tape& tape, std::span<const int> prefix, std::size_t batch, std::size_t length,
                        std::span<const double> prefix_mask, ad::Var enc, std::span<const double> source_mask,
                        std::mt19937_64* rng, std::vector<ad::Var>* weights = nullptr);

 private:
  ad::Var embed(ad::Tape& tape, const char* table, std::span<const int> ids, std::size_t batch, std::size_t length,
                std::mt19937_64* rng);

  TransformerConfig config_;
};

}  // namespace translit
