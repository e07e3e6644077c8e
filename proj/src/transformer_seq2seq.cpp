#include "translit/transformer_seq2seq.hpp"

#include <cmath>

#include "translit/errors.hpp"

namespace translit {

using ad::Tape;
using ad::Tensor;
using ad::Var;

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) throw ConfigError("positional encoding needs an even d_model");
  Tensor pe({length, d_model});
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < d_model; i += 2) {
      double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe[pos * d_model + i] = std::sin(angle);
      pe[pos * d_model + i + 1] = std::cos(angle);
    }
  return pe;
}

Tensor attention_mask(std::size_t batch, std::size_t heads, std::size_t tq, std::size_t tk,
                      std::span<const double> key_mask, bool causal) {
  if (!key_mask.empty() && key_mask.size() != batch * tk) throw ShapeError("attention_mask: key mask size");
  Tensor m({batch * heads, tq, tk});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < tq; ++i)
        for (std::size_t j = 0; j < tk; ++j) {
          bool blocked = (!key_mask.empty() && key_mask[b * tk + j] == 0.0) || (causal && j > i);
          if (causal && i == j) blocked = false;
          m[((b * heads + h) * tq + i) * tk + j] = blocked ? -1e9 : 0.0;
        }
  return m;
}

namespace {

Var split_heads(Var x, std::size_t heads) {
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2), dh = d / heads;
  return reshape(permute(reshape(x, {b, t, heads, dh}), {0, 2, 1, 3}), {b * heads, t, dh});
}

Var merge_heads(Var x, std::size_t batch, std::size_t heads) {
  const std::size_t t = x.dim(1), dh = x.dim(2);
  return reshape(permute(reshape(x, {batch, heads, t, dh}), {0, 2, 1, 3}), {batch, t, heads * dh});
}

Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }

Var maybe_dropout(Var x, double rate, std::mt19937_64* rng) { return rng && rate > 0 ? dropout(x, rate, *rng) : x; }

}  // namespace

MultiHeadResult multi_head_attention(Var q, Var k, Var v, Var mask, std::size_t heads, const AttentionParams& p) {
  if (q.value().rank() != 3 || k.value().rank() != 3 || v.value().rank() != 3)
    throw ShapeError("multi_head_attention expects [B, T, d] inputs");
  const std::size_t b = q.dim(0), d = q.dim(2);
  if (heads == 0 || d % heads != 0) throw ShapeError("d_model " + std::to_string(d) + " not divisible by heads");
  if (k.dim(0) != b || v.dim(0) != b || k.dim(1) != v.dim(1) || k.dim(2) != d || v.dim(2) != d)
    throw ShapeError("multi_head_attention: inconsistent q/k/v shapes");
  Var qh = split_heads(affine(q, p.wq, p.bq), heads);
  Var kh = split_heads(affine(k, p.wk, p.bk), heads);
  Var vh = split_heads(affine(v, p.wv, p.bv), heads);
  Var scores = scale(bmm(qh, kh, true), 1.0 / std::sqrt(static_cast<double>(d / heads)));
  if (mask.valid()) scores = add(scores, mask);
  Var weights = softmax(scores);
  Var out = affine(merge_heads(bmm(weights, vh), b, heads), p.wo, p.bo);
  return {out, weights};
}

BlockOutput transformer_block(Var x, Var context, Var self_mask, Var cross_mask, std::size_t heads,
                              const BlockParams& p, double dropout_rate, std::mt19937_64* rng) {
  BlockOutput r;
  Var h = layer_norm(x, p.norm1_g, p.norm1_b);
  auto self = multi_head_attention(h, h, h, self_mask, heads, p.self_attn);
  r.self_weights = self.weights;
  x = add(x, maybe_dropout(self.out, dropout_rate, rng));
  if (p.has_cross) {
    if (!context.valid()) throw ShapeError("decoder block needs an encoder context");
    h = layer_norm(x, p.norm2_g, p.norm2_b);
    auto cross = multi_head_attention(h, context, context, cross_mask, heads, p.cross_attn);
    r.cross_weights = cross.weights;
    x = add(x, maybe_dropout(cross.out, dropout_rate, rng));
  }
  h = layer_norm(x, p.norm3_g, p.norm3_b);
  Var f = affine(relu(affine(h, p.ffn_w1, p.ffn_b1)), p.ffn_w2, p.ffn_b2);
  r.out = add(x, maybe_dropout(f, dropout_rate, rng));
  return r;
}

std::vector<ParamSpec> TransformerModel::layout(const TransformerConfig& config, std::size_t source_vocab,
                                                 std::size_t target_vocab) {
  if (config.d_model < 2 || config.d_model % 2 != 0) throw ConfigError("d_model must be even and >= 2");
  if (config.heads < 1 || config.d_model % config.heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (config.layers < 1) throw ConfigError("transformer layers must be >= 1");
  const std::size_t d = static_cast<std::size_t>(config.d_model), ff = static_cast<std::size_t>(config.ffn());
  std::vector<ParamSpec> specs{{"src_embed", {source_vocab, d}, ParamInit::embedding},
                               {"tgt_embed", {target_vocab, d}, ParamInit::embedding}};
  auto norm = [&](const std::string& name) {
    specs.push_back({name + ".g", {d}, ParamInit::ones});
    specs.push_back({name + ".b", {d}, ParamInit::zeros});
  };
  auto attn = [&](const std::string& name) {
    for (const char* m : {"q", "k", "v", "o"}) {
      specs.push_back({name + ".w" + m, {d, d}, ParamInit::xavier});
      specs.push_back({name + ".b" + m, {d}, ParamInit::zeros});
    }
  };
  auto block = [&](const std::string& prefix, bool cross) {
    norm(prefix + ".ln1");
    attn(prefix + ".self");
    if (cross) {
      norm(prefix + ".ln2");
      attn(prefix + ".cross");
    }
    norm(prefix + ".ln3");
    specs.push_back({prefix + ".ffn.w1", {d, ff}, ParamInit::xavier});
    specs.push_back({prefix + ".ffn.b1", {ff}, ParamInit::zeros});
    specs.push_back({prefix + ".ffn.w2", {ff, d}, ParamInit::xavier});
    specs.push_back({prefix + ".ffn.b2", {d}, ParamInit::zeros});
  };
  for (int l = 0; l < config.layers; ++l) block("enc." + std::to_string(l), false);
  norm("enc.ln");
  for (int l = 0; l < config.layers; ++l) block("dec." + std::to_string(l), true);
  norm("dec.ln");
  specs.push_back({"out.w", {d, target_vocab}, ParamInit::xavier});
  specs.push_back({"out.b", {target_vocab}, ParamInit::zeros});
  return specs;
}

TransformerModel::TransformerModel(const TransformerConfig& config, Vocabulary source_vocab, Vocabulary target_vocab,
                                   std::uint64_t seed)
    : Seq2SeqModel(std::move(source_vocab), std::move(target_vocab)), config_(config) {
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (config.label_smoothing < 0.0 || config.label_smoothing >= 1.0)
    throw ConfigError("label_smoothing must be in [0, 1)");
  auto rng = make_rng(seed, 0x5452414E);
  // Scaled by sqrt(d_model) on lookup, so embeddings start with unit variance.
  const double embed_r = std::sqrt(3.0 / static_cast<double>(config.d_model));
  for (const auto& spec : layout(config, source_vocab_.size(), target_vocab_.size()))
    params_.add(spec.name, initial_value(spec, embed_r, rng));
}

ConfigEntries TransformerModel::config_entries() const {
  return {{"d_model", std::to_string(config_.d_model)},
          {"heads", std::to_string(config_.heads)},
          {"layers", std::to_string(config_.layers)},
          {"ffn_dim", std::to_string(config_.ffn())}};
}

BlockParams TransformerModel::block_params(Tape& tape, const std::string& prefix, bool cross) {
  auto P = [&](const std::string& name) { return tape.parameter(params_.get(prefix + "." + name)); };
  auto attn = [&](const std::string& name) {
    return AttentionParams{P(name + ".wq"), P(name + ".bq"), P(name + ".wk"), P(name + ".bk"),
                           P(name + ".wv"), P(name + ".bv"), P(name + ".wo"), P(name + ".bo")};
  };
  BlockParams p;
  p.norm1_g = P("ln1.g");
  p.norm1_b = P("ln1.b");
  p.self_attn = attn("self");
  if (cross) {
    p.has_cross = true;
    p.norm2_g = P("ln2.g");
    p.norm2_b = P("ln2.b");
    p.cross_attn = attn("cross");
  }
  p.norm3_g = P("ln3.g");
  p.norm3_b = P("ln3.b");
  p.ffn_w1 = P("ffn.w1");
  p.ffn_b1 = P("ffn.b1");
  p.ffn_w2 = P("ffn.w2");
  p.ffn_b2 = P("ffn.b2");
  return p;
}

Var TransformerModel::embed(Tape& tape, const char* table, std::span<const int> ids, std::size_t batch,
                            std::size_t length, std::mt19937_64* rng) {
  const std::size_t d = static_cast<std::size_t>(config_.d_model);
  Var x = embedding(tape.parameter(params_.get(table)), ids);
  x = reshape(scale(x, std::sqrt(static_cast<double>(d))), {batch, length, d});
  x = add(x, tape.constant(positional_encoding(length, d)));
  return maybe_dropout(x, config_.dropout, rng);
}

Var TransformerModel::encode(Tape& tape, std::span<const int> ids, std::size_t batch, std::size_t length,
                             std::span<const double> mask, std::mt19937_64* rng, std::vector<Var>* weights) {
  if (batch == 0 || length == 0) throw ShapeError("encode: empty source");
  if (ids.size() != batch * length || mask.size() != batch * length) throw ShapeError("encode: id/mask size mismatch");
  const std::size_t heads = static_cast<std::size_t>(config_.heads);
  Var x = embed(tape, "src_embed", ids, batch, length, rng);
  Var self_mask = tape.constant(attention_mask(batch, heads, length, length, mask, false));
  for (int l = 0; l < config_.layers; ++l) {
    auto r = transformer_block(x, {}, self_mask, {}, heads, block_params(tape, "enc." + std::to_string(l), false),
                               config_.dropout, rng);
    if (weights) weights->push_back(r.self_weights);
    x = r.out;
  }
  return layer_norm(x, tape.parameter(params_.get("enc.ln.g")), tape.parameter(params_.get("enc.ln.b")));
}

Var TransformerModel::decode_logits(Tape& tape, std::span<const int> prefix, std::size_t batch, std::size_t length,
                                    std::span<const double> prefix_mask, Var enc, std::span<const double> source_mask,
                                    std::mt19937_64* rng, std::vector<Var>* weights) {
  if (batch == 0 || length == 0) throw ShapeError("decode_logits: empty prefix");
  if (prefix.size() != batch * length || prefix_mask.size() != batch * length)
    throw ShapeError("decode_logits: prefix/mask size mismatch");
  const std::size_t heads = static_cast<std::size_t>(config_.heads), n = enc.dim(1);
  Var x = embed(tape, "tgt_embed", prefix, batch, length, rng);
  Var self_mask = tape.constant(attention_mask(batch, heads, length, length, prefix_mask, true));
  Var cross_mask = tape.constant(attention_mask(batch, heads, length, n, source_mask, false));
  for (int l = 0; l < config_.layers; ++l) {
    auto r = transformer_block(x, enc, self_mask, cross_mask, heads, block_params(tape, "dec." + std::to_string(l), true),
                               config_.dropout, rng);
    if (weights) {
      weights->push_back(r.self_weights);
      weights->push_back(r.cross_weights);
    }
    x = r.out;
  }
  x = layer_norm(x, tape.parameter(params_.get("dec.ln.g")), tape.parameter(params_.get("dec.ln.b")));
  return affine(x, tape.parameter(params_.get("out.w")), tape.parameter(params_.get("out.b")));
}

Var TransformerModel::loss(Tape& tape, const Batch& batch, std::mt19937_64* rng) {
  Var enc = encode(tape, batch.source, batch.size, batch.source_len, batch.source_mask, rng);
  Var logits = decode_logits(tape, batch.target_in, batch.size, batch.target_len, batch.target_mask, enc,
                             batch.source_mask, rng);
  logits = reshape(logits, {batch.size * batch.target_len, target_vocab_.size()});
  return cross_entropy(logits, batch.target_out, batch.target_mask, config_.label_smoothing);
}

namespace {

class TransformerScorer : public SequenceScorer {
 public:
  TransformerScorer(TransformerModel& model, std::span<const int> source)
      : model_(model), source_mask_(source.size(), 1.0) {
    enc_ = model_.encode(tape_, source, 1, source.size(), source_mask_, nullptr);
  }

  std::size_t vocab_size() const override { return model_.target_vocab().size(); }

  std::vector<double> next_log_probs(std::span<const int> prefix) override {
    std::vector<double> mask(prefix.size(), 1.0);
    Var logits = model_.decode_logits(tape_, prefix, 1, prefix.size(), mask, enc_, source_mask_, nullptr);
    const std::size_t v = vocab_size();
    Var last = reshape(slice(logits, 1, prefix.size() - 1, 1), {v});
    const auto lp = log_softmax(last).value().data();
    return {lp.begin(), lp.end()};
  }

 private:
  TransformerModel& model_;
  Tape tape_{false};
  std::vector<double> source_mask_;
  Var enc_;
};

}  // namespace

std::unique_ptr<SequenceScorer> TransformerModel::scorer(std::span<const int> source) {
  if (source.empty()) throw ShapeError("scorer: empty source");
  return std::make_unique<TransformerScorer>(*this, source);
}

}  // namespace translit
