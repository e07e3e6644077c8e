#include "translit/rnn_seq2seq.hpp"

#include <map>
#include <string>

#include "translit/errors.hpp"

namespace translit {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

std::string layer_name(const char* base, int layer, const char* leaf) {
  return std::string(base) + "." + std::to_string(layer) + "." + leaf;
}

std::vector<int> column(std::span<const int> ids, std::size_t rows, std::size_t cols, std::size_t c) {
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = ids[r * cols + c];
  return out;
}

// Attention with a precomputed projection of the encoder states.
AttentionState attend(Var s, Var states, Var projected, Var mask_bias) {
  const std::size_t b = states.dim(0), n = states.dim(1), u = s.dim(1);
  Var scores = reshape(bmm(projected, reshape(s, {b, u, 1})), {b, n});
  if (mask_bias.valid()) scores = add(scores, mask_bias);
  Var weights = softmax(scores);
  Var context = reshape(bmm(reshape(weights, {b, 1, n}), states), {b, states.dim(2)});
  return {weights, context};
}

}  // namespace

LstmState lstm_step(Var x, const LstmState& state, const LstmParams& p) {
  const Tensor& wh = p.w_h.value();
  if (wh.rank() != 2 || wh.dim(1) != 4 * wh.dim(0)) throw ShapeError("lstm w_h must be [U, 4U]");
  const std::size_t u = wh.dim(0);
  if (state.h.shape() != state.c.shape() || state.h.shape().back() != u)
    throw ShapeError("lstm state does not match hidden size " + std::to_string(u));
  if (x.value().rank() != state.h.value().rank()) throw ShapeError("lstm input and state ranks differ");
  Var gates = add(add(matmul(x, p.w_x), matmul(state.h, p.w_h)), p.b);
  const std::size_t axis = gates.value().rank() - 1;
  Var i = sigmoid(slice(gates, axis, 0, u));
  Var f = sigmoid(slice(gates, axis, u, u));
  Var g = tanh(slice(gates, axis, 2 * u, u));
  Var o = sigmoid(slice(gates, axis, 3 * u, u));
  Var c = add(mul(f, state.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

AttentionState attention_context(Var s, Var enc, Var w_att, Var mask_bias) {
  const bool single = s.value().rank() == 1;
  if (single) {
    if (enc.value().rank() != 2) throw ShapeError("attention: unbatched state needs enc [n, 2U]");
    s = reshape(s, {1, s.dim(0)});
    enc = reshape(enc, {1, enc.dim(0), enc.dim(1)});
    if (mask_bias.valid()) mask_bias = reshape(mask_bias, {1, mask_bias.value().size()});
  }
  if (enc.value().rank() != 3 || s.value().rank() != 2 || enc.dim(0) != s.dim(0))
    throw ShapeError("attention: expected s [B, U] and enc [B, n, 2U]");
  AttentionState a = attend(s, enc, matmul(enc, w_att), mask_bias);
  if (single) {
    a.weights = reshape(a.weights, {a.weights.dim(1)});
    a.context = reshape(a.context, {a.context.dim(1)});
  }
  return a;
}

std::vector<ParamSpec> RnnModel::layout(const RnnConfig& config, std::size_t source_vocab, std::size_t target_vocab) {
  if (config.hidden < 1 || config.layers < 1 || config.embed_dim < 1)
    throw ConfigError("rnn hidden, layers and embed_dim must be >= 1");
  const std::size_t e = static_cast<std::size_t>(config.embed_dim), u = static_cast<std::size_t>(config.hidden);
  std::vector<ParamSpec> specs{{"src_embed", {source_vocab, e}, ParamInit::embedding},
                               {"tgt_embed", {target_vocab, e}, ParamInit::embedding}};
  auto lstm = [&](const std::string& prefix, std::size_t in) {
    specs.push_back({prefix + ".wx", {in, 4 * u}, ParamInit::xavier});
    specs.push_back({prefix + ".wh", {u, 4 * u}, ParamInit::xavier});
    specs.push_back({prefix + ".b", {4 * u}, ParamInit::forget_bias});
  };
  for (int l = 0; l < config.layers; ++l) {
    lstm(layer_name("enc", l, "fwd"), l == 0 ? e : 2 * u);
    lstm(layer_name("enc", l, "bwd"), l == 0 ? e : 2 * u);
  }
  for (int l = 0; l < config.layers; ++l)
    for (const char* which : {"h", "c"}) {
      specs.push_back({layer_name("bridge", l, (std::string(which) + ".w").c_str()), {2 * u, u}, ParamInit::xavier});
      specs.push_back({layer_name("bridge", l, (std::string(which) + ".b").c_str()), {u}, ParamInit::zeros});
    }
  for (int l = 0; l < config.layers; ++l) lstm(layer_name("dec", l, "lstm"), l == 0 ? e : u);
  if (config.attention) specs.push_back({"att.w", {2 * u, u}, ParamInit::xavier});
  specs.push_back({"out.w", {config.attention ? 3 * u : u, target_vocab}, ParamInit::xavier});
  specs.push_back({"out.b", {target_vocab}, ParamInit::zeros});
  return specs;
}

RnnModel::RnnModel(const RnnConfig& config, Vocabulary source_vocab, Vocabulary target_vocab, std::uint64_t seed)
    : Seq2SeqModel(std::move(source_vocab), std::move(target_vocab)), config_(config) {
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  auto rng = make_rng(seed, 0x524E4E);
  for (const auto& spec : layout(config, source_vocab_.size(), target_vocab_.size()))
    params_.add(spec.name, initial_value(spec, 0.1, rng));
}

ConfigEntries RnnModel::config_entries() const {
  return {{"embed_dim", std::to_string(config_.embed_dim)},
          {"hidden", std::to_string(config_.hidden)},
          {"layers", std::to_string(config_.layers)},
          {"attention", config_.attention ? "1" : "0"}};
}

LstmParams RnnModel::lstm_params(Tape& tape, const std::string& prefix) {
  return {tape.parameter(params_.get(prefix + ".wx")), tape.parameter(params_.get(prefix + ".wh")),
          tape.parameter(params_.get(prefix + ".b"))};
}

RnnModel::Encoded RnnModel::encode(Tape& tape, std::span<const int> ids, std::size_t batch, std::size_t length,
                                   std::span<const double> mask, std::mt19937_64* rng) {
  if (length == 0 || batch == 0) throw ShapeError("encode: empty source");
  if (ids.size() != batch * length || mask.size() != batch * length) throw ShapeError("encode: id/mask size mismatch");
  const std::size_t u = static_cast<std::size_t>(config_.hidden);
  const double rate = rng ? config_.dropout : 0.0;

  Encoded enc;
  enc.batch = batch;
  enc.length = length;
  Var table = tape.parameter(params_.get("src_embed"));
  std::vector<Var> inputs;
  for (std::size_t t = 0; t < length; ++t) {
    Var x = embedding(table, column(ids, batch, length, t));
    inputs.push_back(rate > 0 ? dropout(x, rate, *rng) : x);
  }

  // Padded positions carry the previous state through unchanged.
  std::vector<Var> keep(length), drop(length);
  bool any_pad = false;
  for (std::size_t t = 0; t < length; ++t) {
    std::vector<double> m(batch);
    bool padded = false;
    for (std::size_t r = 0; r < batch; ++r) {
      m[r] = mask[r * length + t];
      padded = padded || m[r] == 0.0;
    }
    if (!padded) continue;
    any_pad = true;
    std::vector<double> inv(batch);
    for (std::size_t r = 0; r < batch; ++r) inv[r] = 1.0 - m[r];
    keep[t] = tape.constant(row_mask(m, u));
    drop[t] = tape.constant(row_mask(inv, u));
  }
  auto carry = [&](std::size_t t, const LstmState& next, const LstmState& prev) -> LstmState {
    if (!keep[t].valid()) return next;
    return {add(mul(keep[t], next.h), mul(drop[t], prev.h)), add(mul(keep[t], next.c), mul(drop[t], prev.c))};
  };

  std::vector<Var> outputs(length);
  for (int l = 0; l < config_.layers; ++l) {
    LstmParams fp = lstm_params(tape, layer_name("enc", l, "fwd"));
    LstmParams bp = lstm_params(tape, layer_name("enc", l, "bwd"));
    Var zero = tape.constant(Tensor({batch, u}));
    std::vector<Var> fwd(length), bwd(length);
    LstmState s{zero, zero};
    for (std::size_t t = 0; t < length; ++t) {
      s = carry(t, lstm_step(inputs[t], s, fp), s);
      fwd[t] = s.h;
    }
    enc.fwd_final.push_back(s);
    s = {zero, zero};
    for (std::size_t t = length; t-- > 0;) {
      s = carry(t, lstm_step(inputs[t], s, bp), s);
      bwd[t] = s.h;
    }
    enc.bwd_final.push_back(s);
    for (std::size_t t = 0; t < length; ++t) {
      outputs[t] = concat(std::vector<Var>{fwd[t], bwd[t]}, 1);
      inputs[t] = rate > 0 && l + 1 < config_.layers ? dropout(outputs[t], rate, *rng) : outputs[t];
    }
  }
  enc.states = stack(outputs, 1);
  if (config_.attention) enc.projected = matmul(enc.states, tape.parameter(params_.get("att.w")));
  if (any_pad) {
    Tensor bias({batch, length});
    for (std::size_t k = 0; k < bias.size(); ++k) bias[k] = mask[k] == 0.0 ? -1e9 : 0.0;
    enc.mask_bias = tape.constant(std::move(bias));
  }
  return enc;
}

RnnModel::DecoderState RnnModel::initial_state(Tape& tape, const Encoded& enc) {
  DecoderState state;
  for (int l = 0; l < config_.layers; ++l) {
    auto affine = [&](Var a, Var b, const char* which) {
      std::string w = std::string(which) + ".w", bias = std::string(which) + ".b";
      return add(matmul(concat(std::vector<Var>{a, b}, 1), tape.parameter(params_.get(layer_name("bridge", l, w.c_str())))),
                 tape.parameter(params_.get(layer_name("bridge", l, bias.c_str()))));
    };
    state.layers.push_back({affine(enc.fwd_final[l].h, enc.bwd_final[l].h, "h"),
                            affine(enc.fwd_final[l].c, enc.bwd_final[l].c, "c")});
  }
  return state;
}

Var RnnModel::decode_step(Tape& tape, std::span<const int> prev, DecoderState& state, const Encoded& enc,
                          std::mt19937_64* rng, Var* attention_weights) {
  if (prev.size() != enc.batch) throw ShapeError("decode_step: batch mismatch");
  const double rate = rng ? config_.dropout : 0.0;
  Var x = embedding(tape.parameter(params_.get("tgt_embed")), prev);
  if (rate > 0) x = dropout(x, rate, *rng);
  for (int l = 0; l < config_.layers; ++l) {
    state.layers[l] = lstm_step(x, state.layers[l], lstm_params(tape, layer_name("dec", l, "lstm")));
    x = state.layers[l].h;
    if (rate > 0 && l + 1 < config_.layers) x = dropout(x, rate, *rng);
  }
  Var features = x;
  if (config_.attention) {
    AttentionState a = attend(x, enc.states, enc.projected, enc.mask_bias);
    if (attention_weights) *attention_weights = a.weights;
    features = concat(std::vector<Var>{x, a.context}, 1);
  }
  if (rate > 0) features = dropout(features, rate, *rng);
  return add(matmul(features, tape.parameter(params_.get("out.w"))), tape.parameter(params_.get("out.b")));
}

Var RnnModel::loss(Tape& tape, const Batch& batch, std::mt19937_64* rng) {
  Encoded enc = encode(tape, batch.source, batch.size, batch.source_len, batch.source_mask, rng);
  DecoderState state = initial_state(tape, enc);
  std::vector<Var> steps;
  for (std::size_t t = 0; t < batch.target_len; ++t)
    steps.push_back(decode_step(tape, column(batch.target_in, batch.size, batch.target_len, t), state, enc, rng));
  Var logits = reshape(stack(steps, 1), {batch.size * batch.target_len, target_vocab_.size()});
  return cross_entropy(logits, batch.target_out, batch.target_mask);
}

namespace {

class RnnScorer : public SequenceScorer {
 public:
  RnnScorer(RnnModel& model, std::span<const int> source) : model_(model) {
    std::vector<double> mask(source.size(), 1.0);
    enc_ = model_.encode(tape_, source, 1, source.size(), mask, nullptr);
    cache_.emplace(std::vector<int>{}, Entry{model_.initial_state(tape_, enc_), {}});
  }

  std::size_t vocab_size() const override { return model_.target_vocab().size(); }

  std::vector<double> next_log_probs(std::span<const int> prefix) override {
    return lookup(std::vector<int>(prefix.begin(), prefix.end())).log_probs;
  }

 private:
  struct Entry {
    RnnModel::DecoderState state;  // after feeding the prefix
    std::vector<double> log_probs;
  };

  const Entry& lookup(const std::vector<int>& prefix) {
    if (auto it = cache_.find(prefix); it != cache_.end()) return it->second;
    const Entry& parent = lookup(std::vector<int>(prefix.begin(), prefix.end() - 1));
    Entry e{parent.state, {}};
    int prev = prefix.back();
    Var logits = model_.decode_step(tape_, std::span<const int>(&prev, 1), e.state, enc_, nullptr);
    const auto lp = log_softmax(logits).value().data();
    e.log_probs.assign(lp.begin(), lp.end());
    return cache_.emplace(prefix, std::move(e)).first->second;
  }

  RnnModel& model_;
  Tape tape_{false};
  RnnModel::Encoded enc_;
  std::map<std::vector<int>, Entry> cache_;
};

}  // namespace

std::unique_ptr<SequenceScorer> RnnModel::scorer(std::span<const int> source) {
  if (source.empty()) throw ShapeError("scorer: empty source");
  return std::make_unique<RnnScorer>(*this, source);
}

Var encode_bilstm(Tape& tape, RnnModel& model, std::span<const int> ids) {
  std::vector<double> mask(ids.size(), 1.0);
  auto enc = model.encode(tape, ids, 1, ids.size(), mask, nullptr);
  return reshape(enc.states, {ids.size(), enc.states.dim(2)});
}

}  // namespace translit
