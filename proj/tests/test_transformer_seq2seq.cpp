#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "support/test_util.hpp"
#include "translit/errors.hpp"
#include "translit/transformer_seq2seq.hpp"

using namespace translit;
using namespace translit::ad;
using translit::testing::random_tensor;
using translit::testing::weighted_sum;

namespace {

Vocabulary letters(std::size_t n) {
  std::vector<std::string> s;
  for (std::size_t i = 0; i < n; ++i) s.emplace_back(1, static_cast<char>('a' + i));
  return Vocabulary(s);
}

TransformerModel tiny(int layers = 1, std::uint64_t seed = 1, std::size_t vs = 3, std::size_t vt = 2) {
  TransformerConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.layers = layers;
  return TransformerModel(cfg, letters(vs), letters(vt), seed);
}

Tensor identity(std::size_t d) {
  Tensor t({d, d});
  for (std::size_t i = 0; i < d; ++i) t[i * d + i] = 1.0;
  return t;
}

std::vector<Parameter*> all_params(Seq2SeqModel& m) {
  std::vector<Parameter*> out;
  for (auto& p : m.params()) out.push_back(&p);
  return out;
}

void zero_output_projections(TransformerModel& m) {
  for (auto& p : m.params()) {
    const std::string& n = p.name;
    bool proj = n.ends_with(".wo") || n.ends_with(".bo") || n.ends_with(".ffn.w2") || n.ends_with(".ffn.b2");
    if (proj) std::fill(p.value.storage().begin(), p.value.storage().end(), 0.0);
  }
}

Batch batch_of(const std::vector<EncodedPair>& pairs) {
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(pairs, idx);
}

}  // namespace

TEST_CASE("positional encoding values") {
  Tensor pe = positional_encoding(6, 8);
  CHECK(pe.shape() == Shape{6, 8});
  for (std::size_t i = 0; i < 8; ++i) CHECK(pe[i] == (i % 2 == 0 ? 0.0 : 1.0));
  for (double v : pe.storage()) CHECK(std::abs(v) <= 1.0);
  CHECK(pe[8] == doctest::Approx(0.8414709848).epsilon(1e-9));
  CHECK(pe[8 + 2] == doctest::Approx(std::sin(1.0 / std::pow(10000.0, 2.0 / 8.0))));
  CHECK_THROWS_AS(positional_encoding(3, 7), ConfigError);
}

TEST_CASE("single key with identity projections returns the value row") {
  Tape tape(false);
  const std::size_t d = 4;
  std::mt19937_64 rng(2);
  Var I = tape.constant(identity(d)), z = tape.constant(Tensor({d}));
  AttentionParams p{I, z, I, z, I, z, I, z};
  Var q = tape.constant(random_tensor({1, 3, d}, rng));
  Var kv = tape.constant(random_tensor({1, 1, d}, rng));
  auto r = multi_head_attention(q, kv, kv, {}, 1, p);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < d; ++k) CHECK(r.out.value()[t * d + k] == doctest::Approx(kv.value()[k]));
  CHECK_THROWS_AS(multi_head_attention(q, kv, kv, {}, 3, p), ShapeError);
}

TEST_CASE("attention rows normalize over unmasked keys; diagonal survives full masking") {
  Tape tape(false);
  std::mt19937_64 rng(3);
  const std::size_t d = 8, heads = 2, tq = 4, tk = 4;
  AttentionParams p;
  for (Var* w : {&p.wq, &p.wk, &p.wv, &p.wo}) *w = tape.constant(random_tensor({d, d}, rng));
  for (Var* b : {&p.bq, &p.bk, &p.bv, &p.bo}) *b = tape.constant(random_tensor({d}, rng));
  Var x = tape.constant(random_tensor({2, tq, d}, rng, -2, 2));
  std::vector<double> keys{1, 1, 0, 0, 1, 1, 1, 0};
  for (bool causal : {false, true}) {
    Tensor mask = attention_mask(2, heads, tq, tk, keys, causal);
    auto r = multi_head_attention(x, x, x, tape.constant(mask), heads, p);
    const Tensor& w = r.weights.value();
    for (std::size_t row = 0; row < 2 * heads * tq; ++row) {
      double total = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        if (mask[row * tk + j] != 0.0) CHECK(w[row * tk + j] == 0.0);
        total += w[row * tk + j];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
  std::vector<double> none(tk, 0.0);
  Tensor all = attention_mask(1, 1, tq, tk, none, true);
  auto r = multi_head_attention(tape.constant(random_tensor({1, tq, d}, rng)), x.tape().constant(random_tensor({1, tk, d}, rng)),
                                x.tape().constant(random_tensor({1, tk, d}, rng)), tape.constant(all), 1, p);
  for (std::size_t i = 0; i < tq; ++i)
    for (std::size_t j = 0; j < tk; ++j) CHECK(r.weights.value()[i * tk + j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("zeroed output projections make blocks the identity") {
  auto model = tiny(2);
  zero_output_projections(model);
  Tape tape(false);
  std::mt19937_64 rng(5);
  Var x = tape.constant(random_tensor({1, 3, 8}, rng));
  Var ctx = tape.constant(random_tensor({1, 2, 8}, rng));
  auto out = transformer_block(x, ctx, {}, {}, 2, model.block_params(tape, "dec.0", true)).out;
  CHECK(out.value() == x.value());

  // encode then equals layer_norm(embedding * sqrt(d) + PE).
  std::vector<int> ids{4, 6, 5};
  std::vector<double> mask(3, 1.0);
  Var enc = model.encode(tape, ids, 1, 3, mask, nullptr);
  Var e = embedding(tape.parameter(model.params().get("src_embed")), ids);
  e = add(reshape(scale(e, std::sqrt(8.0)), {1, 3, 8}), tape.constant(positional_encoding(3, 8)));
  Var want = layer_norm(e, tape.parameter(model.params().get("enc.ln.g")), tape.parameter(model.params().get("enc.ln.b")));
  for (std::size_t k = 0; k < 24; ++k) CHECK(enc.value()[k] == doctest::Approx(want.value()[k]).epsilon(1e-12));
}

TEST_CASE("gradient check through one block (d=8, H=2, T=3)") {
  auto model = tiny(1, 7);
  std::mt19937_64 rng(9);
  for (auto& p : model.params()) p.value = random_tensor(p.value.shape(), rng, -0.5, 0.5);
  Parameter x{"x", random_tensor({1, 3, 8}, rng), {}}, ctx{"ctx", random_tensor({1, 2, 8}, rng), {}};
  std::vector<Parameter*> ptrs{&x, &ctx};
  for (auto& p : model.params())
    if (p.name.starts_with("dec.0.")) ptrs.push_back(&p);
  std::vector<double> keys{1, 1, 0};
  Tensor self_mask = attention_mask(1, 2, 3, 3, keys, true);
  double err = finite_difference_check(
      [&](Tape& t) {
        auto r = transformer_block(t.parameter(x), t.parameter(ctx), t.constant(self_mask), {}, 2,
                                   model.block_params(t, "dec.0", true));
        return weighted_sum(r.out);
      },
      ptrs, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("full one-layer model gradients match finite differences") {
  auto model = tiny(1, 11, 3, 2);
  Batch b = batch_of({{{4, 6}, {5, 4}, 0}, {{5}, {4}, 1}});
  auto ptrs = all_params(model);
  double err = finite_difference_check([&](Tape& t) { return model.loss(t, b, nullptr); }, ptrs, 1e-5);
  CHECK(err < 1e-4);

  TransformerConfig smooth;
  smooth.d_model = 8;
  smooth.heads = 2;
  smooth.layers = 1;
  smooth.label_smoothing = 0.1;
  TransformerModel ls(smooth, letters(3), letters(2), 4);
  auto lp = all_params(ls);
  CHECK(finite_difference_check([&](Tape& t) { return ls.loss(t, b, nullptr); }, lp, 1e-5) < 1e-4);
}

TEST_CASE("encoder padding law") {
  auto model = tiny(2, 13, 5, 3);
  std::vector<int> ids{4, 7, 5};
  std::vector<double> mask(3, 1.0);
  Tape t1(false), t2(false);
  Var plain = model.encode(t1, ids, 1, 3, mask, nullptr);
  std::vector<int> ids_p{4, 7, 5, 0, 0};
  std::vector<double> mask_p{1, 1, 1, 0, 0};
  Var pad = model.encode(t2, ids_p, 1, 5, mask_p, nullptr);
  for (std::size_t k = 0; k < 3 * 8; ++k) CHECK(std::abs(plain.value()[k] - pad.value()[k]) < 1e-9);

  Batch b = batch_of({{{4, 7}, {4}, 0}});
  Batch wide = batch_of({{{4, 7}, {4}, 0}, {{4, 7, 5, 6}, {4, 5, 4, 5}, 1}});
  Tape t3(false), t4(false);
  double alone = model.loss(t3, b, nullptr).value().item();
  // First row of the wide batch is the same pair, padded; compare its loss alone.
  Batch first = wide;
  for (std::size_t k = wide.target_len; k < 2 * wide.target_len; ++k) first.target_mask[k] = 0.0;
  CHECK(model.loss(t4, first, nullptr).value().item() == doctest::Approx(alone).epsilon(1e-9));
}

TEST_CASE("decoder causality") {
  auto model = tiny(2, 17, 4, 4);
  std::vector<int> src{4, 5, 6};
  std::vector<double> smask(3, 1.0);
  std::vector<int> prefix{1, 4, 5, 6, 7};
  std::vector<double> pmask(5, 1.0);
  Tape tape(false);
  Var enc = model.encode(tape, src, 1, 3, smask, nullptr);
  const Tensor base = model.decode_logits(tape, prefix, 1, 5, pmask, enc, smask, nullptr).value();
  CHECK(base.shape() == Shape{1, 5, 8});
  for (std::size_t j = 1; j < 5; ++j) {
    auto changed = prefix;
    changed[j] = changed[j] == 4 ? 6 : 4;
    const Tensor other = model.decode_logits(tape, changed, 1, 5, pmask, enc, smask, nullptr).value();
    for (std::size_t t = 0; t < 5; ++t) {
      bool same = true;
      for (std::size_t v = 0; v < 8; ++v) same = same && base[t * 8 + v] == other[t * 8 + v];
      CHECK(same == (t < j));
    }
  }
}

TEST_CASE("attention weights of every head normalize in a padded batch") {
  auto model = tiny(2, 19, 4, 4);
  Batch b = batch_of({{{4, 5, 6}, {4, 5}, 0}, {{6}, {5, 5, 4, 7}, 1}});
  Tape tape(false);
  std::vector<Var> weights;
  Var enc = model.encode(tape, b.source, b.size, b.source_len, b.source_mask, nullptr, &weights);
  model.decode_logits(tape, b.target_in, b.size, b.target_len, b.target_mask, enc, b.source_mask, nullptr, &weights);
  REQUIRE(weights.size() == 2 + 4);
  for (const Var& w : weights) {
    const Tensor& t = w.value();
    const std::size_t tk = t.dim(2);
    for (std::size_t row = 0; row < t.dim(0) * t.dim(1); ++row) {
      double total = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        CHECK(t[row * tk + j] >= 0.0);
        total += t[row * tk + j];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("initial loss is near ln V") {
  TransformerConfig cfg;
  cfg.d_model = 32;
  cfg.heads = 4;
  cfg.layers = 2;
  TransformerModel model(cfg, letters(26), letters(26), 5);
  Batch b = batch_of({{{4, 9, 12, 20}, {7, 7, 8}, 0}, {{5, 6}, {9, 10, 11, 12}, 1}});
  Tape tape(false);
  double loss = model.loss(tape, b, nullptr).value().item();
  CHECK(loss > 0.8 * std::log(30.0));
  CHECK(loss < 1.2 * std::log(30.0));
}

TEST_CASE("shape laws over the sweep grid") {
  for (int heads : {2, 4})
    for (int layers : {1, 2, 4, 6}) {
      TransformerConfig cfg;
      cfg.d_model = 128;
      cfg.heads = heads;
      cfg.layers = layers;
      TransformerModel model(cfg, letters(5), letters(6), 1);
      Tape tape(false);
      std::vector<int> src{4, 5, 6, 7};
      std::vector<double> smask(4, 1.0);
      Var enc = model.encode(tape, src, 1, 4, smask, nullptr);
      CHECK(enc.shape() == Shape{1, 4, 128});
      std::vector<int> prefix{1, 4};
      std::vector<double> pmask(2, 1.0);
      CHECK(model.decode_logits(tape, prefix, 1, 2, pmask, enc, smask, nullptr).shape() == Shape{1, 2, 10});
      auto x = tape.constant(Tensor({1, 3, 128}));
      CHECK(transformer_block(x, enc, {}, {}, heads, model.block_params(tape, "dec.0", true)).out.shape() ==
            Shape{1, 3, 128});
    }
  TransformerConfig bad;
  bad.d_model = 10;
  bad.heads = 4;
  CHECK_THROWS_AS(TransformerModel(bad, letters(2), letters(2), 1), ConfigError);
}
