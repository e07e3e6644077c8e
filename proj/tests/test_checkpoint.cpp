#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "support/synthetic.hpp"
#include "translit/checkpoint.hpp"
#include "translit/errors.hpp"
#include "translit/rnn_seq2seq.hpp"
#include "translit/transformer_seq2seq.hpp"

using namespace translit;

namespace {

Vocabulary letters(std::size_t n) {
  std::vector<std::string> s;
  for (std::size_t i = 0; i < n; ++i) s.emplace_back(1, static_cast<char>('a' + i));
  return Vocabulary(s);
}

std::vector<std::unique_ptr<Seq2SeqModel>> models() {
  std::vector<std::unique_ptr<Seq2SeqModel>> out;
  const ConfigEntries rnn{{"embed_dim", "5"}, {"hidden", "6"}, {"layers", "2"}};
  out.push_back(make_model(ModelKind::rnn, rnn, letters(3), letters(4), 3));
  out.push_back(make_model(ModelKind::rnn_attention, rnn, letters(3), letters(4), 3));
  out.push_back(make_model(ModelKind::transformer, {{"d_model", "8"}, {"heads", "2"}, {"layers", "1"}, {"ffn_dim", "12"}},
                           Vocabulary(std::vector<std::string>{"ш", "а", ",", "="}), letters(4), 3));
  return out;
}

std::string bytes(const Seq2SeqModel& m, Direction d = Direction::T2C) {
  std::ostringstream os;
  save_checkpoint(m, d, os);
  return os.str();
}

Checkpoint load_bytes(const std::string& s) {
  std::istringstream in(s);
  return load_checkpoint(in);
}

}  // namespace

TEST_CASE("round trip is bit-identical for every model kind") {
  for (auto& m : models()) {
    const std::string b = bytes(*m);
    CHECK(b.rfind("TRANSLIT-CKPT v1\n", 0) == 0);
    Checkpoint ck = load_bytes(b);
    CHECK(ck.direction == Direction::T2C);
    CHECK(ck.model->kind() == m->kind());
    CHECK(ck.model->source_vocab() == m->source_vocab());
    CHECK(ck.model->target_vocab() == m->target_vocab());
    CHECK(ck.model->config_entries() == m->config_entries());
    REQUIRE(ck.model->params().size() == m->params().size());
    for (std::size_t i = 0; i < m->params().size(); ++i) {
      CHECK(ck.model->params()[i].name == m->params()[i].name);
      CHECK(ck.model->params()[i].value == m->params()[i].value);
    }
    CHECK(bytes(*ck.model) == b);
  }
}

TEST_CASE("file round trip and magic detection") {
  auto path = std::filesystem::temp_directory_path() / "translit_ckpt_test.bin";
  auto ms = models();
  save_checkpoint(*ms[1], Direction::C2T, path);
  CHECK(is_checkpoint(path));
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.direction == Direction::C2T);
  CHECK(bytes(*ck.model, Direction::C2T) == bytes(*ms[1], Direction::C2T));
  std::filesystem::remove(path);
  CHECK_FALSE(is_checkpoint(path));
  CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);
}

TEST_CASE("damaged checkpoints") {
  const std::string good = bytes(*models()[2]);
  std::string flipped = good;
  flipped[0] = 'X';
  CHECK_THROWS_AS(load_bytes(flipped), CorruptCheckpoint);
  CHECK_THROWS_AS(load_bytes(""), CorruptCheckpoint);

  std::string v2 = good;
  v2.replace(good.find("v1"), 2, "v2");
  CHECK_THROWS_AS(load_bytes(v2), UnsupportedVersion);

  const std::size_t header_end = good.find("end\n") + 4;
  for (std::size_t cut : {std::size_t{20}, header_end - 2, header_end, header_end + 3, header_end + 40, good.size() - 1})
    CHECK_THROWS_AS(load_bytes(good.substr(0, cut)), CorruptCheckpoint);
  CHECK_THROWS_AS(load_bytes(good + "x"), CorruptCheckpoint);

  std::string renamed = good;
  renamed.replace(renamed.find("arch.d_model=8"), 14, "arch.d_model=9");
  CHECK_THROWS_AS(load_bytes(renamed), CorruptCheckpoint);
  std::string unknown = good;
  unknown.replace(unknown.find("kind=transformer"), 16, "kind=lstm_crf__");
  CHECK_THROWS_AS(load_bytes(unknown), CorruptCheckpoint);
}

TEST_CASE("loading into a model with a different configuration") {
  auto ms = models();
  std::istringstream same(bytes(*ms[0]));
  auto fresh = make_model(ModelKind::rnn, {{"embed_dim", "5"}, {"hidden", "6"}, {"layers", "2"}}, letters(3),
                          letters(4), 99);
  CHECK(load_checkpoint_into(*fresh, same) == Direction::T2C);
  CHECK(bytes(*fresh) == bytes(*ms[0]));

  auto bigger = make_model(ModelKind::rnn, {{"embed_dim", "5"}, {"hidden", "6"}, {"layers", "2"}}, letters(3),
                           letters(5), 1);
  std::istringstream in1(bytes(*ms[0]));
  CHECK_THROWS_AS(load_checkpoint_into(*bigger, in1), ConfigMismatch);
  std::istringstream in2(bytes(*ms[1]));
  CHECK_THROWS_AS(load_checkpoint_into(*fresh, in2), ConfigMismatch);
  auto wider = make_model(ModelKind::rnn, {{"embed_dim", "5"}, {"hidden", "7"}, {"layers", "2"}}, letters(3),
                          letters(4), 1);
  std::istringstream in3(bytes(*ms[0]));
  CHECK_THROWS_AS(load_checkpoint_into(*wider, in3), ConfigMismatch);
}

TEST_CASE("model factory validation") {
  CHECK_THROWS_AS(make_model(ModelKind::rnn, {{"hiden", "4"}}, letters(2), letters(2), 1), ConfigError);
  CHECK_THROWS_AS(make_model(ModelKind::rnn, {{"attention", "1"}}, letters(2), letters(2), 1), ConfigError);
  CHECK_THROWS_AS(make_model(ModelKind::rnn, {{"hidden", "4x"}}, letters(2), letters(2), 1), ConfigError);
  CHECK_THROWS_AS(make_model(ModelKind::transformer, {{"hidden", "4"}}, letters(2), letters(2), 1), ConfigError);
  CHECK_THROWS_AS(make_model(ModelKind::transformer, {{"dropout", "abc"}}, letters(2), letters(2), 1), ConfigError);
  auto m = make_model(ModelKind::rnn_attention, {{"attention", "1"}, {"hidden", "4"}, {"embed_dim", "3"}}, letters(2),
                      letters(2), 1);
  CHECK(m->kind() == ModelKind::rnn_attention);
  CHECK(m->params().get("src_embed").value.dim(1) == 3);
  // Same seed, same initial parameters.
  auto again = make_model(ModelKind::rnn_attention, {{"hidden", "4"}, {"embed_dim", "3"}}, letters(2), letters(2), 1);
  CHECK(bytes(*m) == bytes(*again));
}
