#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "support/cli_fixture.hpp"
#include "translit/errors.hpp"
#include "translit/run_config.hpp"

using namespace translit;
using namespace translit::testing;

namespace {

const std::string kTable = std::string(TRANSLIT_DATA_DIR) + "/mongolian_latin.tsv";

std::string rnn_config(const std::string& extra = "") {
  return "direction = C2T\nmodel = rnn_att\ncorpus = train.tsv\ncheckpoint = model.ckpt\nreport = report.jsonl\n"
         "embed_dim = 16\nhidden = 24\nepochs = 60\nbatch_size = 8\nlr = 0.01\nseed = 3\n" +
         extra;
}

}  // namespace

TEST_CASE("key = value parsing") {
  auto kv = parse_key_values("# comment\n a = 1 \nb=two words # trailing\n\n");
  CHECK(kv.size() == 2);
  CHECK(kv["a"] == "1");
  CHECK(kv["b"] == "two words");
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), MalformedLine);
  CHECK_THROWS_AS(parse_key_values("just words\n"), MalformedLine);

  auto c = RunConfig::from_map({{"model", "transformer"}, {"d_model", "64"}, {"corpus", "x.tsv"}}, "/data");
  CHECK(c.corpus == "/data/x.tsv");
  CHECK(c.train.schedule.kind == ScheduleKind::warmup);
  CHECK(c.train.schedule.base_lr == 0.2);
  CHECK(c.train.schedule.warmup_steps == 8000);
  CHECK(c.train.schedule.d_model == 64);
  CHECK(c.train.batch_tokens == 4096);
  CHECK(c.train.max_steps == 100000);
  auto seqs = RunConfig::from_map({{"model", "transformer"}, {"batch_size", "16"}}, "");
  CHECK(seqs.train.batch_tokens == 0);
  CHECK(seqs.train.batch_size == 16);
  auto r = RunConfig::from_map({{"model", "rnn"}}, "");
  CHECK(r.train.schedule.kind == ScheduleKind::step_decay);
  CHECK(r.train.schedule.base_lr == 0.0005);
  CHECK(r.train.batch_size == 32);
  CHECK(r.train.epochs == 100);
  CHECK_THROWS_AS(RunConfig::from_map({{"model", "rnn"}, {"d_model", "8"}}, ""), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"model", "joint"}, {"hidden", "8"}}, ""), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"model", "gru"}}, ""), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"epochs", "ten"}}, ""), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"direction", "X2Y"}}, ""), ConfigError);
}

TEST_CASE("sweep grid parsing") {
  auto s = parse_sweep("model = joint\npoint = N3 | order=3\npoint = N5 | order = 5, discount=0.3\n", "/d");
  REQUIRE(s.points.size() == 2);
  CHECK(s.points[1].label == "N5");
  CHECK(s.points[1].overrides.at("discount") == "0.3");
  CHECK(s.base.at("model") == "joint");
  CHECK_THROWS_AS(parse_sweep("model = joint\n", "/d"), ConfigError);
  CHECK_THROWS_AS(parse_sweep("point = a | order=3\npoint = a | order=4\n", "/d"), DuplicateLabel);
  CHECK_THROWS_AS(parse_sweep("point = a | order\n", "/d"), MalformedLine);
}

TEST_CASE("train: success, missing data, bad keys") {
  ScratchDir dir("cli_train");
  Corpus c = synthetic_corpus(21, 24);
  dir.file("train.tsv", corpus_text(c));
  auto cfg = dir.file("run.conf", rnn_config());

  auto ok = run_cli({"train", "--config", cfg});
  CHECK(ok.code == 0);
  CHECK(std::filesystem::exists(dir / "model.ckpt"));
  CHECK_FALSE(std::filesystem::exists(dir / "model.ckpt.tmp"));
  std::istringstream report(read_file(dir / "report.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(report, line)) {
    CHECK(nlohmann::json::parse(line).contains("loss"));
    ++lines;
  }
  CHECK(lines == 60);

  auto missing = run_cli({"train", "--config", cfg, "--corpus", dir / "nope.tsv"});
  CHECK(missing.code == 3);
  auto malformed = run_cli({"train", "--config", cfg, "--corpus", dir.file("bad.tsv", "no tab here\n")});
  CHECK(malformed.code == 3);

  auto typo = run_cli({"train", "--config", dir.file("typo.conf", rnn_config("hiden_units = 4\n"))});
  CHECK(typo.code == 2);
  CHECK(typo.err.find("hiden_units") != std::string::npos);
  CHECK(run_cli({"train"}).code == 2);
  CHECK(run_cli({"train", "--config", dir / "absent.conf"}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"train", "--config", dir.file("arch.conf", rnn_config("layers = 0\n"))}).code == 2);
}

TEST_CASE("training is reproducible byte for byte; convert is a pure function") {
  ScratchDir dir("cli_repro");
  Corpus c = synthetic_corpus(22, 16);
  dir.file("train.tsv", corpus_text(c));
  auto cfg = dir.file("run.conf", rnn_config());
  REQUIRE(run_cli({"train", "--config", cfg}).code == 0);
  const std::string first = read_file(dir / "model.ckpt");
  REQUIRE(run_cli({"train", "--config", cfg}).code == 0);
  CHECK(read_file(dir / "model.ckpt") == first);
  REQUIRE(run_cli({"train", "--config", cfg, "--seed", "4"}).code == 0);
  CHECK(read_file(dir / "model.ckpt") != first);
  REQUIRE(run_cli({"train", "--config", cfg}).code == 0);

  std::string input;
  for (const auto& g : c.groups) input += join_tokens(g.source.tokens) + "\n";
  auto a = run_cli({"convert", "--checkpoint", dir / "model.ckpt"}, input);
  auto b = run_cli({"convert", "--checkpoint", dir / "model.ckpt"}, input);
  CHECK(a.code == 0);
  CHECK(a.out == b.out);

  // The model memorized its 16 training pairs.
  std::istringstream lines(a.out);
  std::string line;
  for (const auto& g : c.groups) {
    REQUIRE(std::getline(lines, line));
    CHECK(line == join_tokens(g.references[0].tokens));
  }

  auto ev = run_cli({"eval", "--checkpoint", dir / "model.ckpt", "--corpus", dir / "train.tsv"});
  REQUIRE(ev.code == 0);
  auto j = nlohmann::json::parse(ev.out);
  CHECK(j.size() == 4);
  CHECK(j["wer"].get<double>() == 0.0);
  CHECK(j["cer"].get<double>() == 0.0);
  CHECK(j["n_total"].get<int>() == 16);
  CHECK(j["n_correct"].get<int>() == 16);
}

TEST_CASE("convert: script post-processing, bad lines, empty input, corrupt checkpoints") {
  ScratchDir dir("cli_convert");
  Corpus c = synthetic_corpus(23, 40);
  dir.file("train.tsv", corpus_text(c));
  auto cfg = dir.file("joint.conf", "model = joint\ncorpus = train.tsv\ncheckpoint = joint.model\norder = 3\n");
  REQUIRE(run_cli({"train", "--config", cfg}).code == 0);

  const auto& g = c.groups[0];
  auto latin = run_cli({"convert", "--checkpoint", dir / "joint.model"}, join_tokens(g.source.tokens) + "\n");
  CHECK(latin.out == join_tokens(g.references[0].tokens) + "\n");
  auto table = TransliterationTable::load(kTable);
  auto script =
      run_cli({"convert", "--checkpoint", dir / "joint.model", "--table", kTable}, join_tokens(g.source.tokens) + "\n");
  CHECK(script.out == latin_to_traditional(join_tokens(g.references[0].tokens), table) + "\n");

  auto bad = run_cli({"convert", "--checkpoint", dir / "joint.model"},
                     join_tokens(g.source.tokens) + "\n\xff\xfe\n" + join_tokens(c.groups[1].source.tokens) + "\n");
  CHECK(bad.code == 0);
  CHECK(bad.out == join_tokens(g.references[0].tokens) + "\n\n" + join_tokens(c.groups[1].references[0].tokens) + "\n");
  CHECK(bad.err.find("line 2") != std::string::npos);

  auto empty = run_cli({"convert", "--checkpoint", dir / "joint.model"}, "");
  CHECK(empty.code == 0);
  CHECK(empty.out.empty());

  dir.file("corrupt.ckpt", "TRANSLIT-CKPT v1\nkind=rnn\n");
  CHECK(run_cli({"convert", "--checkpoint", dir / "corrupt.ckpt"}, "абв\n").code == 4);
  dir.file("garbage.bin", "not a model at all");
  CHECK(run_cli({"convert", "--checkpoint", dir / "garbage.bin"}, "абв\n").code == 4);
  CHECK(run_cli({"convert", "--checkpoint", dir / "missing.bin"}, "").code == 4);
  CHECK(run_cli({"convert"}, "").code == 2);

  auto ev = run_cli({"eval", "--checkpoint", dir / "joint.model", "--corpus", dir / "train.tsv"});
  CHECK(nlohmann::json::parse(ev.out)["wer"].get<double>() == 0.0);
  CHECK(run_cli({"eval", "--checkpoint", dir / "joint.model", "--corpus", dir.file("empty.tsv", "")}).code == 3);
  CHECK(run_cli({"eval", "--checkpoint", dir / "joint.model", "--corpus", dir / "nope.tsv"}).code == 3);
}

TEST_CASE("T2C conversion reads script input through the table") {
  ScratchDir dir("cli_t2c");
  Corpus c = synthetic_corpus(24, 30, Direction::T2C);
  dir.file("train.tsv", corpus_text(c));
  auto cfg = dir.file("t2c.conf", "direction = T2C\nmodel = joint\ncorpus = train.tsv\ncheckpoint = t2c.model\n");
  REQUIRE(run_cli({"train", "--config", cfg}).code == 0);
  auto table = TransliterationTable::load(kTable);
  // Pick a word whose Latin form is unambiguous in the training data.
  const auto& g = c.groups[0];
  std::string script = latin_to_traditional(join_tokens(g.source.tokens), table);
  auto a = run_cli({"convert", "--checkpoint", dir / "t2c.model", "--table", kTable}, script + "\n");
  auto b = run_cli({"convert", "--checkpoint", dir / "t2c.model"}, join_tokens(g.source.tokens) + "\n");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == join_tokens(g.references[0].tokens) + "\n");
}

TEST_CASE("sweep: report rows, resume, duplicate labels") {
  ScratchDir dir("cli_sweep");
  Corpus c = synthetic_corpus(25, 60);
  dir.file("all.tsv", corpus_text(c));
  auto cfg = dir.file("sweep.conf",
                      "model = joint\ncorpus = all.tsv\ntest_count = 10\nsweep_dir = runs\n"
                      "point = N2 | order=2\npoint = N3 | order=3\n");
  auto first = run_cli({"sweep", "--config", cfg, "--out", dir / "sweep.csv"});
  REQUIRE(first.code == 0);
  std::istringstream csv(first.out);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "label,wer,cer");
  CHECK(rows[1].rfind("N2,", 0) == 0);
  CHECK(rows[2].rfind("N3,", 0) == 0);
  CHECK(read_file(dir / "sweep.csv") == first.out);
  CHECK(std::filesystem::exists(dir / "runs/N2.ckpt"));

  auto stamp = std::filesystem::last_write_time(dir / "runs/N3.ckpt");
  auto again = run_cli({"sweep", "--config", cfg});
  CHECK(again.code == 0);
  CHECK(again.out == first.out);
  CHECK(again.err.find("[N2] resuming") != std::string::npos);
  CHECK(again.err.find("training") == std::string::npos);
  CHECK(std::filesystem::last_write_time(dir / "runs/N3.ckpt") == stamp);

  auto dup = dir.file("dup.conf", "model = joint\ncorpus = all.tsv\ntest_count = 10\npoint = a | order=2\npoint = a\n");
  CHECK(run_cli({"sweep", "--config", dup}).code == 2);
  auto empty = dir.file("empty.conf", "model = joint\ncorpus = all.tsv\ntest_count = 10\n");
  CHECK(run_cli({"sweep", "--config", empty}).code == 2);
  auto no_test = dir.file("notest.conf", "model = joint\ncorpus = all.tsv\npoint = a\n");
  CHECK(run_cli({"sweep", "--config", no_test}).code == 2);
  auto bad_key = dir.file("badkey.conf", "model = joint\ncorpus = all.tsv\ntest_count = 5\npoint = a | hidden=3\n");
  auto r = run_cli({"sweep", "--config", bad_key});
  CHECK(r.code == 2);
  CHECK(r.err.find("hidden") != std::string::npos);
}
