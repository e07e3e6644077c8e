#include "translit/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <variant>

#include "translit/checkpoint.hpp"
#include "translit/errors.hpp"
#include "translit/metrics.hpp"
#include "translit/run_config.hpp"

namespace translit::cli {

namespace fs = std::filesystem;

namespace {

// Exceptions carrying an exit code; everything else maps by type in run().
struct Exit {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw Exit{code, message}; }

struct Flags {
  std::string config, checkpoint, corpus, table, out;
  std::optional<std::uint64_t> seed;
};

/// A trained model of either family.
class System {
 public:
  explicit System(JointModel joint) : model_(std::move(joint)) {}
  explicit System(Checkpoint ck) : model_(std::move(ck)) {}

  Direction direction() const {
    if (auto* j = std::get_if<JointModel>(&model_))
      return j->align.source_side == Side::cyrillic ? Direction::C2T : Direction::T2C;
    return std::get<Checkpoint>(model_).direction;
  }

  /// Throws DecodeFailure when no output exists.
  CharSeq translate(const CharSeq& source, const RunConfig& cfg) {
    if (auto* j = std::get_if<JointModel>(&model_)) return decode_joint(source, j->align, j->lm, cfg.joint_beam);
    auto& model = *std::get<Checkpoint>(model_).model;
    BeamConfig beam = cfg.beam;
    auto ids = decode_ids_with(model, encode_ids(source, model.source_vocab(), false), beam);
    return decode_ids(ids, model.target_vocab(), target_side(direction()));
  }

  void save(const fs::path& path) const {
    const fs::path tmp = path.string() + ".tmp";
    if (auto* j = std::get_if<JointModel>(&model_)) {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) fail(kFailure, "cannot write " + tmp.string());
      save_joint(*j, out);
      if (!out) fail(kFailure, "cannot write " + tmp.string());
    } else {
      auto& ck = std::get<Checkpoint>(model_);
      save_checkpoint(*ck.model, ck.direction, tmp);
    }
    fs::rename(tmp, path);
  }

 private:
  std::variant<JointModel, Checkpoint> model_;
};

System load_system(const fs::path& path) {
  if (!fs::exists(path)) throw CorruptCheckpoint("checkpoint not found: " + path.string());
  if (is_checkpoint(path)) return System(load_checkpoint(path));
  std::ifstream in(path, std::ios::binary);
  return System(load_joint(in));
}

std::optional<TransliterationTable> load_table_file(const fs::path& path) {
  if (path.empty()) return std::nullopt;
  try {
    return TransliterationTable::load(path);
  } catch (const Error& e) {
    fail(kDataError, "table " + path.string() + ": " + e.what());
  }
}

Corpus read_corpus(const fs::path& path, Direction dir, const std::optional<TransliterationTable>& table) {
  if (path.empty()) fail(kConfigError, "no corpus given (use --corpus or the corpus key)");
  if (!fs::is_regular_file(path)) fail(kDataError, "corpus not found: " + path.string());
  try {
    return load_corpus(path, dir, table ? &*table : nullptr);
  } catch (const Error& e) {
    fail(kDataError, path.string() + ": " + e.what());
  }
}

RunConfig load_run_config(const Flags& f, bool required) {
  RunConfig cfg;
  if (!f.config.empty()) {
    if (!fs::is_regular_file(f.config)) fail(kConfigError, "config not found: " + f.config);
    cfg = RunConfig::load(f.config);
  } else if (required) {
    fail(kConfigError, "--config is required");
  }
  if (!f.corpus.empty()) cfg.corpus = f.corpus;
  if (!f.table.empty()) cfg.table = f.table;
  if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
  if (f.seed) cfg.seed = cfg.train.seed = *f.seed;
  return cfg;
}

struct Split {
  Corpus train, test;
};

Split read_split(const RunConfig& cfg, const std::optional<TransliterationTable>& table) {
  Split s;
  s.train = read_corpus(cfg.corpus, cfg.direction, table);
  if (!cfg.test_corpus.empty()) {
    s.test = read_corpus(cfg.test_corpus, cfg.direction, table);
  } else if (cfg.test_count > 0) {
    if (cfg.test_count >= s.train.size()) fail(kDataError, "test_count leaves no training data");
    try {
      auto [tr, te] = split_corpus(s.train, SplitSpec{s.train.size() - cfg.test_count, cfg.test_count, cfg.seed});
      s.train = std::move(tr);
      s.test = std::move(te);
    } catch (const Error& e) {
      fail(kDataError, e.what());
    }
  }
  if (s.train.empty()) fail(kDataError, "training corpus is empty");
  return s;
}

EvalReport evaluate_system(System& sys, const Corpus& corpus, const RunConfig& cfg) {
  std::vector<CharSeq> preds;
  preds.reserve(corpus.size());
  for (const auto& g : corpus.groups) {
    try {
      preds.push_back(sys.translate(g.source, cfg));
    } catch (const DecodeFailure&) {
      preds.push_back(CharSeq{{}, target_side(corpus.direction), false});
    }
  }
  return evaluate(preds, corpus.groups);
}

/// Trains the configured system on `split.train`, writing the checkpoint
/// (after every epoch for neural models) and the JSONL report.
System train_system(const RunConfig& cfg, const Split& split, std::ostream& log) {
  std::ofstream report;
  if (!cfg.report.empty()) {
    report.open(cfg.report);
    if (!report) fail(kDataError, "cannot write report " + cfg.report.string());
  }

  if (cfg.model == SystemKind::joint) {
    JointModel joint;
    try {
      joint = train_joint(split.train, cfg.em, cfg.ngram);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      fail(kFailure, std::string("training failed: ") + e.what());
    }
    nlohmann::ordered_json j;
    j["model"] = "joint";
    j["graphones"] = joint.align.retained_count();
    j["em_log_likelihood"] = joint.align.log_likelihood;
    System sys(std::move(joint));
    sys.save(cfg.checkpoint);
    auto tr = evaluate_system(sys, split.train, cfg);
    j["train_wer"] = tr.wer;
    j["train_cer"] = tr.cer;
    if (!split.test.empty()) {
      auto te = evaluate_system(sys, split.test, cfg);
      j["test_wer"] = te.wer;
      j["test_cer"] = te.cer;
    }
    if (report.is_open()) report << j.dump() << "\n";
    log << "joint model: " << j["graphones"] << " graphones, train WER " << tr.wer << "\n";
    return sys;
  }

  auto kind = cfg.model == SystemKind::transformer ? ModelKind::transformer
              : cfg.model == SystemKind::rnn_att   ? ModelKind::rnn_attention
                                                   : ModelKind::rnn;
  auto model = make_model(kind, cfg.arch, build_vocabulary(split.train, source_side(cfg.direction)),
                          build_vocabulary(split.train, target_side(cfg.direction)), cfg.seed);
  const fs::path tmp = cfg.checkpoint.string() + ".tmp";
  auto on_epoch = [&](const TrainRecord& r) {
    save_checkpoint(*model, cfg.direction, tmp);
    fs::rename(tmp, cfg.checkpoint);
    if (report.is_open()) report << r.json() << "\n" << std::flush;
    log << "epoch " << r.epoch << " step " << r.step << " loss " << r.loss << "\n";
    return true;
  };
  try {
    train_loop(*model, split.train, split.test.empty() ? nullptr : &split.test, cfg.train, on_epoch);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail(kFailure, std::string("training failed: ") + e.what());
  }
  return System(Checkpoint{cfg.direction, std::move(model)});
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(f, true);
  if (!f.out.empty()) cfg.report = f.out;
  if (cfg.checkpoint.empty()) fail(kConfigError, "no checkpoint path given (use --checkpoint or the checkpoint key)");
  auto table = load_table_file(cfg.table);
  Split split = read_split(cfg, table);
  System sys = train_system(cfg, split, err);
  out << "wrote " << cfg.checkpoint.string() << "\n";
  return kOk;
}

int cmd_convert(const Flags& f, std::istream& in, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(f, false);
  if (cfg.checkpoint.empty()) fail(kConfigError, "--checkpoint is required");
  std::optional<System> sys;
  try {
    sys.emplace(load_system(cfg.checkpoint));
  } catch (const Error& e) {
    fail(kFailure, cfg.checkpoint.string() + ": " + e.what());
  }
  auto table = load_table_file(cfg.table);
  const TransliterationTable* tp = table ? &*table : nullptr;
  const Direction dir = sys->direction();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      CharSeq src = prepare_word(line, source_side(dir), tp);
      if (src.tokens.empty()) {
        out << "\n";
        continue;
      }
      CharSeq result = sys->translate(src, cfg);
      std::string word = detokenize(result);
      // Latin output is rendered in the native script when a table is available.
      if (dir == Direction::C2T && tp) word = latin_to_traditional(word, *tp);
      out << word << "\n";
    } catch (const Error& e) {
      err << "line " << line_no << ": " << line << ": " << e.what() << "\n";
      out << "\n";
    }
  }
  return kOk;
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream&) {
  RunConfig cfg = load_run_config(f, false);
  if (cfg.checkpoint.empty()) fail(kConfigError, "--checkpoint is required");
  std::optional<System> sys;
  try {
    sys.emplace(load_system(cfg.checkpoint));
  } catch (const Error& e) {
    fail(kFailure, cfg.checkpoint.string() + ": " + e.what());
  }
  auto table = load_table_file(cfg.table);
  fs::path path = !f.corpus.empty() ? cfg.corpus : !cfg.test_corpus.empty() ? cfg.test_corpus : cfg.corpus;
  Corpus corpus = read_corpus(path, sys->direction(), table);
  if (corpus.empty()) fail(kDataError, "test corpus is empty");
  auto r = evaluate_system(*sys, corpus, cfg);
  nlohmann::ordered_json j;
  j["wer"] = r.wer;
  j["cer"] = r.cer;
  j["n_total"] = r.n_total;
  j["n_correct"] = r.n_correct;
  out << j.dump() << "\n";
  if (!f.out.empty()) {
    std::ofstream file(f.out);
    if (!file) fail(kDataError, "cannot write " + f.out);
    file << j.dump() << "\n";
  }
  return kOk;
}

int cmd_sweep(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.config.empty()) fail(kConfigError, "--config is required");
  std::ifstream in(f.config);
  if (!in) fail(kConfigError, "config not found: " + f.config);
  std::stringstream text;
  text << in.rdbuf();
  const fs::path base_dir = fs::path(f.config).parent_path();
  SweepConfig sweep = parse_sweep(text.str(), base_dir);

  fs::path dir = base_dir / "sweep";
  if (auto it = sweep.base.find("sweep_dir"); it != sweep.base.end()) {
    dir = fs::path(it->second).is_absolute() ? fs::path(it->second) : base_dir / it->second;
    sweep.base.erase(it);
  }
  // Validate every point before training any of them.
  std::vector<RunConfig> configs;
  for (const auto& p : sweep.points) {
    auto kv = sweep.base;
    for (const auto& [k, v] : p.overrides) kv[k] = v;
    for (const char* k : {"checkpoint", "report"})
      if (kv.count(k)) fail(kConfigError, std::string("sweep points get their own ") + k + "; remove '" + k + "'");
    RunConfig cfg;
    try {
      cfg = RunConfig::from_map(kv, base_dir);
    } catch (const Error& e) {
      fail(kConfigError, "point " + p.label + ": " + e.what());
    }
    if (!f.corpus.empty()) cfg.corpus = f.corpus;
    if (!f.table.empty()) cfg.table = f.table;
    if (f.seed) cfg.seed = cfg.train.seed = *f.seed;
    if (cfg.test_corpus.empty() && cfg.test_count == 0)
      fail(kConfigError, "point " + p.label + ": set test_corpus or test_count");
    cfg.checkpoint = dir / (p.label + ".ckpt");
    cfg.report = dir / (p.label + ".jsonl");
    configs.push_back(std::move(cfg));
  }

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto& cfg = configs[i];
    const auto& label = sweep.points[i].label;
    auto table = load_table_file(cfg.table);
    Split split = read_split(cfg, table);
    if (split.test.empty()) fail(kDataError, "point " + label + ": test split is empty");
    fs::create_directories(dir);
    std::optional<System> sys;
    if (fs::exists(cfg.checkpoint)) {
      try {
        sys.emplace(load_system(cfg.checkpoint));
        err << "[" << label << "] resuming from " << cfg.checkpoint.string() << "\n";
      } catch (const Error& e) {
        err << "[" << label << "] retraining, existing checkpoint unusable: " << e.what() << "\n";
      }
    }
    if (!sys) {
      err << "[" << label << "] training " << system_kind_name(cfg.model) << "\n";
      sys.emplace(train_system(cfg, split, err));
    }
    auto r = evaluate_system(*sys, split.test, cfg);
    rows.push_back({label, r.wer, r.cer});
  }
  auto report = sweep_report(rows);
  out << report.csv();
  if (!f.out.empty()) {
    std::ofstream file(f.out);
    if (!file) fail(kDataError, "cannot write " + f.out);
    file << report.csv();
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cyrillic <-> Traditional Mongolian word conversion"};
  app.require_subcommand(1);
  Flags f;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "key = value run configuration");
    sub->add_option("--checkpoint", f.checkpoint, "model file");
    sub->add_option("--corpus", f.corpus, "word-pair corpus (source<TAB>ref1|ref2)");
    sub->add_option("--table", f.table, "script <-> Latin transliteration table");
    sub->add_option("--out", f.out, "output file");
    sub->add_option("--seed", f.seed, "random seed");
  };
  auto* train = app.add_subcommand("train", "train a model and write its checkpoint");
  auto* convert = app.add_subcommand("convert", "convert words read line by line from standard input");
  auto* eval = app.add_subcommand("eval", "print WER/CER of a checkpoint on a corpus as JSON");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate a grid of configurations, print CSV");
  for (auto* s : {train, convert, eval, sweep}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(f, out, err);
    if (*convert) return cmd_convert(f, in, out, err);
    if (*eval) return cmd_eval(f, out, err);
    return cmd_sweep(f, out, err);
  } catch (const Exit& e) {
    err << "error: " << e.message << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DuplicateLabel& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MalformedLine& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace translit::cli
