#include "translit/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "translit/errors.hpp"

namespace translit {

namespace {

std::string trim(std::string_view s) {
  const char* ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

const std::vector<std::string> kCommonKeys{"direction", "model",  "corpus", "test_corpus", "test_count",
                                           "table",     "checkpoint", "report", "seed"};
const std::vector<std::string> kJointKeys{"max_input",     "max_output", "allow_epsilon",  "em_iterations",
                                          "prune_eps",     "order",      "discount",       "trim_min_count",
                                          "sentence_end",  "beam"};
const std::vector<std::string> kTrainKeys{"epochs",      "max_steps",    "batch_size", "batch_tokens",
                                          "clip_norm",   "eval_every",   "schedule",   "lr",
                                          "decay_factor", "decay_every", "warmup_steps", "beam",
                                          "length_norm_alpha", "max_len", "dropout"};
const std::vector<std::string> kRnnKeys{"embed_dim", "hidden", "layers"};
const std::vector<std::string> kTransformerKeys{"d_model", "heads", "layers", "ffn_dim", "label_smoothing"};

long long int_value(const std::string& key, const std::string& v, long long lo) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  if (out < lo) throw ConfigError(key + ": must be >= " + std::to_string(lo));
  return out;
}

double real_value(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  double out = 0.0;
  is >> out;
  if (!is || !is.eof()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool bool_value(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    std::string line = trim(raw);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw MalformedLine(line_no, "expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq)), value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw MalformedLine(line_no, "empty key");
    if (!out.emplace(key, value).second) throw MalformedLine(line_no, "duplicate key '" + key + "'");
  }
  return out;
}

const char* system_kind_name(SystemKind kind) {
  switch (kind) {
    case SystemKind::joint: return "joint";
    case SystemKind::rnn: return "rnn";
    case SystemKind::rnn_att: return "rnn_att";
    case SystemKind::transformer: return "transformer";
  }
  return "?";
}

SystemKind parse_system_kind(std::string_view name) {
  for (auto k : {SystemKind::joint, SystemKind::rnn, SystemKind::rnn_att, SystemKind::transformer})
    if (name == system_kind_name(k)) return k;
  throw ConfigError("unknown model '" + std::string(name) + "' (joint, rnn, rnn_att, transformer)");
}

std::vector<std::string> allowed_keys(SystemKind kind) {
  std::vector<std::string> keys = kCommonKeys;
  auto add = [&](const std::vector<std::string>& more) { keys.insert(keys.end(), more.begin(), more.end()); };
  if (kind == SystemKind::joint) {
    add(kJointKeys);
  } else {
    add(kTrainKeys);
    add(kind == SystemKind::transformer ? kTransformerKeys : kRnnKeys);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv, const std::filesystem::path& base_dir) {
  RunConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("model")) c.model = parse_system_kind(*v);
  const auto keys = allowed_keys(c.model);
  for (const auto& [k, v] : kv)
    if (!std::binary_search(keys.begin(), keys.end(), k))
      throw ConfigError("unknown key '" + k + "' for model " + system_kind_name(c.model));

  auto path = [&](const char* key, std::filesystem::path& out) {
    if (auto v = get(key); v && !v->empty()) out = std::filesystem::path(*v).is_absolute() ? std::filesystem::path(*v) : base_dir / *v;
  };
  if (auto v = get("direction")) {
    try {
      c.direction = parse_direction(*v);
    } catch (const Error&) {
      throw ConfigError("direction: expected C2T or T2C, got '" + *v + "'");
    }
  }
  path("corpus", c.corpus);
  path("test_corpus", c.test_corpus);
  path("table", c.table);
  path("checkpoint", c.checkpoint);
  path("report", c.report);
  if (auto v = get("test_count")) c.test_count = static_cast<std::size_t>(int_value("test_count", *v, 0));
  if (auto v = get("seed")) c.seed = static_cast<std::uint64_t>(int_value("seed", *v, 0));
  c.train.seed = c.seed;

  if (c.model == SystemKind::joint) {
    if (auto v = get("max_input")) c.em.max_input = static_cast<int>(int_value("max_input", *v, 1));
    if (auto v = get("max_output")) c.em.max_output = static_cast<int>(int_value("max_output", *v, 1));
    if (auto v = get("allow_epsilon")) c.em.allow_epsilon = bool_value("allow_epsilon", *v);
    if (auto v = get("em_iterations")) c.em.iterations = static_cast<int>(int_value("em_iterations", *v, 1));
    if (auto v = get("prune_eps")) c.em.prune_eps = real_value("prune_eps", *v);
    if (auto v = get("order")) c.ngram.order = static_cast<int>(int_value("order", *v, 1));
    if (auto v = get("discount")) c.ngram.discount = real_value("discount", *v);
    if (auto v = get("trim_min_count")) c.ngram.trim_min_count = real_value("trim_min_count", *v);
    if (auto v = get("sentence_end")) c.ngram.sentence_end = bool_value("sentence_end", *v);
    if (auto v = get("beam")) c.joint_beam = static_cast<std::size_t>(int_value("beam", *v, 1));
    return c;
  }

  const auto& arch_keys = c.model == SystemKind::transformer ? kTransformerKeys : kRnnKeys;
  for (const auto& k : arch_keys)
    if (auto v = get(k.c_str())) c.arch.emplace_back(k, *v);
  if (auto v = get("dropout")) c.arch.emplace_back("dropout", *v);

  auto& t = c.train;
  if (c.model == SystemKind::transformer) {
    t.schedule.kind = ScheduleKind::warmup;
    t.schedule.base_lr = 0.2;
    t.schedule.warmup_steps = 8000;
    t.schedule.d_model = 128;
    for (const auto& [k, v] : c.arch)
      if (k == "d_model") t.schedule.d_model = static_cast<int>(int_value(k, v, 1));
    // Step-bounded with token batches unless the config says otherwise.
    t.max_steps = 100000;
    t.epochs = 1000000;
    t.batch_tokens = get("batch_size") ? 0 : 4096;
  }
  if (auto v = get("schedule")) {
    if (*v == "step_decay") t.schedule.kind = ScheduleKind::step_decay;
    else if (*v == "warmup") t.schedule.kind = ScheduleKind::warmup;
    else throw ConfigError("schedule: expected step_decay or warmup, got '" + *v + "'");
  }
  if (auto v = get("epochs")) t.epochs = static_cast<int>(int_value("epochs", *v, 1));
  if (auto v = get("max_steps")) t.max_steps = static_cast<long>(int_value("max_steps", *v, 0));
  if (auto v = get("batch_size")) t.batch_size = static_cast<std::size_t>(int_value("batch_size", *v, 1));
  if (auto v = get("batch_tokens")) t.batch_tokens = static_cast<std::size_t>(int_value("batch_tokens", *v, 0));
  if (auto v = get("clip_norm")) t.clip_norm = real_value("clip_norm", *v);
  if (auto v = get("eval_every")) t.eval_every = static_cast<int>(int_value("eval_every", *v, 0));
  if (auto v = get("lr")) t.schedule.base_lr = real_value("lr", *v);
  if (auto v = get("decay_factor")) t.schedule.decay_factor = real_value("decay_factor", *v);
  if (auto v = get("decay_every")) t.schedule.decay_every_epochs = static_cast<int>(int_value("decay_every", *v, 1));
  if (auto v = get("warmup_steps")) t.schedule.warmup_steps = static_cast<int>(int_value("warmup_steps", *v, 1));
  if (auto v = get("beam")) c.beam.beam_width = static_cast<std::size_t>(int_value("beam", *v, 1));
  if (auto v = get("length_norm_alpha")) c.beam.length_norm_alpha = real_value("length_norm_alpha", *v);
  if (auto v = get("max_len")) c.beam.max_len = static_cast<std::size_t>(int_value("max_len", *v, 0));
  t.eval_beam = c.beam;
  t.schedule.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_map(parse_key_values(ss.str()), path.parent_path());
  } catch (const MalformedLine& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

SweepConfig parse_sweep(std::string_view text, const std::filesystem::path& base_dir) {
  SweepConfig sweep;
  sweep.base_dir = base_dir;
  std::string rest;
  std::set<std::string> labels;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    auto eq = line.find('=');
    if (eq == std::string::npos || trim(std::string_view(line).substr(0, eq)) != "point") {
      rest += line + "\n";
      continue;
    }
    rest += "\n";  // keeps line numbers of the base keys
    std::string body = trim(std::string_view(line).substr(eq + 1));
    auto bar = body.find('|');
    SweepPoint p;
    p.label = trim(std::string_view(body).substr(0, bar));
    if (p.label.empty()) throw MalformedLine(line_no, "sweep point without a label");
    if (p.label.find_first_of(",/\\\"") != std::string::npos)
      throw MalformedLine(line_no, "sweep label may not contain , / \\ or \"");
    if (bar != std::string::npos) {
      std::stringstream items(body.substr(bar + 1));
      std::string item;
      while (std::getline(items, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        auto e = item.find('=');
        if (e == std::string::npos) throw MalformedLine(line_no, "expected key=value in '" + item + "'");
        p.overrides[trim(std::string_view(item).substr(0, e))] = trim(std::string_view(item).substr(e + 1));
      }
    }
    if (!labels.insert(p.label).second) throw DuplicateLabel("duplicate sweep label '" + p.label + "'");
    sweep.points.push_back(std::move(p));
  }
  sweep.base = parse_key_values(rest);
  if (sweep.points.empty()) throw ConfigError("sweep grid is empty");
  return sweep;
}

}  // namespace translit
