#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "translit/checkpoint.hpp"
#include "translit/corpus.hpp"
#include "translit/decoding.hpp"
#include "translit/joint_ngram.hpp"
#include "translit/training.hpp"

namespace translit {

/// Flat `key = value` lines; `#` starts a comment. Duplicate keys and lines
/// without `=` throw MalformedLine.
std::map<std::string, std::string> parse_key_values(std::string_view text);

enum class SystemKind { joint, rnn, rnn_att, transformer };

const char* system_kind_name(SystemKind kind);
SystemKind parse_system_kind(std::string_view name);

/// Everything one train/eval run needs. Paths are resolved against the
/// directory of the config file they came from.
struct RunConfig {
  Direction direction = Direction::C2T;
  SystemKind model = SystemKind::transformer;
  std::filesystem::path corpus, test_corpus, table, checkpoint, report;
  std::size_t test_count = 0;  // > 0 and no test_corpus: hold out this many groups of `corpus`
  std::uint64_t seed = 1;

  EmConfig em;
  NGramConfig ngram;
  ConfigEntries arch;  // neural architecture keys, validated by make_model
  TrainConfig train;
  BeamConfig beam{1, 0, 0.0};
  std::size_t joint_beam = 10;

  static RunConfig from_map(const std::map<std::string, std::string>& kv, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
};

/// Keys accepted for `kind` (common, decoding and model-specific).
std::vector<std::string> allowed_keys(SystemKind kind);

/// One row of a sweep: `point = label | key=value, key=value`.
struct SweepPoint {
  std::string label;
  std::map<std::string, std::string> overrides;
};

struct SweepConfig {
  std::map<std::string, std::string> base;
  std::vector<SweepPoint> points;
  std::filesystem::path base_dir;
};

/// Throws ConfigError for an empty grid and DuplicateLabel for repeated labels.
SweepConfig parse_sweep(std::string_view text, const std::filesystem::path& base_dir);

}  // namespace translit
