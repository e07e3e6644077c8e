#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>

#include "translit/corpus.hpp"
#include "translit/seq2seq.hpp"

namespace translit {

/// Builds a freshly initialized model from architecture entries (the keys of
/// config_entries(), plus `dropout` and `label_smoothing`). Unknown keys or
/// values that contradict `kind` throw ConfigError.
std::unique_ptr<Seq2SeqModel> make_model(ModelKind kind, const ConfigEntries& arch, Vocabulary source_vocab,
                                         Vocabulary target_vocab, std::uint64_t seed);

struct Checkpoint {
  Direction direction = Direction::C2T;
  std::unique_ptr<Seq2SeqModel> model;
};

inline constexpr const char* kCheckpointMagic = "TRANSLIT-CKPT";
inline constexpr int kCheckpointVersion = 1;

/// Text header (`TRANSLIT-CKPT v1`, key=value lines, `end`), then one binary
/// record per parameter: u32 name length, name, u32 rank, u64 dims, f64 values,
/// all little-endian.
void save_checkpoint(const Seq2SeqModel& model, Direction direction, std::ostream& out);
void save_checkpoint(const Seq2SeqModel& model, Direction direction, const std::filesystem::path& path);

/// Throws UnsupportedVersion for another format version and CorruptCheckpoint
/// for a bad magic line, a malformed header or truncated/extra data.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads parameters into an existing model. A checkpoint whose kind,
/// vocabularies or architecture differ throws ConfigMismatch.
Direction load_checkpoint_into(Seq2SeqModel& model, std::istream& in);

/// True when the file starts with the checkpoint magic.
bool is_checkpoint(const std::filesystem::path& path);

}  // namespace translit
