#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace translit {

/// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TRANSLIT_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

// script_codec
TRANSLIT_DEFINE_ERROR(DuplicateEntry);
TRANSLIT_DEFINE_ERROR(EmptyTable);
TRANSLIT_DEFINE_ERROR(PrefixConflict);
TRANSLIT_DEFINE_ERROR(EmptyInput);

// corpus
TRANSLIT_DEFINE_ERROR(SplitSizeError);

// tensor_autodiff
TRANSLIT_DEFINE_ERROR(ShapeError);
TRANSLIT_DEFINE_ERROR(IndexError);
TRANSLIT_DEFINE_ERROR(EmptyLossError);
TRANSLIT_DEFINE_ERROR(NonScalarBackward);
TRANSLIT_DEFINE_ERROR(TapeError);

// joint_ngram
TRANSLIT_DEFINE_ERROR(UnalignablePair);
TRANSLIT_DEFINE_ERROR(EmptyModel);
TRANSLIT_DEFINE_ERROR(DecodeFailure);

// models / training
TRANSLIT_DEFINE_ERROR(ConfigError);
TRANSLIT_DEFINE_ERROR(NanGradientError);
TRANSLIT_DEFINE_ERROR(UnsupportedVersion);
TRANSLIT_DEFINE_ERROR(CorruptCheckpoint);
TRANSLIT_DEFINE_ERROR(ConfigMismatch);

// metrics
TRANSLIT_DEFINE_ERROR(AlignmentError);
TRANSLIT_DEFINE_ERROR(DuplicateLabel);

#undef TRANSLIT_DEFINE_ERROR

/// Malformed input line; carries the 1-based line number.
class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Error tied to a position inside a word (code point index or byte offset).
class PositionalError : public Error {
 public:
  PositionalError(std::size_t position, const std::string& what)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Script symbol absent from the transliteration table; position is a code point index.
class UnknownSymbol : public PositionalError {
 public:
  using PositionalError::PositionalError;
};

/// Latin residue that no table entry matches; position is a byte offset.
class UnparseableLatin : public PositionalError {
 public:
  using PositionalError::PositionalError;
};

}  // namespace translit
