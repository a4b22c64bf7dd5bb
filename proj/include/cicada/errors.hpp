#pragma once

#include <stdexcept>
#include <string>

namespace cicada {

// Error codes carried by every exception the library throws.  The CLI maps
// them onto process exit codes: config -> 2, I/O -> 3, numerical -> 4,
// shape -> 5.
enum class Err {
  // config
  BadConfig,
  // I/O and persistence
  IoError,
  CorruptFile,
  VersionMismatch,
  MissingLabels,
  EmptyScores,
  // numerical
  RankDeficient,
  Singular,
  NonFiniteLoss,
  NonFiniteGradient,
  SingleClass,
  NoPositives,
  MissingStats,
  // shape / sizing
  ShapeMismatch,
  DimensionMismatch,
  LengthMismatch,
  NonScalarRoot,
  SeriesTooShort,
  TooFewWindows,
  EmptySegment,
  EmptyBatch,
};

const char* err_name(Err e);

// Category used for CLI exit codes.
int err_exit_code(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Err code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace cicada
