#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace acopf {

enum class ErrorCode {
  // case parsing
  MissingSection,
  MalformedRow,
  DuplicateBusId,
  // network assembly
  SingularBranch,
  NoSlackBus,
  UnsupportedCostModel,
  InvalidCase,
  // solvers
  NotConverged,
  SingularJacobian,
  SingularDecoupledMatrix,
  NotConvergedInput,
  // training / evaluation
  TooManyPFFailures,
  NonFiniteLoss,
  ZeroLoadNorm,
  LayoutMismatch,
  // general
  IoError,
  InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// FNV-1a 64-bit hash of a byte string, returned as a 16-char hex digest.
// Used to fingerprint case files in checkpoints and reports.
std::string fnv1a_hex(std::string_view data);

// SplitMix64 step. Deterministic stream used to derive sub-seeds from the
// single run seed so that dataset sampling, weight init and epoch shuffles
// draw from independent streams.
std::uint64_t splitmix64(std::uint64_t& state);

// Maps 64 random bits to a double in [0, 1) using the top 53 bits.
// std::uniform_real_distribution is implementation-defined, so datasets
// generated with it would not be byte-identical across standard libraries.
inline double uniform_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

namespace log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Threshold from ACOPF_LOG={error|info|debug}; default error.
Level threshold();
void write(Level level, const std::string& message);

inline void error(const std::string& m) { write(Level::Error, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void debug(const std::string& m) { write(Level::Debug, m); }

}  // namespace log

}  // namespace acopf
