#include "core/common.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>

namespace acopf {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicateBusId: return "DuplicateBusId";
    case ErrorCode::SingularBranch: return "SingularBranch";
    case ErrorCode::NoSlackBus: return "NoSlackBus";
    case ErrorCode::UnsupportedCostModel: return "UnsupportedCostModel";
    case ErrorCode::InvalidCase: return "InvalidCase";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::SingularDecoupledMatrix: return "SingularDecoupledMatrix";
    case ErrorCode::NotConvergedInput: return "NotConvergedInput";
    case ErrorCode::TooManyPFFailures: return "TooManyPFFailures";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ZeroLoadNorm: return "ZeroLoadNorm";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace log {

Level threshold() {
  static Level cached = [] {
    const char* env = std::getenv("ACOPF_LOG");
    if (env == nullptr) return Level::Error;
    std::string v(env);
    if (v == "debug") return Level::Debug;
    if (v == "info") return Level::Info;
    return Level::Error;
  }();
  return cached;
}

void write(Level level, const std::string& message) {
  if (level > threshold()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const char* tag = level == Level::Error ? "error" : (level == Level::Info ? "info" : "debug");
  std::fprintf(stderr, "[acopf:%s] %s\n", tag, message.c_str());
}

}  // namespace log

}  // namespace acopf
