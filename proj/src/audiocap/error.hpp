#pragma once

#include <stdexcept>
#include <string>

namespace audiocap {

// Each kind maps onto one status code of the C API.
enum class ErrorKind {
  InvalidArgument,
  InvalidSpec,
  Io,
  MissingInput,
  CorruptFile,
  UnknownVersion,
  Numeric,
  Contract,
  Data,
  Config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace audiocap
