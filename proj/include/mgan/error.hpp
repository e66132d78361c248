#pragma once

#include <stdexcept>
#include <string>

namespace mgan {

enum class ErrorKind
{
  config,    // invalid configuration or input data
  shape,     // dimension mismatch
  contract,  // violated precondition on an otherwise well-formed call
  numerical, // NaN/Inf, solver divergence, degenerate statistics
  domain,    // argument outside the mathematical domain
  io         // filesystem failures
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
  throw Error(kind, what);
}

inline void require(bool ok, ErrorKind kind, const std::string& what)
{
  if (!ok)
    fail(kind, what);
}

} // namespace mgan
