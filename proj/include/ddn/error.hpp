#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace ddn {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad shapes, bad arguments, malformed files, bad config keys. CLI exit code 1.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf escaping a computation, diverging loss. CLI exit code 2.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <class A, class... Rest>
void format_into(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  format_into(os, rest...);
}
}  // namespace detail

template <class... Args>
[[noreturn]] void fail(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  throw ValidationError(os.str());
}

template <class... Args>
[[noreturn]] void fail_numeric(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  throw NumericalError(os.str());
}

template <class... Args>
void require(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

}  // namespace ddn
