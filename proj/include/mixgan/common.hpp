#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixgan {

// All numerics run in double precision. Single-precision would roughly halve
// the arithmetic cost, but the finite-difference and eigensolver oracles in
// the test suite need the headroom, and desk-scale runs are small enough.
using real_t = double;

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto distinct exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid parameter or malformed configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Tensor shape mismatch.
struct ShapeError : Error {
  using Error::Error;
};

/// Problems with datasets or files on disk.
struct DataError : Error {
  using Error::Error;
};

/// Non-finite values or failed numeric routines.
struct NumericError : Error {
  using Error::Error;
};

/// A requested capability is not available in this build.
struct CapabilityError : Error {
  using Error::Error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void check_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline void check_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace mixgan
