#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace unetgan {

using Shape = std::vector<std::size_t>;

// Thrown for inconsistent tensor shapes; message names the offending op.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (invalid invariant, unknown key, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file contents (WAV, checkpoint, manifest).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input data (empty corpus, zero-power signal, out-of-range segment).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace unetgan
