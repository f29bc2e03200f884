// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lpvid {

/// Incompatible shapes or a violated structural contract.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A rollout or simulation produced a non-finite or exploding state.
/// Carries the step index (0-based, relative to the rollout start) at which
/// the guard tripped.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step)
      : std::runtime_error(what), step_index(step) {}
  long step_index;
};

/// Invalid experiment configuration (bad schema, unknown key, bad value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed data file. `line` is 1-based; 0 when not line-specific.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, long line_no = 0)
      : std::runtime_error(what), line(line_no) {}
  long line;
};

/// Training aborted (e.g. repeated divergent updates).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lpvid
