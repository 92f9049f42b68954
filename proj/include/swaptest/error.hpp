#pragma once

#include <stdexcept>
#include <string>

namespace swaptest {

// Base of every exception thrown by the library. `code()` is a stable,
// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape_error", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("format_error", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io_error", m) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& m) : Error("training_error", m) {}
};

struct ReferencePoolError : Error {
  ReferencePoolError(const std::string& m, std::size_t eligible)
      : Error("reference_pool_error", m), eligible_count(eligible) {}
  std::size_t eligible_count;
};

struct StatsError : Error {
  explicit StatsError(const std::string& m) : Error("stats_error", m) {}
};

}  // namespace swaptest
