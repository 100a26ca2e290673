#pragma once

#include <stdexcept>
#include <string>

namespace iclr {

/// Base for every error raised by the library. `module()` names the
/// subsystem that raised it so the CLI can attribute failures.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Invalid configuration or input data. The CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Failure while running (victim transport, I/O mid-run). Exit code 3.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace iclr
