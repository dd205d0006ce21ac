#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace formica {

/// Invalid or unparseable run configuration. Carries every violation found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// A runtime invariant (mass, positivity, field consistency) was violated.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear solver failed to reach its residual tolerance.
class SolverError : public InvariantError {
 public:
  SolverError(const std::string& what, double residual)
      : InvariantError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Output could not be written or input could not be read.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace formica
