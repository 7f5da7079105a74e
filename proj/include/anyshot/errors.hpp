#pragma once

#include <stdexcept>
#include <string>

namespace anyshot {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

struct MissingEmbedding : Error {
  explicit MissingEmbedding(const std::string& msg) : Error(msg) {}
};

struct ZeroNormError : Error {
  explicit ZeroNormError(const std::string& msg) : Error(msg) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

struct EmptyInput : Error {
  explicit EmptyInput(const std::string& msg) : Error(msg) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct TrainingDiverged : Error {
  explicit TrainingDiverged(const std::string& msg) : Error(msg) {}
};

struct ModeMismatch : Error {
  explicit ModeMismatch(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace anyshot
