#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace shufflerl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or caller-supplied argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent, or insufficient market data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Data error tied to a location in an input file.
class ParseError : public DataError {
 public:
  ParseError(const std::filesystem::path& file, std::size_t line,
             const std::string& what);

  const std::filesystem::path& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::filesystem::path file_;
  std::size_t line_;
};

/// Array or layer shapes that do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity emerged from a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A metric is mathematically undefined for its input (e.g. zero variance).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Misuse of a stateful object, such as stepping a finished episode.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace shufflerl
