#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace ka {

// Precondition violated by the caller (bad dimension, bad hyperparameter).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Zero-norm vector or zero-variance sample where a direction or
// correlation is required.
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// q_i = 0 where p_i > 0.
class DivergenceUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A class received no members when clustering by teacher prediction.
class EmptyCluster : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Base for everything caused by external data: files, corpora, models.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class ChecksumMismatch : public DataError {
 public:
  using DataError::DataError;
};

class EmptyCorpus : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Experiment configuration problem; `path` is the dotted key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace ka
