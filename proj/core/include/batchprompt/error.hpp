#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace batchprompt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset ingestion or selection failure. `row()` is 1-based, 0 when not tied to a record.
class DatasetError : public Error {
 public:
  DatasetError(const std::string& what, std::size_t row = 0)
      : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration or argument outside its documented domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A labeler could not produce a result for a round.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable, int attempts = 1)
      : Error(what), retryable_(retryable), attempts_(attempts) {}
  bool retryable() const noexcept { return retryable_; }
  /// Requests actually sent before giving up.
  int attempts() const noexcept { return attempts_; }

 private:
  bool retryable_;
  int attempts_;
};

/// The prompt does not fit the model context. Never retried.
class ContextLengthError : public BackendError {
 public:
  ContextLengthError(const std::string& what, std::size_t prompt_tokens, int attempts = 0)
      : BackendError(what, false, attempts), prompt_tokens_(prompt_tokens) {}
  std::size_t prompt_tokens() const noexcept { return prompt_tokens_; }

 private:
  std::size_t prompt_tokens_;
};

}  // namespace batchprompt
