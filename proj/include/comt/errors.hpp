#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace comt {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented schema or value constraint.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation is not allowed in the object's current state.
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public Error {
 public:
  DuplicateIdError(const std::string& what, std::vector<std::string> ids)
      : Error(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

/// A stage record is missing a field or carries the wrong type.
class SchemaError : public Error {
 public:
  SchemaError(std::string stage, std::string field, const std::string& what)
      : Error(what), stage_(std::move(stage)), field_(std::move(field)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string stage_;
  std::string field_;
};

/// A derived record names a parent that does not exist upstream.
class LineageError : public Error {
 public:
  using Error::Error;
};

/// Another writer holds the store lock.
class LockError : public Error {
 public:
  using Error::Error;
};

/// Transient backend failure (timeout, connection, 5xx); safe to retry later.
class RetriableBackendError : public Error {
 public:
  RetriableBackendError(const std::string& what, std::string subject_id = {})
      : Error(what), subject_id_(std::move(subject_id)) {}
  const std::string& subject_id() const noexcept { return subject_id_; }

 private:
  std::string subject_id_;
};

/// Backend answered, but the answer does not fit the expected structure.
class SchemaViolationError : public Error {
 public:
  SchemaViolationError(const std::string& what, std::string raw_response)
      : Error(what), raw_response_(std::move(raw_response)) {}
  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

class JudgeParseError : public Error {
 public:
  JudgeParseError(const std::string& what, std::string raw_response)
      : Error(what), raw_response_(std::move(raw_response)) {}
  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

/// Optimistic-concurrency failure: the caller saw a stale version.
class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace comt
