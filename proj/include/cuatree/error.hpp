#pragma once

#include <stdexcept>
#include <string>

namespace cuatree {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class AssetError : public Error {
 public:
  using Error::Error;
};

// Remote environment or agent gateway could not be reached or misbehaved.
class TransportError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class EmptySummaryError : public Error {
 public:
  using Error::Error;
};

class UndefinedAverageError : public Error {
 public:
  using Error::Error;
};

}  // namespace cuatree
