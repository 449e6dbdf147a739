#pragma once

#include <stdexcept>
#include <string>

namespace coa {

// Base for every error the harness raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration; aborts the whole run.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files (manifests, fixtures, split specs).
class InputError : public Error {
 public:
  using Error::Error;
};

// Network-level failure talking to a model service. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The service answered, but not with something we can use.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string raw_payload)
      : Error(what), raw_(std::move(raw_payload)) {}
  explicit ProtocolError(const std::string& what) : Error(what) {}

  const std::string& raw_payload() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Scripted mock has no entry for the request. Always a test/fixture bug.
class FixtureMissError : public Error {
 public:
  using Error::Error;
};

// A metric could not be computed for one image (e.g. zero embedding).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace coa
