#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace normgraph {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named invariant was broken. `rule()` is the invariant name as reported
/// by validate_project and the event store.
class InvariantError : public Error {
 public:
  InvariantError(std::string rule, const std::string& detail)
      : Error(rule + ": " + detail), rule_(std::move(rule)) {}
  const std::string& rule() const { return rule_; }

 private:
  std::string rule_;
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what,
                             std::vector<std::string> offending = {})
      : Error(what), offending_(std::move(offending)) {}
  const std::vector<std::string>& offending_ids() const { return offending_; }

 private:
  std::vector<std::string> offending_;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace normgraph
