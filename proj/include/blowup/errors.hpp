#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace blowup {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public Error {
public:
  ParseError(const std::string& msg, std::size_t offset)
      : Error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

class EvalDomainError : public Error {
public:
  EvalDomainError(const std::string& msg, std::string offender)
      : Error(msg + " in subexpression '" + offender + "'"), offender_(std::move(offender)) {}
  const std::string& offender() const { return offender_; }

private:
  std::string offender_;
};

class NonDifferentiable : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class QuadFailure : public Error {
public:
  using Error::Error;
};

class GridTooCoarse : public Error {
public:
  using Error::Error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class JumpsUnsupported : public Error {
public:
  using Error::Error;
};

class DriftNotPositive : public Error {
public:
  using Error::Error;
};

class DriftNotMonotone : public Error {
public:
  using Error::Error;
};

class CandidateNotPositive : public Error {
public:
  using Error::Error;
};

class UnboundedCandidate : public Error {
public:
  using Error::Error;
};

class SupremumDiverges : public Error {
public:
  using Error::Error;
};

class MomentDiverges : public Error {
public:
  using Error::Error;
};

class NotSymmetric : public Error {
public:
  using Error::Error;
};

class PreconditionError : public Error {
public:
  using Error::Error;
};

}  // namespace blowup
