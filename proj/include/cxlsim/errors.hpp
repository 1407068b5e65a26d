#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cxlsim {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchedulingInPast : public SimError {
 public:
  using SimError::SimError;
};

// Raised when the event queue runs dry (ignoring background timers) while the
// run predicate is still false.
class Deadlock : public SimError {
 public:
  Deadlock(const std::string& what, std::vector<std::string> blocked)
      : SimError(what), blocked_(std::move(blocked)) {}
  const std::vector<std::string>& blocked() const { return blocked_; }

 private:
  std::vector<std::string> blocked_;
};

class ConfigError : public SimError {
 public:
  ConfigError(const std::string& key, const std::string& msg)
      : SimError("config key '" + key + "': " + msg), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class RangeError : public SimError {
 public:
  using SimError::SimError;
};

class SpecError : public SimError {
 public:
  using SimError::SimError;
};

class ParseError : public SimError {
 public:
  ParseError(std::size_t line, const std::string& msg)
      : SimError("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class BarrierMismatch : public SimError {
 public:
  using SimError::SimError;
};

class UnknownDestination : public SimError {
 public:
  using SimError::SimError;
};

class ProtocolViolation : public SimError {
 public:
  using SimError::SimError;
};

class DuplicateAck : public ProtocolViolation {
 public:
  using ProtocolViolation::ProtocolViolation;
};

class UnmatchedVal : public ProtocolViolation {
 public:
  using ProtocolViolation::ProtocolViolation;
};

class DramLogOverflow : public SimError {
 public:
  using SimError::SimError;
};

class RecoveryTimeout : public SimError {
 public:
  using SimError::SimError;
};

}  // namespace cxlsim
