#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace amps {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter row lies outside its family's natural domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class TooManyComponents : public Error {
 public:
  using Error::Error;
};

/// Exhaustive search space exceeds the configured bound.
class TooLarge : public Error {
 public:
  using Error::Error;
};

class NotRowAdditive : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

class EmptyData : public Error {
 public:
  using Error::Error;
};

/// No test document was long enough to hold out any words.
class EmptyHoldout : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Wraps a failure raised while processing one agent.
class AgentError : public Error {
 public:
  AgentError(std::size_t agent, const std::string& what)
      : Error("agent " + std::to_string(agent) + ": " + what), agent_(agent) {}
  std::size_t agent() const noexcept { return agent_; }

 private:
  std::size_t agent_;
};

}  // namespace amps
