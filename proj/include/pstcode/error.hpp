#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pstcode {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input at a known location. `line` is 1-based; 0 when unknown.
class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& detail)
      : ParseError(line, detail,
                   line ? "line " + std::to_string(line) : std::string()) {}

  /// `location` replaces the default "line N" prefix, e.g. "corpus.jsonl:3".
  ParseError(std::size_t line, const std::string& detail,
             const std::string& location)
      : Error(location.empty() ? detail : location + ": " + detail),
        line_(line),
        detail_(detail) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

private:
  std::size_t line_;
  std::string detail_;
};

class SpeakerError : public ParseError {
public:
  using ParseError::ParseError;
};

class LookupError : public Error {
public:
  using Error::Error;
};

class EmptyInputError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class TransportError : public Error {
public:
  using Error::Error;
};

/// A model response that does not name a label from the taxonomy.
class LabelParseFailure : public Error {
public:
  LabelParseFailure(std::string raw, const std::string& why)
      : Error("unrecognized label: " + why), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

private:
  std::string raw_;
};

}  // namespace pstcode
