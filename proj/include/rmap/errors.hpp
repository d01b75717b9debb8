#pragma once

#include <stdexcept>
#include <string>

namespace rmap {

/// Shading geometry that the reflection model cannot evaluate (backfacing, degenerate half vector).
class InvalidGeometry : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Malformed or missing files, with the offending path/line in the message.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input (mesh, pose, manifest, table). Carries a 1-based line number.
class ParseError : public IoError {
  public:
    ParseError(const std::string &source, int line, const std::string &what)
        : IoError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

  private:
    int line_;
};

} // namespace rmap
