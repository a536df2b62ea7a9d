#pragma once

#include <stdexcept>
#include <string>

namespace qdyne {

// Malformed input text (sequence DSL, scenario files, CLI ranges).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string msg, int line = 0, int column = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ":" +
                                          std::to_string(column) + ": " + msg
                                    : msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// A physically inconsistent request (e.g. interaction without sensor prep).
class PhysicsError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A filter or selection produced nothing to work with.
class EmptyResultError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qdyne
