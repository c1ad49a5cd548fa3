#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tte {

enum class ErrorKind {
    invalid,           // bad argument or contract violation
    parse,             // malformed input file
    io,                // missing file or failed read/write
    undefined_metric,  // metric has no defined value on the given data
};

class TteError : public std::runtime_error {
  public:
    TteError(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw TteError(kind, msg);
}

// Collected non-fatal diagnostics (e.g. a task code that never matches).
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, const std::string& msg) {
    if (sink != nullptr) sink->push_back(msg);
}

}  // namespace tte
