#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace scone {

/// Failure class, mapped 1:1 to CLI exit codes (usage=1, data=2, numeric=3).
enum class ErrorKind { usage, data, numeric };

/// All library errors carry a stable short code (e.g. "corrupt-file") that
/// callers and tests can match on, plus a human-readable message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const { return kind_; }
    const std::string& code() const { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

[[noreturn]] inline void throw_data(std::string code, const std::string& msg) {
    throw Error(ErrorKind::data, std::move(code), msg);
}

[[noreturn]] inline void throw_numeric(std::string code, const std::string& msg) {
    throw Error(ErrorKind::numeric, std::move(code), msg);
}

[[noreturn]] inline void throw_usage(std::string code, const std::string& msg) {
    throw Error(ErrorKind::usage, std::move(code), msg);
}

} // namespace scone
