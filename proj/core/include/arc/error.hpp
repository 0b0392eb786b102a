#pragma once

#include <stdexcept>
#include <string>

namespace arc {

// Failure categories; the CLI maps them onto process exit codes
// (config/contract/dimension -> 2, numeric -> 3, io -> 4).
enum class ErrorKind { Config, Dimension, Contract, Numeric, Io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_config(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] inline void fail_dim(const std::string& msg) { throw Error(ErrorKind::Dimension, msg); }
[[noreturn]] inline void fail_contract(const std::string& msg) { throw Error(ErrorKind::Contract, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(ErrorKind::Io, msg); }

}  // namespace arc
