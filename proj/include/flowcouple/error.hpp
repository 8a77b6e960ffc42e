#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace flowcouple {

// Raised when a caller breaks an operation's precondition (bad dimension,
// out-of-range t, oversized assignment problem, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed input files. Carries the byte offset (binary formats) or the
// 1-based line number (text formats) where parsing stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

// A gradient, loss or state became NaN/Inf. `step` is the optimizer step
// (or sampler step) at which it was detected.
class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(const std::string& what, long long step)
        : std::runtime_error(what), step_(step) {}

    long long step() const noexcept { return step_; }

private:
    long long step_;
};

// Bad configuration: unknown key or a value that fails typed parsing.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, std::string key)
        : std::runtime_error(what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace flowcouple
