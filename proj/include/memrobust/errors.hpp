#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace memrobust {

// Exit-code scheme shared with the CLI:
//   0 ok, 2 input/format error, 3 domain error, 4 numerical error.
class Error : public std::runtime_error {
public:
    Error(std::string msg, int exit_code)
        : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}

    [[nodiscard]] int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

/// Malformed input files (bad header, unparsable cells, misaligned cycles).
class FormatError : public Error {
public:
    explicit FormatError(std::string msg) : Error(std::move(msg), 2) {}
};

/// Invalid arguments to an operation (bad window, off-grid config, ...).
class ArgumentError : public Error {
public:
    explicit ArgumentError(std::string msg) : Error(std::move(msg), 2) {}
};

/// Data violates the operation's domain (no positive sweep, non-positive
/// conductance, parameters outside a formula's valid range).
class DomainError : public Error {
public:
    explicit DomainError(std::string msg) : Error(std::move(msg), 3) {}
};

class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(std::string msg) : Error(std::move(msg), 3) {}
};

/// Linear-algebra or optimization failure (factorization broke down,
/// training diverged).
class NumericalError : public Error {
public:
    explicit NumericalError(std::string msg) : Error(std::move(msg), 4) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(std::string msg) : Error(std::move(msg), 4) {}
};

} // namespace memrobust
