#pragma once

#include <stdexcept>
#include <string>

namespace captionsmiths {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Input text could not be parsed. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Parsed data violates a cross-record invariant (duplicate ids, dangling references).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// A file parsed but its version, shapes or required fields do not match.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Corpus statistics could not be fitted.
class FitError : public Error {
public:
    using Error::Error;
};

/// Training diverged. `epoch()` is the 0-based epoch in which it happened.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t epoch)
        : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace captionsmiths
