#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mlmkit {

// Bad input data, files or configuration. Surfaces to the user as exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed text file; carries the file name and 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::string file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), file_(std::move(file)), line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

// Tensor shape disagreement inside the library (programming error).
class ShapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace mlmkit
