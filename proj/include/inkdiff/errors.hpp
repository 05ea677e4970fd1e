#pragma once

#include <stdexcept>
#include <string>

namespace inkdiff {

// Error taxonomy mirrors the CLI exit codes: data 3, numeric 4, io 5.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace inkdiff
