#pragma once

#include <stdexcept>
#include <string>

namespace casc {

/// Raised for malformed inputs and configurations. The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A row-level defect in a columnar file; the message carries the 1-based data row.
class FormatError : public ValidationError {
public:
    FormatError(const std::string& what, std::size_t row)
        : ValidationError(what + ", row " + std::to_string(row)), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

}  // namespace casc
