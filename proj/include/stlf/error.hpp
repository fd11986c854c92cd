#pragma once

#include <stdexcept>
#include <string>

namespace stlf {

// Malformed or inconsistent input data: bad CSV rows, empty joins, missing
// columns, unusable ranges.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: degenerate inputs, rank deficiency, insufficient
// samples, training divergence.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace stlf
