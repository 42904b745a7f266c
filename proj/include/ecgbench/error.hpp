#pragma once

#include <stdexcept>
#include <string>

namespace ecgbench {

// Base for every error raised by the toolkit. The CLI exits with 2 on
// ArgumentError and 1 on everything else.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, metadata, matrices).
class DataError : public Error {
public:
    using Error::Error;
};

// Invalid argument combination supplied by the caller.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// A metric that has no defined value on the given input, e.g. AUC on a
// single-class label vector. Distinct from DataError so callers can choose
// between failing and excluding.
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

}  // namespace ecgbench
