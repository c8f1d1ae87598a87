#pragma once

#include <stdexcept>
#include <string>

namespace proxnn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A scalar argument is outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Non-finite or otherwise invalid input values.
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

// A caller broke a documented precondition (e.g. tape recorded for another model).
class ContractError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace proxnn
