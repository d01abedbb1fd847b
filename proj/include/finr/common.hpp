#pragma once

#include <stdexcept>
#include <string>

namespace finr {

// Error taxonomy. The CLI maps these onto exit codes:
// validation (shape/domain/contract/config/format-of-inputs) -> 1,
// numerical failure -> 2, I/O -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct FormatError : IoError {
    using IoError::IoError;
};

struct UnsupportedOperation : Error {
    using Error::Error;
};

}  // namespace finr
