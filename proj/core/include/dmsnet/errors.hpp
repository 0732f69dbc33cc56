#pragma once

#include <stdexcept>
#include <string>

namespace dmsnet {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shape / dimension contract violated.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Unknown backbone, ablation row or other registry key.
class RegistryError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Weight file missing or unreadable.
class LoadError : public Error {
public:
    using Error::Error;
};

class LabelError : public Error {
public:
    using Error::Error;
};

/// Base for problems with input data (CSV, images, manifests).
class DataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class EmptyDatasetError : public DataError {
public:
    using DataError::DataError;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class HomogeneityError : public DataError {
public:
    using DataError::DataError;
};

class PathError : public DataError {
public:
    using DataError::DataError;
};

// Out-of-range class ids and similar metric input problems.
class InputError : public Error {
public:
    using Error::Error;
};

class UndefinedMetricsError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

}  // namespace dmsnet
