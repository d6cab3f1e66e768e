#pragma once

#include <stdexcept>
#include <string>

namespace numanchor {

/// Base of every error thrown by the library. The CLI maps the subclasses
/// onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Configuration and validation problems (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Missing or stale upstream pipeline artifacts (exit code 3).
class DependencyError : public Error {
public:
    using Error::Error;
};
class StalenessError : public Error {
public:
    using Error::Error;
};

class DecodeError : public Error {
public:
    using Error::Error;
};
class ParseError : public Error {
public:
    using Error::Error;
};
class RangeError : public Error {
public:
    using Error::Error;
};
class DomainError : public Error {
public:
    using Error::Error;
};
class DegenerateDataError : public Error {
public:
    using Error::Error;
};
class AugmentationError : public Error {
public:
    using Error::Error;
};
class CorruptionError : public Error {
public:
    using Error::Error;
};
class UnsupportedShapeError : public Error {
public:
    using Error::Error;
};
class TrainingDivergedError : public Error {
public:
    using Error::Error;
};
class InfeasibleSplitError : public Error {
public:
    using Error::Error;
};
class UndefinedSimilarityError : public Error {
public:
    using Error::Error;
};
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace numanchor
