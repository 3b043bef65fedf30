#pragma once

#include <stdexcept>
#include <string>

namespace dribo {

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// A value lies outside the mathematical domain of an operation (log of 0, non-finite loss, ...).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// A documented precondition of an API was violated by the caller.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// A configured resource limit (enumeration cap, buffer size, ...) would be exceeded.
class ResourceError : public std::runtime_error {
public:
    explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

/// Persisted data could not be read or written, or failed validation.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dribo
