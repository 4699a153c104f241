#pragma once

#include <stdexcept>
#include <string>

namespace mrisk {

// Input file / configuration problems. CLI maps this family to exit code 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Domain-level validation failure (bad market data, illegal state change).
// Also exit code 3 at the CLI boundary.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A requested combination the engine deliberately refuses
// (e.g. correlation sensitivity under a model without a rate factor).
class UnsupportedError : public std::runtime_error {
public:
    explicit UnsupportedError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a pricing run is attempted against a blocked
// product-family/model mapping and no override was supplied. Exit code 2.
class GovernanceBlock : public std::runtime_error {
public:
    explicit GovernanceBlock(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a risk limit with block action is breached. Exit code 4.
class LimitBreach : public std::runtime_error {
public:
    explicit LimitBreach(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mrisk
