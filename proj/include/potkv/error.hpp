#pragma once

#include <stdexcept>
#include <string>

namespace potkv {

// Base for all potkv failures. Subclasses map 1:1 onto the contract
// categories so callers (and the CLI) can report which precondition broke.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid dimensions / hyper-parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// An append would push a head past its capacity.
class CapacityError : public Error {
public:
    using Error::Error;
};

// A rotary position outside [0, capacity).
class PositionError : public Error {
public:
    using Error::Error;
};

// An operation called outside its required pot state (e.g. off-trigger).
class StateError : public Error {
public:
    using Error::Error;
};

// Retained-set shape violates the selection contract.
class SelectionError : public Error {
public:
    using Error::Error;
};

// Malformed weight file or config document.
class FormatError : public Error {
public:
    using Error::Error;
};

// Missing or mismatched call arguments.
class ArgumentError : public Error {
public:
    using Error::Error;
};

}  // namespace potkv
