#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace soda {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition or shape contract was broken by the caller.
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Non-finite input handed to a numeric routine.
class NumericInputError : public Error {
public:
    using Error::Error;
};

// A simulation, training run or sampler produced non-finite values.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    DivergenceError(const std::string& context, const DivergenceError& inner)
        : Error(context + inner.what()), step_(inner.step()) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// Tweedie denoising requested where alpha(a) is effectively zero.
class NearSingularError : public Error {
public:
    using Error::Error;
};

// Trajectory shorter than the score network window.
class WindowTooLargeError : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

// All particle weights vanished at an observation.
class DegenerateFilterError : public Error {
public:
    DegenerateFilterError(const std::string& what, std::size_t observation_index)
        : Error(what + " (observation " + std::to_string(observation_index) + ")"),
          observation_index_(observation_index) {}
    DegenerateFilterError(const std::string& context, const DegenerateFilterError& inner)
        : Error(context + inner.what()), observation_index_(inner.observation_index()) {}

    std::size_t observation_index() const noexcept { return observation_index_; }

private:
    std::size_t observation_index_;
};

// File has the wrong magic, version or schema.
class FormatError : public Error {
public:
    using Error::Error;
};

// File is truncated or fails its content hash.
class CorruptFileError : public FormatError {
public:
    using FormatError::FormatError;
};

// Malformed or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

namespace detail {
[[noreturn]] inline void contract_fail(const std::string& msg) { throw ContractViolation(msg); }
}  // namespace detail

inline void require(bool cond, const std::string& msg) {
    if (!cond) detail::contract_fail(msg);
}

}  // namespace soda
