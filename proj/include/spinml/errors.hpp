#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace spinml {

namespace detail {

template <typename... Args>
std::string cat(Args&&... args) {
    std::ostringstream os;
    (os << ... << std::forward<Args>(args));
    return os.str();
}

}  // namespace detail

// Error taxonomy shared by library and CLI. exit_code() is the process exit
// status the CLI maps each kind to.
class Error : public std::runtime_error {
public:
    explicit Error(std::string msg) : std::runtime_error(std::move(msg)) {}
    virtual int exit_code() const noexcept { return 1; }
};

// Invalid argument supplied by the caller (out-of-range parameter, bad flag).
class ParameterError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

// An internal invariant or operation contract was violated (malformed object,
// non-symmetric input where symmetry is required, eigensolver failure).
class ContractError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

// File, schema, or integrity problem on persisted artifacts.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

// Training failed to make progress (NaN loss, exploding objective).
class DivergenceError : public Error {
public:
    DivergenceError(std::string msg, long iteration)
        : Error(std::move(msg)), iteration_(iteration) {}
    int exit_code() const noexcept override { return 4; }
    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

}  // namespace spinml
