#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agckan {

/// Base of every error raised by the library. CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class SimulationDiverged : public Error {
public:
    SimulationDiverged(std::size_t step, const std::string& what)
        : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Bad magic, unknown version, or a schema mismatch between artifacts.
class FormatError : public Error {
public:
    using Error::Error;
};

class CorruptionError : public Error {
public:
    using Error::Error;
};

class DegenerateNetwork : public Error {
public:
    using Error::Error;
};

/// Non-finite intermediate while evaluating a symbolic expression.
class EvaluationError : public Error {
public:
    EvaluationError(int node_id, const std::string& what)
        : Error(what), node_id_(node_id) {}
    int node_id() const noexcept { return node_id_; }

private:
    int node_id_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace agckan
