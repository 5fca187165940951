#pragma once

#include <stdexcept>
#include <string>

namespace psomerge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Checkpoint file problems: malformed header, truncated payload, bad dtype.
class CheckpointError : public Error {
public:
    using Error::Error;
};

// Two parameter sets whose tensor names or shapes disagree.
class KeyspaceError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// External evaluator failures carry the captured stderr tail for diagnosis.
class EvaluatorError : public Error {
public:
    EvaluatorError(const std::string& msg, std::string stderr_tail = {})
        : Error(msg), stderr_tail(std::move(stderr_tail)) {}
    std::string stderr_tail;
};

// A particle position went NaN/Inf during a swarm step.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, int particle, int step)
        : Error(msg), particle(particle), step(step) {}
    int particle;
    int step;
};

}  // namespace psomerge
