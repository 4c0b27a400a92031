#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stanp {

// Violated precondition: caller passed arguments outside the documented contract.
class ContractViolation : public std::invalid_argument {
public:
    explicit ContractViolation(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite value produced during a forward pass; carries the offending op id.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& msg, std::size_t op_id)
        : std::runtime_error(msg + " (op id " + std::to_string(op_id) + ")"), op_id_(op_id) {}
    std::size_t op_id() const { return op_id_; }

private:
    std::size_t op_id_;
};

// Prediction requested with no context observations available.
class EmptyContextError : public std::runtime_error {
public:
    explicit EmptyContextError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tile has too few footprints to split into context and target sets.
class TileTooSparseError : public std::runtime_error {
public:
    explicit TileTooSparseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training loss became non-finite; carries the step at which it happened.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, int step)
        : std::runtime_error(msg + " at step " + std::to_string(step)), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

// Bad or missing run configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, long line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// Structurally valid file whose contents contradict its own header.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Buffering removed every training tile.
class PartitionInfeasibleError : public std::runtime_error {
public:
    explicit PartitionInfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Evaluation requested on an empty test set.
class EvaluationEmptyError : public std::runtime_error {
public:
    explicit EvaluationEmptyError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace stanp
