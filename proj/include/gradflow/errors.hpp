#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gradflow {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Files parse individually but disagree with each other or with a reference table.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An operation was called on an object that is not in the required state.
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

class ForwardDivergence : public std::runtime_error {
public:
    explicit ForwardDivergence(std::size_t layer)
        : std::runtime_error("forward pass produced a non-finite value at layer " + std::to_string(layer)),
          layer_(layer) {}
    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DepthCapError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gradflow
