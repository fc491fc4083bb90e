#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cellfree {

// Invalid argument to a library call (negative variance, bad distance, width mismatch).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Inconsistent or unparseable configuration. Carries the 1-based line when
// the problem was found in a file (0 otherwise).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Numerical breakdown. `pivot` is the failing pivot index for factorizations.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, std::ptrdiff_t pivot = -1)
        : std::runtime_error(what), pivot_(pivot) {}

    std::ptrdiff_t pivot() const noexcept { return pivot_; }

private:
    std::ptrdiff_t pivot_;
};

// Precoder normalization is undefined (zero estimated channel power).
class NormalizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training diverged; `iteration` is where the loss first became non-finite.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::size_t iteration)
        : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
          iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

}  // namespace cellfree
