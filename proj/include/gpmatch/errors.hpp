#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gpmatch {

/// Invalid or inconsistent input data (non-binary treatment, missing cells,
/// single-arm samples, non-finite covariates).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A factorization or solve that could not be completed, even after jitter.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, std::vector<double> jitter_levels = {})
        : std::runtime_error(what), jitter_levels_(std::move(jitter_levels)) {}

    const std::vector<double>& jitter_levels() const noexcept { return jitter_levels_; }

private:
    std::vector<double> jitter_levels_;
};

/// Malformed configuration (unknown keys, out-of-range options).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gpmatch
