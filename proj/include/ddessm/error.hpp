#pragma once

#include <stdexcept>
#include <string>

namespace ddessm {

// Invalid configuration or ill-formed input (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical routine could not deliver a trustworthy result (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Homological equation hit a (near-)resonance outside the structural set.
class ResonanceError : public NumericalError {
public:
    ResonanceError(const std::string& what, int k, int l)
        : NumericalError(what), k_(k), l_(l) {}
    int k() const noexcept { return k_; }
    int l() const noexcept { return l_; }

private:
    int k_;
    int l_;
};

}  // namespace ddessm
