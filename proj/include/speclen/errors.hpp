#pragma once

#include <stdexcept>
#include <string>

namespace speclen {

// Bad or malformed input (non-finite entries, empty data, unparseable files).
// CLI exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mathematically ill-posed request: non-positive spectral gap, degenerate
// spectrum, singular system, iteration cap exceeded. CLI exit code 3.
class precondition_error : public std::runtime_error {
public:
    explicit precondition_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Cap-exceeded variant that carries the conservative fallback sample size
// obtained by substituting log(8*k_max/xi) for the self-consistent log factor.
class cap_exceeded_error : public precondition_error {
public:
    cap_exceeded_error(const std::string& msg, long long fallback_k)
        : precondition_error(msg), fallback_k_(fallback_k) {}
    long long fallback_k() const { return fallback_k_; }

private:
    long long fallback_k_;
};

}  // namespace speclen
