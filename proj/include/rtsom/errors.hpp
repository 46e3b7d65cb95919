#pragma once

#include <stdexcept>
#include <string>

namespace rtsom {

/// Precondition violated by caller-supplied sizes, ranges or shapes.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (non-finite values, failed decomposition).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Source iteration hit its sweep cap before reaching the requested tolerance.
class IterationLimitError : public NumericalError {
public:
    IterationLimitError(const std::string& what, int sweeps, double residual)
        : NumericalError(what), sweeps_(sweeps), residual_(residual) {}

    int sweeps() const noexcept { return sweeps_; }
    double residual() const noexcept { return residual_; }

private:
    int sweeps_;
    double residual_;
};

/// Requested truncation level reaches into the numerical null space of A.
class TruncationError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

enum class CacheErrorKind { io, bad_magic, version_mismatch, hash_mismatch, truncated, shape_mismatch };

class CacheError : public std::runtime_error {
public:
    CacheError(CacheErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    CacheErrorKind kind() const noexcept { return kind_; }

private:
    CacheErrorKind kind_;
};

}  // namespace rtsom
