#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dilute_rls {

/// A precondition of a library call was violated by the caller.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A matrix expected to be nonsingular failed factorization.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A simulated trajectory exceeded the divergence threshold.
class SimulationDivergence : public std::runtime_error {
public:
    SimulationDivergence(std::size_t step, const std::string& what)
        : std::runtime_error(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Configuration rejected; `keys()` lists the offending entries.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::vector<std::string> keys, const std::string& what)
        : std::runtime_error(what), keys_(std::move(keys)) {}

    const std::vector<std::string>& keys() const noexcept { return keys_; }

private:
    std::vector<std::string> keys_;
};

/// An input produced by an earlier pipeline stage is missing.
class DependencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

}  // namespace dilute_rls
