#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace idcdr {

// Root of every error this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input (dimension mismatch, negative power, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// Numerical breakdown inside a solver; distinct from a proven infeasibility.
class SolverError : public Error {
public:
    using Error::Error;
};

// Problem exceeds a hard size bound of the solver.
class CapacityError : public Error {
public:
    using Error::Error;
};

// The IDC operation model admits no feasible first-stage decision.
class ModelInfeasibleError : public Error {
public:
    ModelInfeasibleError(std::string family, const std::string& what)
        : Error(what), family_(std::move(family)) {}

    const std::string& constraint_family() const noexcept { return family_; }

private:
    std::string family_;
};

// Covariance matrix could not be factored even after jitter escalation.
class ConditioningError : public Error {
public:
    ConditioningError(double final_jitter, const std::string& what)
        : Error(what), final_jitter_(final_jitter) {}

    double final_jitter() const noexcept { return final_jitter_; }

private:
    double final_jitter_;
};

// Wraps a failure raised while producing a specific sample.
class SampleError : public Error {
public:
    SampleError(std::size_t index, const std::string& what)
        : Error("sample " + std::to_string(index) + ": " + what), index_(index) {}

    std::size_t sample_index() const noexcept { return index_; }

private:
    std::size_t index_;
};

} // namespace idcdr
