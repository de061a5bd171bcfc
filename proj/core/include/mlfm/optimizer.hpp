#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mlfm/common.hpp"

namespace mlfm {

/// Returns the objective value and, when `grad` is non-null, writes the
/// gradient into it. Non-finite values are treated as +infinity.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct OptimizerOptions {
    double rel_tol = 1e-8;
    double grad_tol = 1e-6;
    int max_iterations = 500;
};

enum class StopReason { GradientTolerance, ObjectiveTolerance, IterationLimit, LineSearchFailed };

struct OptimizerResult {
    Vector x;
    double value = 0.0;
    Vector gradient;
    int iterations = 0;
    bool converged = false;
    StopReason reason = StopReason::IterationLimit;
    /// Objective after each accepted step, starting with the initial value.
    std::vector<double> trace;
};

/// BFGS on the inverse Hessian with Armijo backtracking.
OptimizerResult minimize_bfgs(const Objective& f, Vector x0, const OptimizerOptions& options = {});

std::string to_string(StopReason reason);

}  // namespace mlfm
