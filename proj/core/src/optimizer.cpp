#include "mlfm/optimizer.hpp"

#include <cmath>
#include <limits>

namespace mlfm {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kShrink = 0.5;
constexpr int kMaxBacktracks = 50;

double finite_or_inf(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); }

}  // namespace

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::GradientTolerance: return "gradient_tolerance";
        case StopReason::ObjectiveTolerance: return "objective_tolerance";
        case StopReason::IterationLimit: return "iteration_limit";
        case StopReason::LineSearchFailed: return "line_search_failed";
    }
    return "unknown";
}

OptimizerResult minimize_bfgs(const Objective& f, Vector x0, const OptimizerOptions& options) {
    const Index n = x0.size();
    OptimizerResult res;
    res.x = std::move(x0);
    res.gradient = Vector::Zero(n);
    res.value = finite_or_inf(f(res.x, &res.gradient));
    res.trace.push_back(res.value);
    if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
        res.reason = StopReason::LineSearchFailed;
        return res;
    }

    Matrix h_inv = Matrix::Identity(n, n);
    bool fresh = true;
    Vector grad_new(n);
    for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
        if (n == 0 || res.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol) {
            res.converged = true;
            res.reason = StopReason::GradientTolerance;
            return res;
        }
        Vector dir = -h_inv * res.gradient;
        double slope = dir.dot(res.gradient);
        if (!(slope < 0.0)) {
            h_inv.setIdentity();
            fresh = true;
            dir = -res.gradient;
            slope = -res.gradient.squaredNorm();
        }
        // first step along steepest descent is scaled to unit length
        double step = fresh ? std::min(1.0, 1.0 / dir.norm()) : 1.0;

        Vector x_new;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= kShrink) {
            x_new = res.x + step * dir;
            f_new = finite_or_inf(f(x_new, &grad_new));
            if (f_new <= res.value + kArmijo * step * slope && f_new < res.value && grad_new.allFinite()) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (!fresh) {
                h_inv.setIdentity();
                fresh = true;
                continue;
            }
            res.reason = StopReason::LineSearchFailed;
            return res;
        }

        const Vector s = x_new - res.x;
        const Vector y = grad_new - res.gradient;
        const double f_old = res.value;
        res.x = std::move(x_new);
        res.value = f_new;
        res.gradient = grad_new;
        res.trace.push_back(f_new);

        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (fresh) {
                h_inv *= sy / y.squaredNorm();
                fresh = false;
            }
            const double rho = 1.0 / sy;
            const Vector hy = h_inv * y;
            h_inv += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) -
                     rho * (hy * s.transpose() + s * hy.transpose());
        }

        if (res.gradient.lpNorm<Eigen::Infinity>() < options.grad_tol) {
            res.converged = true;
            res.reason = StopReason::GradientTolerance;
            ++res.iterations;
            return res;
        }
        if (f_old - f_new <= options.rel_tol * std::max(1.0, std::abs(f_new))) {
            res.converged = true;
            res.reason = StopReason::ObjectiveTolerance;
            ++res.iterations;
            return res;
        }
    }
    res.reason = StopReason::IterationLimit;
    return res;
}

}  // namespace mlfm
