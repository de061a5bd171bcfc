#pragma once

#include <utility>
#include <vector>

#include "mlfm/common.hpp"
#include "mlfm/gaussian.hpp"

namespace mlfm {

/// Squared-exponential kernel k(s, t) = variance * exp(-(s - t)^2 / (2 lengthscale^2)).
struct RbfKernel {
    double variance = 1.0;
    double lengthscale = 1.0;

    RbfKernel() = default;
    RbfKernel(double variance_, double lengthscale_);
};

using Interval = std::pair<double, double>;

double kernel_eval(const RbfKernel& k, double s, double t);

Matrix gram(const RbfKernel& k, const Vector& times);
Matrix cross_gram(const RbfKernel& k, const Vector& s, const Vector& t);

/// Cov(g(s), integral of g over [a, b]).
double kernel_integral(const RbfKernel& k, double s, double a, double b);

/// Cov(integral over [a, b], integral over [c, d]).
double kernel_double_integral(const RbfKernel& k, double a, double b, double c, double d);

/// Mean-zero joint law of (g(nodes), G_1..G_N) where G_i integrates g over
/// intervals[i]. With no intervals this is gram(k, nodes).
GaussianDist joint_force_integral_dist(const RbfKernel& k, const Vector& nodes,
                                       const std::vector<Interval>& intervals);

}  // namespace mlfm
