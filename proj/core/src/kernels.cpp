#include "mlfm/kernels.hpp"

#include <cmath>
#include <numbers>

namespace mlfm {

namespace {

constexpr double kSqrtHalfPi = 1.2533141373155002512;  // sqrt(pi / 2)

// erf(y) - erf(x), switching to erfc in the tails so the difference keeps
// absolute accuracy when both arguments are large.
double erf_diff(double x, double y) {
    if (x > 0.0 && y > 0.0) return std::erfc(x) - std::erfc(y);
    if (x < 0.0 && y < 0.0) return std::erfc(-y) - std::erfc(-x);
    return std::erf(y) - std::erf(x);
}

// Second antiderivative of the kernel in the lag u.
double lag_antiderivative(const RbfKernel& k, double u) {
    const double l = k.lengthscale;
    const double z = u / (std::numbers::sqrt2 * l);
    return k.variance * (u * l * kSqrtHalfPi * std::erf(z) + l * l * std::exp(-z * z));
}

}  // namespace

RbfKernel::RbfKernel(double variance_, double lengthscale_) : variance(variance_), lengthscale(lengthscale_) {
    if (!(variance > 0.0) || !(lengthscale > 0.0)) {
        throw std::invalid_argument("RbfKernel: variance and lengthscale must be positive");
    }
}

double kernel_eval(const RbfKernel& k, double s, double t) {
    const double r = (s - t) / k.lengthscale;
    return k.variance * std::exp(-0.5 * r * r);
}

Matrix cross_gram(const RbfKernel& k, const Vector& s, const Vector& t) {
    Matrix out(s.size(), t.size());
    for (Index i = 0; i < s.size(); ++i)
        for (Index j = 0; j < t.size(); ++j) out(i, j) = kernel_eval(k, s(i), t(j));
    return out;
}

Matrix gram(const RbfKernel& k, const Vector& times) {
    const Index n = times.size();
    Matrix out(n, n);
    for (Index i = 0; i < n; ++i) {
        out(i, i) = k.variance;
        for (Index j = 0; j < i; ++j) out(i, j) = out(j, i) = kernel_eval(k, times(i), times(j));
    }
    return out;
}

double kernel_integral(const RbfKernel& k, double s, double a, double b) {
    if (a > b) throw std::invalid_argument("kernel_integral: a > b");
    if (a == b) return 0.0;
    const double scale = std::numbers::sqrt2 * k.lengthscale;
    return k.variance * k.lengthscale * kSqrtHalfPi * erf_diff((a - s) / scale, (b - s) / scale);
}

double kernel_double_integral(const RbfKernel& k, double a, double b, double c, double d) {
    if (a > b || c > d) throw std::invalid_argument("kernel_double_integral: malformed interval");
    if (a == b || c == d) return 0.0;
    return lag_antiderivative(k, b - c) - lag_antiderivative(k, a - c) - lag_antiderivative(k, b - d) +
           lag_antiderivative(k, a - d);
}

GaussianDist joint_force_integral_dist(const RbfKernel& k, const Vector& nodes,
                                       const std::vector<Interval>& intervals) {
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        if (intervals[i].first > intervals[i].second) {
            throw std::invalid_argument("joint_force_integral_dist: malformed interval");
        }
        if (i > 0 && intervals[i].first < intervals[i - 1].second) {
            throw std::invalid_argument("joint_force_integral_dist: intervals overlap or are unordered");
        }
    }
    const Index n = nodes.size();
    const Index m = static_cast<Index>(intervals.size());
    Matrix cov(n + m, n + m);
    cov.topLeftCorner(n, n) = gram(k, nodes);
    for (Index i = 0; i < m; ++i) {
        const auto [a, b] = intervals[static_cast<std::size_t>(i)];
        for (Index p = 0; p < n; ++p) {
            cov(p, n + i) = cov(n + i, p) = kernel_integral(k, nodes(p), a, b);
        }
        for (Index j = 0; j <= i; ++j) {
            const auto [c, d] = intervals[static_cast<std::size_t>(j)];
            cov(n + i, n + j) = cov(n + j, n + i) = kernel_double_integral(k, a, b, c, d);
        }
    }
    return {Vector::Zero(n + m), std::move(cov)};
}

}  // namespace mlfm
