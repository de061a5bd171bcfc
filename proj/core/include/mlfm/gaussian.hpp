#pragma once

#include <span>
#include <vector>

#include "mlfm/common.hpp"

namespace mlfm {

/// Multivariate normal N(mean, cov). The covariance is kept as given; the
/// jitter policy is applied lazily by the operations that factorize it.
struct GaussianDist {
    Vector mean;
    Matrix cov;

    GaussianDist() = default;
    GaussianDist(Vector m, Matrix c);

    Index dim() const { return mean.size(); }

    /// Symmetric to 1e-12 relative and no eigenvalue below -1e-10 * max.
    /// Throws std::invalid_argument otherwise.
    void validate() const;
};

double log_density(const Vector& x, const GaussianDist& dist);

/// n draws, one per column. Uses the clipped symmetric square root, so a zero
/// covariance returns the mean exactly.
Matrix sample(const GaussianDist& dist, Rng& rng, Index n);

/// Conditional of the remaining coordinates (ascending index order) given
/// x[observed_indices] = observed_values.
GaussianDist condition(const GaussianDist& joint,
                       std::span<const Index> observed_indices,
                       const Vector& observed_values);

/// Marginal over `indices`, in the given order.
GaussianDist marginal(const GaussianDist& dist, std::span<const Index> indices);

/// Symmetric PSD square root via eigendecomposition. Eigenvalues below
/// max(lambda) * 1e-12 are clipped to zero.
Matrix psd_sqrt(const Matrix& c);

/// Wasserstein-2 distance W (not W^2) between two Gaussians.
double wasserstein2(const GaussianDist& a, const GaussianDist& b);

}  // namespace mlfm
