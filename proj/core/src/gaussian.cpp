#include "mlfm/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mlfm {

double JitteredCholesky::log_det() const {
    const Matrix& lu = llt.matrixLLT();
    double s = 0.0;
    for (Index i = 0; i < lu.rows(); ++i) s += std::log(lu(i, i));
    return 2.0 * s;
}

JitteredCholesky jittered_cholesky(const Matrix& cov, const std::string& what) {
    if (cov.rows() != cov.cols()) {
        throw std::invalid_argument(what + ": matrix is not square");
    }
    const Index d = cov.rows();
    JitteredCholesky out;
    if (d == 0) {
        out.llt.compute(cov);
        return out;
    }
    // trace(C)/d can be zero for a degenerate covariance; fall back to unit scale
    double scale = cov.trace() / static_cast<double>(d);
    if (!(scale > 0.0)) scale = 1.0;

    double eps = kJitterBase;
    Matrix work = cov;
    for (int attempt = 0; attempt <= kJitterEscalations; ++attempt, eps *= 10.0) {
        const double jitter = eps * scale;
        work = cov;
        work.diagonal().array() += jitter;
        out.llt.compute(work);
        if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().allFinite()) {
            out.jitter = jitter;
            return out;
        }
    }
    throw NumericalError(what + ": not positive definite after jitter escalation");
}

GaussianDist::GaussianDist(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw std::invalid_argument("GaussianDist: covariance shape does not match mean length");
    }
}

void GaussianDist::validate() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw std::invalid_argument("GaussianDist: covariance shape does not match mean length");
    }
    if (mean.size() == 0) return;
    const double scale = std::max(cov.cwiseAbs().maxCoeff(), 1e-300);
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("GaussianDist: covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(cov), Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(top, 0.0)) {
        throw std::invalid_argument("GaussianDist: covariance has a negative eigenvalue");
    }
}

double log_density(const Vector& x, const GaussianDist& dist) {
    if (x.size() != dist.mean.size()) {
        throw std::invalid_argument("log_density: dimension mismatch");
    }
    const auto chol = jittered_cholesky(dist.cov);
    const Vector diff = x - dist.mean;
    const Vector alpha = chol.llt.matrixL().solve(diff);
    const double d = static_cast<double>(x.size());
    return -0.5 * alpha.squaredNorm() - 0.5 * chol.log_det() -
           0.5 * d * std::log(2.0 * std::numbers::pi);
}

Matrix psd_sqrt(const Matrix& c) {
    if (c.rows() != c.cols()) throw std::invalid_argument("psd_sqrt: matrix is not square");
    if (c.rows() == 0) return c;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(c));
    if (eig.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
    const double top = eig.eigenvalues().maxCoeff();
    const double floor = std::max(top, 0.0) * 1e-12;
    Vector root = eig.eigenvalues().unaryExpr([floor](double l) { return l > floor ? std::sqrt(l) : 0.0; });
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix sample(const GaussianDist& dist, Rng& rng, Index n) {
    if (n < 1) throw std::invalid_argument("sample: n must be at least 1");
    dist.validate();
    const Matrix root = psd_sqrt(dist.cov);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(dist.dim(), n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < dist.dim(); ++i) z(i, j) = normal(rng);
    Matrix draws = root * z;
    draws.colwise() += dist.mean;
    return draws;
}

namespace {

std::vector<Index> complement(Index d, std::span<const Index> idx) {
    std::vector<bool> taken(static_cast<std::size_t>(d), false);
    for (Index i : idx) {
        if (i < 0 || i >= d) throw std::invalid_argument("condition: index out of range");
        if (taken[static_cast<std::size_t>(i)]) throw std::invalid_argument("condition: duplicate index");
        taken[static_cast<std::size_t>(i)] = true;
    }
    std::vector<Index> rest;
    for (Index i = 0; i < d; ++i)
        if (!taken[static_cast<std::size_t>(i)]) rest.push_back(i);
    return rest;
}

}  // namespace

GaussianDist marginal(const GaussianDist& dist, std::span<const Index> indices) {
    const Index k = static_cast<Index>(indices.size());
    Vector m(k);
    Matrix c(k, k);
    for (Index i = 0; i < k; ++i) {
        const Index a = indices[static_cast<std::size_t>(i)];
        if (a < 0 || a >= dist.dim()) throw std::invalid_argument("marginal: index out of range");
        m(i) = dist.mean(a);
        for (Index j = 0; j < k; ++j) c(i, j) = dist.cov(a, indices[static_cast<std::size_t>(j)]);
    }
    return {std::move(m), std::move(c)};
}

GaussianDist condition(const GaussianDist& joint, std::span<const Index> observed_indices,
                       const Vector& observed_values) {
    if (static_cast<Index>(observed_indices.size()) != observed_values.size()) {
        throw std::invalid_argument("condition: observed values do not match indices");
    }
    const auto rest = complement(joint.dim(), observed_indices);
    if (observed_indices.empty()) return joint;

    const GaussianDist obs = marginal(joint, observed_indices);
    const GaussianDist free = marginal(joint, rest);
    Matrix cross(free.dim(), obs.dim());
    for (Index i = 0; i < free.dim(); ++i)
        for (Index j = 0; j < obs.dim(); ++j)
            cross(i, j) = joint.cov(rest[static_cast<std::size_t>(i)], observed_indices[static_cast<std::size_t>(j)]);

    const auto chol = jittered_cholesky(obs.cov, "condition: observed block");
    const Vector mean = free.mean + cross * chol.solve(Vector(observed_values - obs.mean));
    const Matrix cov = symmetrized(free.cov - cross * chol.solve(Matrix(cross.transpose())));
    return {mean, cov};
}

double wasserstein2(const GaussianDist& a, const GaussianDist& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("wasserstein2: dimension mismatch");
    if (a.dim() == 0) return 0.0;
    // trace(C1 + C2 - 2 (S2 C1 S2)^{1/2}) equals min_Q |S1 - S2 Q|_F^2 over orthogonal Q,
    // attained at the Procrustes rotation. Evaluating the residual directly avoids the
    // cancellation of the trace form when the two covariances nearly agree.
    const Matrix root_a = psd_sqrt(a.cov);
    const Matrix root_b = psd_sqrt(b.cov);
    Eigen::JacobiSVD<Matrix> svd(root_a.transpose() * root_b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Matrix rotation = svd.matrixV() * svd.matrixU().transpose();
    const double w2 = (a.mean - b.mean).squaredNorm() + (root_a - root_b * rotation).squaredNorm();
    return std::sqrt(std::max(w2, 0.0));
}

}  // namespace mlfm
