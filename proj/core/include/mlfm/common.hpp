#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mlfm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Seeded random stream used by every stochastic operation.
using Rng = std::mt19937_64;

/// Raised when a covariance or Hessian cannot be factorized even after the
/// jitter escalation is exhausted.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Jitter policy shared by all factorizations: start at
/// kJitterBase * trace(C) / d and escalate tenfold at most kJitterEscalations
/// times before giving up.
inline constexpr double kJitterBase = 1e-10;
inline constexpr int kJitterEscalations = 3;

/// Cholesky factor of C + jitter * I, jitter chosen by the escalation policy.
struct JitteredCholesky {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;

    double log_det() const;
    Vector solve(const Vector& b) const { return llt.solve(b); }
    Matrix solve(const Matrix& b) const { return llt.solve(b); }
    Matrix lower() const { return llt.matrixL(); }
};

/// Throws NumericalError if every jitter level fails. `what` names the matrix
/// in the diagnostic.
JitteredCholesky jittered_cholesky(const Matrix& cov, const std::string& what = "covariance");

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Deterministic 64-bit mixing (splitmix64 finalizer).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace mlfm
