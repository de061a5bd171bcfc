#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mlfm/gaussian.hpp"
#include "mlfm/model.hpp"
#include "mlfm/optimizer.hpp"

namespace mlfm {

struct FitConfig {
    double rel_tol = 1e-8;
    double grad_tol = 1e-6;
    int max_iterations = 500;
    int restarts = 3;
    double hessian_step = 1e-4;
    int hyper_cycles = 5;

    void validate() const;
};

struct FitDiagnostics {
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;
    std::string stop_reason;
};

struct LaplaceResult {
    ForceRealisation map_g;
    GaussianDist posterior;  // over ForceRealisation::flattened() coordinates
    double log_posterior_at_map = 0.0;
    FitDiagnostics diagnostics;
};

/// Zero-mean GP prior on every latent force at the grid nodes, held as the
/// jittered Cholesky factor L of gram(kernel, nodes). Optimization runs in
/// whitened coordinates u with g_r = L u_r.
class ForcePrior {
public:
    ForcePrior(const RbfKernel& kernel, const Vector& nodes, Index forces);

    ForceRealisation to_forces(const Vector& u) const;
    Vector to_whitened(const ForceRealisation& g) const;
    /// Chain rule: gradient in u from a gradient in g.
    Vector pullback(const Matrix& grad_g) const;
    /// log N(g | 0, L L^T) summed over forces, given u.
    double log_density(const Vector& u) const;
    Matrix covariance() const;
    Vector draw(Rng& rng) const;

    const Matrix& factor() const { return factor_; }
    Index forces() const { return forces_; }
    Index nodes() const { return factor_.rows(); }

private:
    Matrix factor_;
    Index forces_;
    double log_norm_;
};

/// -[log N(g | 0, gram(force_kernel, nodes)) + marginal_loglik(x, g)].
double neg_log_posterior(const ForceRealisation& g, const Vector& x, const MlfmModel& model,
                         const RbfKernel& force_kernel);

/// Negative log posterior in whitened coordinates with its exact gradient.
Objective whitened_objective(const Vector& x, const MlfmModel& model, const ForcePrior& prior);

/// Best of `config.restarts` BFGS runs: the first from init_g, the rest from
/// prior draws.
ForceRealisation map_estimate(const Vector& x, const ForceRealisation& init_g, const FitConfig& config,
                              const MlfmModel& model, const RbfKernel& force_kernel, Rng& rng,
                              FitDiagnostics* diagnostics = nullptr);

/// Gaussian centred at map_g with covariance equal to the inverse of the
/// finite-difference Hessian of the negative log posterior.
LaplaceResult laplace_at(const ForceRealisation& map_g, const Vector& x, const FitConfig& config,
                         const MlfmModel& model, const RbfKernel& force_kernel);

/// MAP (from init_g, or a prior draw, plus restarts) followed by laplace_at.
LaplaceResult laplace_approx(const Vector& x, const FitConfig& config, const MlfmModel& model,
                             const RbfKernel& force_kernel, Rng& rng,
                             const std::optional<ForceRealisation>& init_g = std::nullopt);

struct HyperResult {
    std::vector<RbfKernel> sigma0_kernels;
    LaplaceResult laplace;
    /// Negative log posterior after each phase (initial MAP, then one entry
    /// per MAP / kernel update).
    std::vector<double> objective_trace;
};

/// Alternates MAP over g with BFGS over log phi of the initial-approximation
/// kernels. gamma_scale is never modified. The first MAP search starts from
/// `init_g` when given (a prior draw otherwise); the remaining restarts use
/// fresh prior draws.
HyperResult optimize_hyper(const Vector& x, const FitConfig& config, const MlfmModel& skeleton,
                           const RbfKernel& force_kernel, Rng& rng,
                           const std::optional<ForceRealisation>& init_g = std::nullopt);

/// Marginal of the Laplace posterior at the observation nodes of every force.
GaussianDist marginal_at_obs(const LaplaceResult& result, const TimeGrid& grid);

}  // namespace mlfm
