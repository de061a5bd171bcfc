#include "mlfm/inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace mlfm {

namespace {

// log phi is kept inside [-kLogBound, kLogBound]
constexpr double kLogBound = 6.907755278982137;  // log(1000)

}  // namespace

void FitConfig::validate() const {
    if (!(rel_tol > 0.0) || !(grad_tol > 0.0) || !(hessian_step > 0.0)) {
        throw std::invalid_argument("FitConfig: tolerances must be positive");
    }
    if (max_iterations < 1 || restarts < 1 || hyper_cycles < 1) {
        throw std::invalid_argument("FitConfig: iteration counts must be >= 1");
    }
}

ForcePrior::ForcePrior(const RbfKernel& kernel, const Vector& nodes, Index forces) : forces_(forces) {
    const auto chol = jittered_cholesky(gram(kernel, nodes), "force prior gram");
    factor_ = chol.lower();
    const double n = static_cast<double>(nodes.size());
    log_norm_ = static_cast<double>(forces) * (-0.5 * chol.log_det() - 0.5 * n * std::log(2.0 * std::numbers::pi));
}

ForceRealisation ForcePrior::to_forces(const Vector& u) const {
    const Index n = nodes();
    Matrix v(forces_, n);
    for (Index r = 0; r < forces_; ++r) v.row(r) = (factor_ * u.segment(r * n, n)).transpose();
    return ForceRealisation(std::move(v));
}

Vector ForcePrior::to_whitened(const ForceRealisation& g) const {
    const Index n = nodes();
    Vector u(forces_ * n);
    for (Index r = 0; r < forces_; ++r) {
        u.segment(r * n, n) = factor_.triangularView<Eigen::Lower>().solve(Vector(g.values.row(r).transpose()));
    }
    return u;
}

Vector ForcePrior::pullback(const Matrix& grad_g) const {
    const Index n = nodes();
    Vector out(forces_ * n);
    for (Index r = 0; r < forces_; ++r) out.segment(r * n, n) = factor_.transpose() * grad_g.row(r).transpose();
    return out;
}

double ForcePrior::log_density(const Vector& u) const { return log_norm_ - 0.5 * u.squaredNorm(); }

Matrix ForcePrior::covariance() const {
    const Index n = nodes();
    const Matrix block = factor_ * factor_.transpose();
    Matrix cov = Matrix::Zero(forces_ * n, forces_ * n);
    for (Index r = 0; r < forces_; ++r) cov.block(r * n, r * n, n, n) = block;
    return cov;
}

Vector ForcePrior::draw(Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector u(forces_ * nodes());
    for (Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
    return u;
}

double neg_log_posterior(const ForceRealisation& g, const Vector& x, const MlfmModel& model,
                         const RbfKernel& force_kernel) {
    const ForcePrior prior(force_kernel, model.grid.nodes(), model.basis.force_count());
    return -(prior.log_density(prior.to_whitened(g)) + marginal_loglik(x, g, model));
}

Objective whitened_objective(const Vector& x, const MlfmModel& model, const ForcePrior& prior) {
    return [&x, &model, &prior](const Vector& u, Vector* grad) -> double {
        const ForceRealisation g = prior.to_forces(u);
        LikelihoodTerms terms;
        try {
            terms = evaluate_likelihood(model, x, g, grad != nullptr);
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
        if (grad) *grad = u - prior.pullback(terms.grad_g);
        return -(prior.log_density(u) + terms.value);
    };
}

namespace {

OptimizerOptions optimizer_options(const FitConfig& config) {
    return {config.rel_tol, config.grad_tol, config.max_iterations};
}

// A stop on the objective tolerance can leave a gradient well above grad_tol
// because the log posterior carries large additive constants. The MAP must be
// stationary, so such runs continue on the gradient test alone.
OptimizerResult minimize_stationary(const Objective& f, const Vector& start, const FitConfig& config) {
    OptimizerOptions options = optimizer_options(config);
    OptimizerResult r = minimize_bfgs(f, start, options);
    const int remaining = config.max_iterations - r.iterations;
    if (r.reason != StopReason::ObjectiveTolerance || r.gradient.lpNorm<Eigen::Infinity>() < config.grad_tol ||
        remaining < 1) {
        return r;
    }
    options.rel_tol = 0.0;
    options.max_iterations = remaining;
    OptimizerResult polish = minimize_bfgs(f, r.x, options);
    polish.iterations += r.iterations;
    r.trace.insert(r.trace.end(), polish.trace.begin() + 1, polish.trace.end());
    polish.trace = std::move(r.trace);
    // a polish that cannot move further still leaves the objective-converged point
    if (polish.reason == StopReason::LineSearchFailed) {
        polish.converged = true;
        polish.reason = StopReason::ObjectiveTolerance;
    }
    return polish;
}

struct MapRun {
    OptimizerResult best;
    int iterations = 0;
};

MapRun run_map(const Vector& x, const Vector& u0, int starts, const FitConfig& config, const MlfmModel& model,
               const ForcePrior& prior, Rng& rng) {
    const Objective f = whitened_objective(x, model, prior);
    MapRun run;
    bool have = false;
    for (int s = 0; s < starts; ++s) {
        const Vector start = s == 0 ? u0 : prior.draw(rng);
        OptimizerResult r = minimize_stationary(f, start, config);
        run.iterations += r.iterations;
        if (!std::isfinite(r.value)) continue;
        if (!have || r.value < run.best.value) {
            run.best = std::move(r);
            have = true;
        }
    }
    if (!have) throw NumericalError("map_estimate: no restart produced a finite objective");
    return run;
}

Vector initial_point(const ForcePrior& prior, const std::optional<ForceRealisation>& init_g, Rng& rng) {
    if (!init_g) return prior.draw(rng);
    if (init_g->forces() != prior.forces() || init_g->nodes() != prior.nodes()) {
        throw std::invalid_argument("initial forces have the wrong shape");
    }
    return prior.to_whitened(*init_g);
}

FitDiagnostics diagnostics_of(const MapRun& run) {
    FitDiagnostics d;
    d.iterations = run.iterations;
    d.converged = run.best.converged;
    d.grad_norm = run.best.gradient.lpNorm<Eigen::Infinity>();
    d.stop_reason = to_string(run.best.reason);
    return d;
}

}  // namespace

ForceRealisation map_estimate(const Vector& x, const ForceRealisation& init_g, const FitConfig& config,
                              const MlfmModel& model, const RbfKernel& force_kernel, Rng& rng,
                              FitDiagnostics* diagnostics) {
    config.validate();
    const ForcePrior prior(force_kernel, model.grid.nodes(), model.basis.force_count());
    if (init_g.forces() != prior.forces() || init_g.nodes() != prior.nodes()) {
        throw std::invalid_argument("map_estimate: initial forces have the wrong shape");
    }
    const MapRun run = run_map(x, prior.to_whitened(init_g), config.restarts, config, model, prior, rng);
    if (diagnostics) *diagnostics = diagnostics_of(run);
    return prior.to_forces(run.best.x);
}

namespace {

LaplaceResult laplace_whitened(const Vector& u_map, const Vector& x, const FitConfig& config,
                               const MlfmModel& model, const ForcePrior& prior) {
    const Objective f = whitened_objective(x, model, prior);
    const Index d = u_map.size();
    Vector grad(d);
    const double value = f(u_map, &grad);
    if (!std::isfinite(value)) throw NumericalError("laplace_approx: objective is not finite at the mode");

    Matrix hessian(d, d);
    Vector plus(d);
    Vector minus(d);
    for (Index j = 0; j < d; ++j) {
        const double h = config.hessian_step * (1.0 + std::abs(u_map(j)));
        Vector u = u_map;
        u(j) += h;
        f(u, &plus);
        u(j) = u_map(j) - h;
        f(u, &minus);
        hessian.col(j) = (plus - minus) / (2.0 * h);
    }
    hessian = symmetrized(hessian);
    if (!hessian.allFinite()) throw NumericalError("laplace_approx: Hessian is not finite");

    JitteredCholesky chol;
    try {
        chol = jittered_cholesky(hessian, "laplace_approx: negative Hessian");
    } catch (const NumericalError& e) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian, Eigen::EigenvaluesOnly);
        throw NumericalError(std::string(e.what()) + " (smallest eigenvalue " +
                             std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }
    const Matrix cov_u = chol.solve(Matrix(Matrix::Identity(d, d)));

    const Index n = prior.nodes();
    Matrix lift = Matrix::Zero(d, d);
    for (Index r = 0; r < prior.forces(); ++r) lift.block(r * n, r * n, n, n) = prior.factor();

    LaplaceResult out;
    out.map_g = prior.to_forces(u_map);
    out.posterior = GaussianDist(out.map_g.flattened(), symmetrized(lift * cov_u * lift.transpose()));
    out.log_posterior_at_map = -value;
    out.diagnostics.grad_norm = grad.lpNorm<Eigen::Infinity>();
    return out;
}

}  // namespace

LaplaceResult laplace_at(const ForceRealisation& map_g, const Vector& x, const FitConfig& config,
                         const MlfmModel& model, const RbfKernel& force_kernel) {
    config.validate();
    const ForcePrior prior(force_kernel, model.grid.nodes(), model.basis.force_count());
    return laplace_whitened(prior.to_whitened(map_g), x, config, model, prior);
}

LaplaceResult laplace_approx(const Vector& x, const FitConfig& config, const MlfmModel& model,
                             const RbfKernel& force_kernel, Rng& rng, const std::optional<ForceRealisation>& init_g) {
    config.validate();
    const ForcePrior prior(force_kernel, model.grid.nodes(), model.basis.force_count());
    const MapRun run = run_map(x, initial_point(prior, init_g, rng), config.restarts, config, model, prior, rng);
    LaplaceResult out = laplace_whitened(run.best.x, x, config, model, prior);
    const double grad_norm = out.diagnostics.grad_norm;
    out.diagnostics = diagnostics_of(run);
    out.diagnostics.grad_norm = grad_norm;
    return out;
}

HyperResult optimize_hyper(const Vector& x, const FitConfig& config, const MlfmModel& skeleton,
                           const RbfKernel& force_kernel, Rng& rng, const std::optional<ForceRealisation>& init_g) {
    config.validate();
    MlfmModel model = skeleton;
    const Index dim = model.basis.state_dim();
    if (static_cast<Index>(model.config.sigma0_kernels.size()) != dim) {
        throw std::invalid_argument("optimize_hyper: need one sigma0 kernel per state component");
    }
    const ForcePrior prior(force_kernel, model.grid.nodes(), model.basis.force_count());

    Vector log_phi(2 * dim);
    for (Index k = 0; k < dim; ++k) {
        const auto& kern = model.config.sigma0_kernels[static_cast<std::size_t>(k)];
        log_phi(2 * k) = std::log(kern.variance);
        log_phi(2 * k + 1) = std::log(kern.lengthscale);
    }
    const auto set_phi = [dim](MlfmModel& m, const Vector& lp) {
        for (Index k = 0; k < dim; ++k) {
            auto& kern = m.config.sigma0_kernels[static_cast<std::size_t>(k)];
            kern.variance = std::exp(lp(2 * k));
            kern.lengthscale = std::exp(lp(2 * k + 1));
        }
    };

    HyperResult out;
    int iterations = 0;
    MapRun run = run_map(x, initial_point(prior, init_g, rng), config.restarts, config, model, prior, rng);
    iterations += run.iterations;
    Vector u = run.best.x;
    out.objective_trace.push_back(run.best.value);

    for (int cycle = 0; cycle < config.hyper_cycles; ++cycle) {
        if (cycle > 0) {
            run = run_map(x, u, 1, config, model, prior, rng);
            iterations += run.iterations;
            u = run.best.x;
            out.objective_trace.push_back(run.best.value);
        }

        // kernel update at fixed forces; the force prior term is constant here
        const ForceRealisation g = prior.to_forces(u);
        const double fixed = -prior.log_density(u);
        MlfmModel trial = model;
        const Objective phi_objective = [&](const Vector& lp, Vector* grad) -> double {
            if (lp.cwiseAbs().maxCoeff() > kLogBound) return std::numeric_limits<double>::infinity();
            set_phi(trial, lp);
            LikelihoodTerms terms;
            try {
                terms = evaluate_likelihood(trial, x, g, grad != nullptr);
            } catch (const NumericalError&) {
                return std::numeric_limits<double>::infinity();
            }
            if (grad) *grad = -terms.grad_log_sigma0;
            return fixed - terms.value;
        };
        const OptimizerResult phi_run = minimize_bfgs(phi_objective, log_phi, optimizer_options(config));
        iterations += phi_run.iterations;
        if (std::isfinite(phi_run.value) && phi_run.value <= out.objective_trace.back()) {
            log_phi = phi_run.x;
            set_phi(model, log_phi);
            out.objective_trace.push_back(phi_run.value);
        } else {
            out.objective_trace.push_back(out.objective_trace.back());
        }
    }

    // forces at the final kernels, then the Laplace approximation there
    run = run_map(x, u, 1, config, model, prior, rng);
    iterations += run.iterations;
    out.objective_trace.push_back(run.best.value);

    out.laplace = laplace_whitened(run.best.x, x, config, model, prior);
    const double grad_norm = out.laplace.diagnostics.grad_norm;
    out.laplace.diagnostics = diagnostics_of(run);
    out.laplace.diagnostics.iterations = iterations;
    out.laplace.diagnostics.grad_norm = grad_norm;
    out.sigma0_kernels = model.config.sigma0_kernels;
    return out;
}

GaussianDist marginal_at_obs(const LaplaceResult& result, const TimeGrid& grid) {
    const Index n = grid.size();
    if (result.map_g.nodes() != n) throw std::invalid_argument("marginal_at_obs: grid does not match result");
    std::vector<Index> idx;
    for (Index r = 0; r < result.map_g.forces(); ++r)
        for (Index p : grid.obs_nodes()) idx.push_back(r * n + p);
    return marginal(result.posterior, idx);
}

}  // namespace mlfm
