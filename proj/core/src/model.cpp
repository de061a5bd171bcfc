#include "mlfm/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mlfm {

StructureBasis::StructureBasis(Matrix a0_, std::vector<Matrix> forces_)
    : a0(std::move(a0_)), forces(std::move(forces_)) {
    if (a0.rows() != a0.cols() || a0.rows() < 1) throw std::invalid_argument("StructureBasis: A_0 must be square");
    if (forces.empty()) throw std::invalid_argument("StructureBasis: need at least one force matrix");
    for (const auto& a : forces) {
        if (a.rows() != a0.rows() || a.cols() != a0.cols()) {
            throw std::invalid_argument("StructureBasis: structure matrices differ in shape");
        }
    }
}

Vector ForceRealisation::flattened() const {
    Vector flat(values.size());
    for (Index r = 0; r < forces(); ++r) flat.segment(r * nodes(), nodes()) = values.row(r).transpose();
    return flat;
}

ForceRealisation ForceRealisation::from_flat(const Vector& flat, Index forces, Index nodes) {
    if (flat.size() != forces * nodes) throw std::invalid_argument("ForceRealisation: flat length mismatch");
    Matrix v(forces, nodes);
    for (Index r = 0; r < forces; ++r) v.row(r) = flat.segment(r * nodes, nodes).transpose();
    return ForceRealisation(std::move(v));
}

void PicardConfig::validate() const {
    if (order < 1) throw std::invalid_argument("PicardConfig: order must be at least 1");
    if (!(gamma_scale >= 0.0)) throw std::invalid_argument("PicardConfig: gamma_scale must be >= 0");
    for (const auto& k : sigma0_kernels) {
        if (!(k.variance > 0.0) || !(k.lengthscale > 0.0)) {
            throw std::invalid_argument("PicardConfig: sigma0 kernel parameters must be positive");
        }
    }
}

std::vector<Index> observation_state_indices(const TimeGrid& grid, Index state_dim) {
    std::vector<Index> idx;
    idx.reserve(static_cast<std::size_t>(state_dim) * grid.obs_nodes().size());
    for (Index k = 0; k < state_dim; ++k)
        for (Index p : grid.obs_nodes()) idx.push_back(state_index(k, p, grid.size()));
    return idx;
}

Matrix coefficient_at(const StructureBasis& basis, const Vector& g_col) {
    if (g_col.size() != basis.force_count()) throw std::invalid_argument("coefficient_at: force count mismatch");
    Matrix a = basis.a0;
    for (Index r = 0; r < basis.force_count(); ++r) a += basis.forces[static_cast<std::size_t>(r)] * g_col(r);
    return a;
}

Matrix picard_operator(const StructureBasis& basis, const TimeGrid& grid, const QuadratureRule& rule,
                       const ForceRealisation& g) {
    const Index n = grid.size();
    const Index dim = basis.state_dim();
    if (rule.size() != n || g.nodes() != n || g.forces() != basis.force_count()) {
        throw std::invalid_argument("picard_operator: dimension mismatch");
    }
    const Matrix& w = rule.weights;
    Matrix op = Matrix::Zero(dim * n, dim * n);
    Vector a_kl(n);
    for (Index k = 0; k < dim; ++k) {
        for (Index l = 0; l < dim; ++l) {
            a_kl.setConstant(basis.a0(k, l));
            for (Index r = 0; r < basis.force_count(); ++r) {
                const double c = basis.forces[static_cast<std::size_t>(r)](k, l);
                if (c != 0.0) a_kl += c * g.values.row(r).transpose();
            }
            op.block(k * n, l * n, n, n) = w * a_kl.asDiagonal();
        }
        // initial-state selector
        op.block(k * n, k * n, n, 1).array() += 1.0;
    }
    return op;
}

Vector picard_iterate(const Matrix& op, const Vector& x) {
    if (op.cols() != x.size()) throw std::invalid_argument("picard_iterate: dimension mismatch");
    return op * x;
}

Matrix sa_covariance(const Matrix& op, const PicardConfig& config, const Matrix& sigma0, int order) {
    if (op.rows() != op.cols() || sigma0.rows() != op.rows() || sigma0.cols() != op.cols()) {
        throw std::invalid_argument("sa_covariance: dimension mismatch");
    }
    Matrix sigma = sigma0;
    for (int m = 0; m < order; ++m) {
        sigma = symmetrized(op * sigma * op.transpose());
        sigma.diagonal().array() += config.gamma_scale;
    }
    return sigma;
}

Matrix sa_covariance(const Matrix& op, const PicardConfig& config, const Matrix& sigma0) {
    return sa_covariance(op, config, sigma0, config.order);
}

Matrix build_sigma0(const PicardConfig& config, const TimeGrid& grid) {
    const Index n = grid.size();
    const Index dim = static_cast<Index>(config.sigma0_kernels.size());
    Matrix sigma0 = Matrix::Zero(dim * n, dim * n);
    for (Index k = 0; k < dim; ++k) {
        sigma0.block(k * n, k * n, n, n) = gram(config.sigma0_kernels[static_cast<std::size_t>(k)], grid.nodes());
    }
    return sigma0;
}

MlfmModel make_model(StructureBasis basis, TimeGrid grid, PicardConfig config, ObservedStates observed) {
    config.validate();
    if (static_cast<Index>(config.sigma0_kernels.size()) != basis.state_dim()) {
        throw std::invalid_argument("make_model: need one sigma0 kernel per state component");
    }
    MlfmModel model;
    model.rule = build_rule(grid);
    if (observed == ObservedStates::ObservationNodes) {
        model.observed = observation_state_indices(grid, basis.state_dim());
    }
    model.basis = std::move(basis);
    model.grid = std::move(grid);
    model.config = std::move(config);
    return model;
}

LikelihoodTerms evaluate_likelihood(const MlfmModel& model, const Vector& x, const ForceRealisation& g,
                                    bool with_gradient) {
    const Index n = model.grid.size();
    const Index dim = model.basis.state_dim();
    const Index full = dim * n;
    if (x.size() != model.data_size()) throw std::invalid_argument("marginal_loglik: state vector length mismatch");
    if (static_cast<Index>(model.config.sigma0_kernels.size()) != dim) {
        throw std::invalid_argument("marginal_loglik: need one sigma0 kernel per state component");
    }
    const int order = model.config.order;
    const Matrix op = picard_operator(model.basis, model.grid, model.rule, g);

    std::vector<Matrix> history;
    history.reserve(static_cast<std::size_t>(order) + 1);
    history.push_back(build_sigma0(model.config, model.grid));
    for (int m = 0; m < order; ++m) {
        Matrix next = symmetrized(op * history.back() * op.transpose());
        next.diagonal().array() += model.config.gamma_scale;
        history.push_back(std::move(next));
    }
    const Matrix& sigma = history.back();

    const bool subset = !model.observed.empty();
    const Matrix sigma_obs = subset ? Matrix(sigma(model.observed, model.observed)) : sigma;
    const auto chol = jittered_cholesky(sigma_obs, "marginal_loglik: Sigma_M");
    const Vector alpha = chol.solve(x);
    const double d = static_cast<double>(x.size());

    LikelihoodTerms out;
    out.value = -0.5 * x.dot(alpha) - 0.5 * chol.log_det() - 0.5 * d * std::log(2.0 * std::numbers::pi);
    if (!with_gradient) return out;

    // dL/dSigma_M = (alpha alpha^T - Sigma^{-1}) / 2 on the observed block
    const Matrix inv = chol.solve(Matrix(Matrix::Identity(sigma_obs.rows(), sigma_obs.cols())));
    Matrix b_obs = 0.5 * (alpha * alpha.transpose() - inv);
    // the jitter is proportional to trace(Sigma), so it carries its own derivative
    const double tr = sigma_obs.trace();
    if (chol.jitter > 0.0 && tr > 0.0) b_obs.diagonal().array() += b_obs.trace() * chol.jitter / tr;
    Matrix adj = Matrix::Zero(full, full);
    if (subset) {
        adj(model.observed, model.observed) = b_obs;
    } else {
        adj = b_obs;
    }

    // Reverse sweep through Sigma_m = K Sigma_{m-1} K^T + Gamma.
    Matrix grad_op = Matrix::Zero(full, full);
    for (int m = order; m >= 1; --m) {
        const Matrix adj_op = adj * op;
        grad_op.noalias() += 2.0 * adj_op * history[static_cast<std::size_t>(m - 1)];
        adj = symmetrized(op.transpose() * adj_op);
    }

    // dK/dg_{r,q} places w_pq * A_r in column q of every block row p.
    const Matrix& w = model.rule.weights;
    out.grad_g = Matrix::Zero(model.basis.force_count(), n);
    for (Index k = 0; k < dim; ++k) {
        for (Index l = 0; l < dim; ++l) {
            bool used = false;
            for (const auto& a : model.basis.forces) used |= a(k, l) != 0.0;
            if (!used) continue;
            const Vector col_sums =
                w.cwiseProduct(grad_op.block(k * n, l * n, n, n)).colwise().sum().transpose();
            for (Index r = 0; r < model.basis.force_count(); ++r) {
                const double c = model.basis.forces[static_cast<std::size_t>(r)](k, l);
                if (c != 0.0) out.grad_g.row(r) += c * col_sums.transpose();
            }
        }
    }

    // adj now holds dL/dSigma_0.
    out.grad_log_sigma0 = Vector::Zero(2 * dim);
    const Vector& t = model.grid.nodes();
    for (Index k = 0; k < dim; ++k) {
        const auto& kern = model.config.sigma0_kernels[static_cast<std::size_t>(k)];
        const auto block = adj.block(k * n, k * n, n, n);
        const Matrix& prior = history.front();
        double d_var = 0.0;
        double d_len = 0.0;
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                const double kij = prior(k * n + i, k * n + j);
                const double r = (t(i) - t(j)) / kern.lengthscale;
                d_var += block(i, j) * kij;
                d_len += block(i, j) * kij * r * r;
            }
        }
        out.grad_log_sigma0(2 * k) = d_var;
        out.grad_log_sigma0(2 * k + 1) = d_len;
    }
    return out;
}

double marginal_loglik(const Vector& x, const ForceRealisation& g, const MlfmModel& model) {
    return evaluate_likelihood(model, x, g, false).value;
}

Matrix loglik_gradient(const Vector& x, const ForceRealisation& g, const MlfmModel& model) {
    return evaluate_likelihood(model, x, g, true).grad_g;
}

namespace {

MlfmModel bundle(const StructureBasis& basis, const TimeGrid& grid, const QuadratureRule& rule,
                 const PicardConfig& config) {
    MlfmModel model;
    model.basis = basis;
    model.grid = grid;
    model.rule = rule;
    model.config = config;
    return model;
}

}  // namespace

double marginal_loglik(const Vector& x, const ForceRealisation& g, const StructureBasis& basis,
                       const TimeGrid& grid, const QuadratureRule& rule, const PicardConfig& config) {
    return marginal_loglik(x, g, bundle(basis, grid, rule, config));
}

Matrix loglik_gradient(const Vector& x, const ForceRealisation& g, const StructureBasis& basis,
                       const TimeGrid& grid, const QuadratureRule& rule, const PicardConfig& config) {
    return loglik_gradient(x, g, bundle(basis, grid, rule, config));
}

}  // namespace mlfm
