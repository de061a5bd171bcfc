#pragma once

#include <vector>

#include "mlfm/common.hpp"
#include "mlfm/kernels.hpp"
#include "mlfm/quadrature.hpp"

namespace mlfm {

/// Structure matrices of the coefficient process A(t) = A_0 + sum_r A_r g_r(t).
struct StructureBasis {
    Matrix a0;
    std::vector<Matrix> forces;  // A_1..A_R

    StructureBasis() = default;
    StructureBasis(Matrix a0_, std::vector<Matrix> forces_);

    Index state_dim() const { return a0.rows(); }
    Index force_count() const { return static_cast<Index>(forces.size()); }
};

/// Latent force values, one row per force and one column per grid node.
struct ForceRealisation {
    Matrix values;

    ForceRealisation() = default;
    explicit ForceRealisation(Matrix v) : values(std::move(v)) {}
    static ForceRealisation zeros(Index forces, Index nodes) { return ForceRealisation(Matrix::Zero(forces, nodes)); }

    Index forces() const { return values.rows(); }
    Index nodes() const { return values.cols(); }

    /// Force-major flattening: entry r * nodes + p holds g_r(node p).
    Vector flattened() const;
    static ForceRealisation from_flat(const Vector& flat, Index forces, Index nodes);
};

struct PicardConfig {
    int order = 1;                         // truncation order M
    double gamma_scale = 1e-4;             // Gamma = gamma_scale * I
    std::vector<RbfKernel> sigma0_kernels;  // one per state component

    void validate() const;
};

/// State vectors use component-major ordering: entry k * nodes + p holds
/// component k at node p.
inline Index state_index(Index component, Index node, Index nodes) { return component * nodes + node; }

/// State coordinates of every component at the observation nodes, in
/// component-major order.
std::vector<Index> observation_state_indices(const TimeGrid& grid, Index state_dim);

Matrix coefficient_at(const StructureBasis& basis, const Vector& g_col);

/// Square operator of size K * nodes performing one discrete Picard step:
/// (K x)_p = x(t_0) + sum_q w_pq A(g_q) x_q.
Matrix picard_operator(const StructureBasis& basis, const TimeGrid& grid, const QuadratureRule& rule,
                       const ForceRealisation& g);

Vector picard_iterate(const Matrix& op, const Vector& x);

/// Sigma_0 = sigma0, Sigma_m = op Sigma_{m-1} op^T + Gamma for m = 1..order.
/// `order` defaults to config.order; passing 0 returns sigma0.
Matrix sa_covariance(const Matrix& op, const PicardConfig& config, const Matrix& sigma0);
Matrix sa_covariance(const Matrix& op, const PicardConfig& config, const Matrix& sigma0, int order);

/// Block-diagonal prior of the initial approximation, block k = gram(phi_k, nodes).
Matrix build_sigma0(const PicardConfig& config, const TimeGrid& grid);

/// Everything the likelihood needs besides the data and the forces.
struct MlfmModel {
    StructureBasis basis;
    TimeGrid grid;
    QuadratureRule rule;
    PicardConfig config;
    /// State coordinates that enter the likelihood. Empty means all of them;
    /// unobserved coordinates are marginalized out of N(0, Sigma_M).
    std::vector<Index> observed;

    Index state_size() const { return basis.state_dim() * grid.size(); }
    Index data_size() const { return observed.empty() ? state_size() : static_cast<Index>(observed.size()); }
};

enum class ObservedStates { AllNodes, ObservationNodes };

MlfmModel make_model(StructureBasis basis, TimeGrid grid, PicardConfig config,
                     ObservedStates observed = ObservedStates::AllNodes);

/// log N(x | 0, Sigma_M(g)) and, on request, its exact gradients.
struct LikelihoodTerms {
    double value = 0.0;
    Matrix grad_g;          // forces x nodes
    Vector grad_log_sigma0;  // (d/dlog variance, d/dlog lengthscale) per component
};

LikelihoodTerms evaluate_likelihood(const MlfmModel& model, const Vector& x, const ForceRealisation& g,
                                    bool with_gradient);

double marginal_loglik(const Vector& x, const ForceRealisation& g, const MlfmModel& model);
double marginal_loglik(const Vector& x, const ForceRealisation& g, const StructureBasis& basis,
                       const TimeGrid& grid, const QuadratureRule& rule, const PicardConfig& config);

Matrix loglik_gradient(const Vector& x, const ForceRealisation& g, const MlfmModel& model);
Matrix loglik_gradient(const Vector& x, const ForceRealisation& g, const StructureBasis& basis,
                       const TimeGrid& grid, const QuadratureRule& rule, const PicardConfig& config);

}  // namespace mlfm
