#pragma once

#include "mlfm/common.hpp"
#include "mlfm/model.hpp"
#include "mlfm/quadrature.hpp"

namespace mlfm {

/// First-order additive latent force model dx/dt = -D x + b + S g(t) with
/// diagonal D.
struct LfmParams {
    Vector decay;        // diagonal of D
    Vector drift;        // b
    Matrix sensitivity;  // S, K x R

    Index state_dim() const { return decay.size(); }
    Index force_count() const { return sensitivity.cols(); }
};

/// Explicit solution at every grid node, component-major (entry k * nodes + p).
/// The forced term is integrated with the grid's quadrature rule.
Vector lfm_solve(const LfmParams& params, const ForceRealisation& forces, const TimeGrid& grid,
                 const QuadratureRule& rule, const Vector& x0);

}  // namespace mlfm
