#include "mlfm/lfm.hpp"

#include <cmath>
#include <stdexcept>

namespace mlfm {

Vector lfm_solve(const LfmParams& params, const ForceRealisation& forces, const TimeGrid& grid,
                 const QuadratureRule& rule, const Vector& x0) {
    const Index dim = params.state_dim();
    const Index n = grid.size();
    if (params.drift.size() != dim || params.sensitivity.rows() != dim || x0.size() != dim) {
        throw std::invalid_argument("lfm_solve: parameter dimensions are inconsistent");
    }
    if (forces.forces() != params.force_count() || forces.nodes() != n || rule.size() != n) {
        throw std::invalid_argument("lfm_solve: force realisation does not match the grid");
    }
    const Vector& t = grid.nodes();
    const Matrix driven = params.sensitivity * forces.values;  // K x nodes
    Vector x(dim * n);
    for (Index k = 0; k < dim; ++k) {
        const double d = params.decay(k);
        for (Index p = 0; p < n; ++p) {
            const double elapsed = t(p) - t(0);
            // integral of exp(-d (t - tau)) over [t_0, t] = -expm1(-d elapsed) / d
            const double drift_integral = d == 0.0 ? elapsed : -std::expm1(-d * elapsed) / d;
            double forced = 0.0;
            for (Index q = 0; q <= p; ++q) {
                const double w = rule.weights(p, q);
                if (w != 0.0) forced += w * std::exp(-d * (t(p) - t(q))) * driven(k, q);
            }
            x(k * n + p) = std::exp(-d * elapsed) * x0(k) + drift_integral * params.drift(k) + forced;
        }
    }
    return x;
}

}  // namespace mlfm
