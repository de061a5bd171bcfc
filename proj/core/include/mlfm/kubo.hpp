#pragma once

#include <vector>

#include "mlfm/gaussian.hpp"
#include "mlfm/kernels.hpp"
#include "mlfm/model.hpp"
#include "mlfm/quadrature.hpp"

namespace mlfm {

/// Kubo oscillator dx/dt = g(t) [[0, -1], [1, 0]] x observed at t_0..t_N.
struct KuboTrajectory {
    Vector times;                    // observation times
    std::vector<Eigen::Vector2d> states;
    Vector node_times;               // grid nodes the forces were drawn at (may be empty)
    Vector true_g;                   // g at node_times (may be empty)
    Vector true_G;                   // integral of g over each observation interval (may be empty)

    /// Any |true G_i| >= pi, i.e. the angle extracted from the states is on a
    /// different 2*pi branch than the simulated rotation.
    bool wrapped() const;
    /// Observed states in component-major order (all x, then all y).
    Vector stacked_states() const;
};

/// Anticlockwise rotation by theta radians.
Eigen::Matrix2d rotation(double theta);

StructureBasis kubo_structure_basis();

/// Exact simulation: (g(nodes), G_1..G_N) drawn jointly, then
/// x_i = rotation(G_1 + ... + G_i) x_0.
KuboTrajectory simulate_exact(const RbfKernel& k, const TimeGrid& grid, const Eigen::Vector2d& x0, Rng& rng);

/// gamma_i = signed angle from x_{i-1} to x_i, in (-pi, pi].
Vector extract_angles(const KuboTrajectory& traj);

/// Law of g at the observation times given G = gamma.
GaussianDist ground_truth_conditional(const RbfKernel& k, const Vector& obs_times, const Vector& gamma);
GaussianDist ground_truth_conditional(const RbfKernel& k, const TimeGrid& grid, const Vector& gamma);

/// Data-driven starting point for force estimation: E[g(grid nodes) | G = gamma]
/// under the force prior. Depends only on the observed states and the kernel.
ForceRealisation angle_informed_forces(const RbfKernel& k, const TimeGrid& grid, const Vector& gamma);

}  // namespace mlfm
