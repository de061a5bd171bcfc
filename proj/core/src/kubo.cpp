#include "mlfm/kubo.hpp"

#include <cmath>
#include <numbers>

namespace mlfm {

namespace {

std::vector<Interval> observation_intervals(const Vector& obs_times) {
    std::vector<Interval> out;
    for (Index i = 1; i < obs_times.size(); ++i) out.emplace_back(obs_times(i - 1), obs_times(i));
    return out;
}

}  // namespace

bool KuboTrajectory::wrapped() const {
    return true_G.size() > 0 && true_G.cwiseAbs().maxCoeff() >= std::numbers::pi;
}

Vector KuboTrajectory::stacked_states() const {
    const Index n = static_cast<Index>(states.size());
    Vector out(2 * n);
    for (Index i = 0; i < n; ++i) {
        out(i) = states[static_cast<std::size_t>(i)](0);
        out(n + i) = states[static_cast<std::size_t>(i)](1);
    }
    return out;
}

Eigen::Matrix2d rotation(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
}

StructureBasis kubo_structure_basis() {
    Matrix a1(2, 2);
    a1 << 0.0, -1.0, 1.0, 0.0;
    return StructureBasis(Matrix::Zero(2, 2), {a1});
}

KuboTrajectory simulate_exact(const RbfKernel& k, const TimeGrid& grid, const Eigen::Vector2d& x0, Rng& rng) {
    if (!(x0.norm() > 0.0)) throw std::invalid_argument("simulate_exact: initial state must be nonzero");
    const auto intervals = observation_intervals(grid.obs_times());
    const GaussianDist joint = joint_force_integral_dist(k, grid.nodes(), intervals);
    const Vector draw = sample(joint, rng, 1).col(0);

    KuboTrajectory traj;
    traj.times = grid.obs_times();
    traj.node_times = grid.nodes();
    traj.true_g = draw.head(grid.size());
    traj.true_G = draw.tail(static_cast<Index>(intervals.size()));
    double angle = 0.0;
    traj.states.push_back(x0);
    for (Index i = 0; i < traj.true_G.size(); ++i) {
        angle += traj.true_G(i);
        traj.states.push_back(rotation(angle) * x0);
    }
    return traj;
}

Vector extract_angles(const KuboTrajectory& traj) {
    const Index n = static_cast<Index>(traj.states.size());
    for (const auto& s : traj.states) {
        if (!(s.norm() > 0.0)) throw std::invalid_argument("extract_angles: zero-norm state");
    }
    Vector gamma(std::max<Index>(n - 1, 0));
    for (Index i = 1; i < n; ++i) {
        const auto& a = traj.states[static_cast<std::size_t>(i - 1)];
        const auto& b = traj.states[static_cast<std::size_t>(i)];
        gamma(i - 1) = std::atan2(a(0) * b(1) - a(1) * b(0), a.dot(b));
    }
    return gamma;
}

GaussianDist ground_truth_conditional(const RbfKernel& k, const Vector& obs_times, const Vector& gamma) {
    const auto intervals = observation_intervals(obs_times);
    if (gamma.size() != static_cast<Index>(intervals.size())) {
        throw std::invalid_argument("ground_truth_conditional: need one angle per interval");
    }
    const GaussianDist joint = joint_force_integral_dist(k, obs_times, intervals);
    std::vector<Index> idx;
    for (Index i = 0; i < gamma.size(); ++i) idx.push_back(obs_times.size() + i);
    return condition(joint, idx, gamma);
}

GaussianDist ground_truth_conditional(const RbfKernel& k, const TimeGrid& grid, const Vector& gamma) {
    return ground_truth_conditional(k, grid.obs_times(), gamma);
}

ForceRealisation angle_informed_forces(const RbfKernel& k, const TimeGrid& grid, const Vector& gamma) {
    const auto intervals = observation_intervals(grid.obs_times());
    if (gamma.size() != static_cast<Index>(intervals.size())) {
        throw std::invalid_argument("angle_informed_forces: need one angle per interval");
    }
    const GaussianDist joint = joint_force_integral_dist(k, grid.nodes(), intervals);
    std::vector<Index> idx;
    for (Index i = 0; i < gamma.size(); ++i) idx.push_back(grid.size() + i);
    return ForceRealisation(Matrix(condition(joint, idx, gamma).mean.transpose()));
}

}  // namespace mlfm
