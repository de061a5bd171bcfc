#pragma once

#include <vector>

#include "mlfm/common.hpp"

namespace mlfm {

/// Observation times t_0 < ... < t_N augmented with Simpson panel midpoints.
/// With `panels` Simpson panels per observation interval the grid has
/// 2 * panels * N + 1 nodes; the default of one panel inserts exactly the
/// interval midpoints.
class TimeGrid {
public:
    TimeGrid() = default;

    /// Direct construction from a node set and observation mask. Nodes must be
    /// strictly increasing and the first and last node must be observations.
    TimeGrid(Vector nodes, std::vector<bool> is_observation);

    const Vector& nodes() const { return nodes_; }
    const Vector& obs_times() const { return obs_times_; }
    const std::vector<bool>& is_observation() const { return is_observation_; }
    /// Node indices of t_0..t_N.
    const std::vector<Index>& obs_nodes() const { return obs_nodes_; }
    /// For node p > 0, the observation interval i in 1..N containing it (node
    /// t_i belongs to interval i); node 0 maps to 0.
    const std::vector<Index>& interval_of_node() const { return interval_of_node_; }

    Index size() const { return nodes_.size(); }
    Index intervals() const { return obs_times_.size() - 1; }

private:
    Vector nodes_;
    Vector obs_times_;
    std::vector<bool> is_observation_;
    std::vector<Index> obs_nodes_;
    std::vector<Index> interval_of_node_;
};

/// Cumulative quadrature weights: row p approximates the integral from
/// nodes[0] to nodes[p] as a weighted sum over nodes 0..p. Stored dense and
/// lower triangular.
struct QuadratureRule {
    Matrix weights;

    Index size() const { return weights.rows(); }
};

TimeGrid build_grid(const Vector& obs_times, int panels_per_interval = 1);

/// Rows at panel boundaries use cumulative composite Simpson. Rows at panel
/// midpoints add a trapezoid over the half panel to the cumulative Simpson sum
/// at the previous boundary. On a grid without midpoints, cumulative trapezoid.
QuadratureRule build_rule(const TimeGrid& grid);

}  // namespace mlfm
