#include "mlfm/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mlfm {

TimeGrid::TimeGrid(Vector nodes, std::vector<bool> is_observation)
    : nodes_(std::move(nodes)), is_observation_(std::move(is_observation)) {
    const Index n = nodes_.size();
    if (n < 1 || static_cast<Index>(is_observation_.size()) != n) {
        throw std::invalid_argument("TimeGrid: observation mask does not match node count");
    }
    for (Index p = 1; p < n; ++p) {
        if (!(nodes_(p) > nodes_(p - 1))) throw std::invalid_argument("TimeGrid: nodes must be strictly increasing");
    }
    if (!is_observation_.front() || !is_observation_.back()) {
        throw std::invalid_argument("TimeGrid: first and last nodes must be observations");
    }
    std::vector<double> obs;
    interval_of_node_.assign(static_cast<std::size_t>(n), 0);
    Index interval = 0;
    for (Index p = 0; p < n; ++p) {
        if (p > 0 && is_observation_[static_cast<std::size_t>(p - 1)]) ++interval;
        interval_of_node_[static_cast<std::size_t>(p)] = interval;
        if (is_observation_[static_cast<std::size_t>(p)]) {
            obs_nodes_.push_back(p);
            obs.push_back(nodes_(p));
        }
    }
    obs_times_ = Eigen::Map<const Vector>(obs.data(), static_cast<Index>(obs.size()));
}

TimeGrid build_grid(const Vector& obs_times, int panels_per_interval) {
    if (obs_times.size() < 2) throw std::invalid_argument("build_grid: need at least two observation times");
    if (panels_per_interval < 1) throw std::invalid_argument("build_grid: panels_per_interval must be >= 1");
    for (Index i = 1; i < obs_times.size(); ++i) {
        if (!(obs_times(i) > obs_times(i - 1))) {
            throw std::invalid_argument("build_grid: observation times must be strictly increasing");
        }
    }
    const Index per = 2 * panels_per_interval;
    const Index n_int = obs_times.size() - 1;
    Vector nodes(per * n_int + 1);
    std::vector<bool> mask(static_cast<std::size_t>(nodes.size()), false);
    for (Index i = 0; i < n_int; ++i) {
        const double a = obs_times(i);
        const double h = obs_times(i + 1) - a;
        nodes(per * i) = a;
        mask[static_cast<std::size_t>(per * i)] = true;
        for (Index j = 1; j < per; ++j) nodes(per * i + j) = a + h * static_cast<double>(j) / static_cast<double>(per);
    }
    nodes(per * n_int) = obs_times(n_int);
    mask.back() = true;
    return TimeGrid(std::move(nodes), std::move(mask));
}

QuadratureRule build_rule(const TimeGrid& grid) {
    const Index n = grid.size();
    const Vector& t = grid.nodes();
    QuadratureRule rule{Matrix::Zero(n, n)};

    // A grid made only of observation nodes has no Simpson midpoints.
    bool has_midpoints = false;
    for (bool obs : grid.is_observation()) has_midpoints |= !obs;
    if (!has_midpoints) {
        for (Index p = 1; p < n; ++p) {
            rule.weights.row(p) = rule.weights.row(p - 1);
            const double h = t(p) - t(p - 1);
            rule.weights(p, p - 1) += 0.5 * h;
            rule.weights(p, p) += 0.5 * h;
        }
        return rule;
    }

    if (n % 2 == 0) throw std::invalid_argument("build_rule: Simpson grid needs an odd node count");
    for (Index p = 2; p < n; p += 2) {
        // panel [p-2, p] with midpoint p-1
        const double width = t(p) - t(p - 2);
        if (std::abs(t(p - 1) - 0.5 * (t(p) + t(p - 2))) > 1e-12 * (1.0 + std::abs(t(p)))) {
            throw std::invalid_argument("build_rule: Simpson panel middle node is not the midpoint");
        }
        rule.weights.row(p) = rule.weights.row(p - 2);
        rule.weights(p, p - 2) += width / 6.0;
        rule.weights(p, p - 1) += 4.0 * width / 6.0;
        rule.weights(p, p) += width / 6.0;

        const double half = t(p - 1) - t(p - 2);
        rule.weights.row(p - 1) = rule.weights.row(p - 2);
        rule.weights(p - 1, p - 2) += 0.5 * half;
        rule.weights(p - 1, p - 1) += 0.5 * half;
    }
    return rule;
}

}  // namespace mlfm
