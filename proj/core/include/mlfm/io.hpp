#pragma once

#include <string>
#include <vector>

#include "mlfm/gaussian.hpp"
#include "mlfm/inference.hpp"
#include "mlfm/kubo.hpp"

namespace mlfm {

/// One row per node: t,observed,x,y,g_true,G_true. x and y are blank at
/// unobserved nodes; G_true is the integral over the interval ending at an
/// observation node and blank elsewhere.
std::string trajectory_to_csv(const KuboTrajectory& traj);
KuboTrajectory trajectory_from_csv(const std::string& text);

/// {"mean": [...], "cov": [[...], ...]}, row-major covariance.
std::string distribution_to_json(const GaussianDist& dist);
GaussianDist distribution_from_json(const std::string& text);

/// Observation-node marginal as {mean, cov} plus the full posterior over all
/// nodes, the fitted phi and the optimizer diagnostics.
std::string laplace_to_json(const LaplaceResult& result, const GaussianDist& obs_marginal,
                            const std::vector<RbfKernel>& sigma0_kernels, int order);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace mlfm
