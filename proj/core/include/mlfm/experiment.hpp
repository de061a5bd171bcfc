#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlfm/gaussian.hpp"
#include "mlfm/inference.hpp"
#include "mlfm/kernels.hpp"
#include "mlfm/kubo.hpp"

namespace mlfm {

/// Replication study over (T, dt, M) for the Kubo oscillator.
struct ExperimentConfig {
    std::vector<double> T_values{3.0, 6.0, 9.0};
    std::vector<double> dt_values{0.5, 0.75, 1.0};
    std::vector<int> orders{3, 5, 7, 10};
    int replications = 20;
    std::uint64_t seed = 0;
    RbfKernel force_kernel{1.0, 1.0};
    double gamma_scale = 1e-4;
    Eigen::Vector2d x0{1.0, 0.0};
    FitConfig fit;
    int panels_per_interval = 1;
    /// Worker threads for independent replications; 0 picks the hardware count.
    int threads = 1;
    /// Wall-clock timings are not reproducible, so they are only written on request.
    bool record_wall_time = false;

    void validate() const;
};

/// Parses a JSON object with the ExperimentConfig fields. Unknown keys and
/// type mismatches throw std::invalid_argument.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

/// N = T / dt; throws std::invalid_argument unless it is a positive integer.
int interval_count(double T, double dt);

/// Observation times i * dt for i = 0..N.
Vector observation_times(double T, double dt);

struct ResultRow {
    double T = 0.0;
    double dt = 0.0;
    int order = 0;
    int rep = 0;
    std::optional<double> wasserstein;  // empty when the fit failed
    bool converged = false;
    bool wrapped = false;
    std::optional<double> wall_time_s;
};

struct SummaryRow {
    double T = 0.0;
    double dt = 0.0;
    int order = 0;
    int replications = 0;
    int converged = 0;
    double mean = 0.0;  // over converged rows
    double sd = 0.0;
    double se = 0.0;
};

/// Pure function of its arguments; adding grid cells never changes existing seeds.
std::uint64_t replication_seed(std::uint64_t master, double T, double dt, int rep);

struct ReplicationData {
    TimeGrid grid;
    KuboTrajectory trajectory;
    Vector gamma;
    GaussianDist truth;
};

ReplicationData simulate_replication(const ExperimentConfig& cfg, double T, double dt, int rep);

struct FitOutcome {
    HyperResult hyper;
    GaussianDist obs_marginal;
};

/// Kubo model for the given observation grid with phi initialized at (1, 1).
MlfmModel kubo_model(const TimeGrid& grid, int order, double gamma_scale);

/// optimize_hyper + Laplace on one trajectory at one order.
FitOutcome fit_kubo(const KuboTrajectory& traj, const TimeGrid& grid, int order, const ExperimentConfig& cfg,
                    std::uint64_t seed);

std::vector<ResultRow> run_replication(const ExperimentConfig& cfg, double T, double dt, int rep);

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::vector<SummaryRow> summary;
};

using LogSink = std::function<void(const std::string&)>;

ExperimentResult run_experiment(const ExperimentConfig& cfg, const LogSink& log = {});

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// Header: T,dt,M,rep,wasserstein,converged,wrapped_flag,wall_time_s
std::string rows_to_csv(const std::vector<ResultRow>& rows);
/// Header: T,dt,M,replications,converged,mean_wasserstein,sd_wasserstein,se_wasserstein
std::string summary_to_csv(const std::vector<SummaryRow>& rows);

/// Shortest round-trip decimal representation, independent of locale.
std::string format_number(double v);

}  // namespace mlfm
