// Command-line front end: simulate, fit and score Kubo oscillator data.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mlfm/experiment.hpp"
#include "mlfm/io.hpp"

namespace {

using namespace mlfm;

struct Globals {
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

ExperimentConfig load_or_default(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_experiment_config(path);
}

TimeGrid grid_of(const KuboTrajectory& traj) {
    if (traj.node_times.size() > traj.times.size()) {
        std::vector<bool> observed;
        Index next = 0;
        for (Index p = 0; p < traj.node_times.size(); ++p) {
            const bool hit = next < traj.times.size() && traj.node_times(p) == traj.times(next);
            observed.push_back(hit);
            if (hit) ++next;
        }
        return TimeGrid(traj.node_times, std::move(observed));
    }
    return build_grid(traj.times);
}

void note(const Globals& g, const std::string& msg) {
    if (g.verbose) std::cerr << msg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiplicative latent force models: Kubo oscillator simulation and inference"};
    app.require_subcommand(1);
    Globals globals;
    app.add_option("--seed", globals.seed, "Master seed (overrides the config file)");
    app.add_flag("--verbose", globals.verbose, "Progress messages on stderr");

    std::string config_path, out_path, traj_path, a_path, b_path, out_dir;
    std::optional<double> T_opt, dt_opt;
    int order = 0;

    auto* simulate = app.add_subcommand("simulate", "Simulate one exact Kubo trajectory with its true forces");
    simulate->add_option("--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
    simulate->add_option("--T", T_opt, "Interval length (default: first T in the config)");
    simulate->add_option("--dt", dt_opt, "Observation spacing (default: first dt in the config)");
    simulate->add_option("--out", out_path, "Trajectory CSV")->required();

    auto* truth = app.add_subcommand("truth", "Exact conditional law of the forces at the observation times");
    truth->add_option("--traj", traj_path, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    truth->add_option("--config", config_path, "Config supplying the force kernel")->check(CLI::ExistingFile);
    truth->add_option("--out", out_path, "Output JSON")->required();

    auto* fit = app.add_subcommand("fit", "MAP and Laplace approximation of the forces");
    fit->add_option("--traj", traj_path, "Trajectory CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--order", order, "Truncation order M")->required()->check(CLI::PositiveNumber);
    fit->add_option("--config", config_path, "Config supplying the kernel, gamma and fit settings")
        ->check(CLI::ExistingFile);
    fit->add_option("--out", out_path, "Output JSON")->required();

    auto* compare = app.add_subcommand("compare", "Wasserstein-2 distance between two Gaussian JSON files");
    compare->add_option("--a", a_path)->required()->check(CLI::ExistingFile);
    compare->add_option("--b", b_path)->required()->check(CLI::ExistingFile);

    auto* experiment = app.add_subcommand("experiment", "Replication study over (T, dt, M)");
    experiment->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    experiment->add_option("--out-dir", out_dir, "Directory for raw.csv and summary.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (simulate->parsed()) {
            ExperimentConfig cfg = load_or_default(config_path);
            if (globals.seed) cfg.seed = *globals.seed;
            const double T = T_opt.value_or(cfg.T_values.front());
            const double dt = dt_opt.value_or(cfg.dt_values.front());
            const ReplicationData data = simulate_replication(cfg, T, dt, 0);
            write_file(out_path, trajectory_to_csv(data.trajectory));
            note(globals, "wrote " + out_path);
        } else if (truth->parsed()) {
            const ExperimentConfig cfg = load_or_default(config_path);
            const KuboTrajectory traj = trajectory_from_csv(read_file(traj_path));
            const GaussianDist law = ground_truth_conditional(cfg.force_kernel, traj.times, extract_angles(traj));
            write_file(out_path, distribution_to_json(law));
            note(globals, "wrote " + out_path);
        } else if (fit->parsed()) {
            ExperimentConfig cfg = load_or_default(config_path);
            if (globals.seed) cfg.seed = *globals.seed;
            const KuboTrajectory traj = trajectory_from_csv(read_file(traj_path));
            const TimeGrid grid = grid_of(traj);
            const FitOutcome result = fit_kubo(traj, grid, order, cfg, mix64(cfg.seed ^ static_cast<std::uint64_t>(order)));
            write_file(out_path,
                       laplace_to_json(result.hyper.laplace, result.obs_marginal, result.hyper.sigma0_kernels, order));
            note(globals, "fit: " + result.hyper.laplace.diagnostics.stop_reason + " after " +
                              std::to_string(result.hyper.laplace.diagnostics.iterations) + " iterations");
        } else if (compare->parsed()) {
            const GaussianDist a = distribution_from_json(read_file(a_path));
            const GaussianDist b = distribution_from_json(read_file(b_path));
            std::cout << format_number(wasserstein2(a, b)) << "\n";
        } else if (experiment->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path);
            if (globals.seed) cfg.seed = *globals.seed;
            std::filesystem::create_directories(out_dir);
            LogSink log;
            if (globals.verbose) log = [](const std::string& line) { std::cerr << line << "\n"; };
            const ExperimentResult result = run_experiment(cfg, log);
            const std::filesystem::path dir(out_dir);
            write_file((dir / "raw.csv").string(), rows_to_csv(result.rows));
            write_file((dir / "summary.csv").string(), summary_to_csv(result.summary));
            note(globals, "wrote " + (dir / "raw.csv").string() + " and " + (dir / "summary.csv").string());
        }
    } catch (const std::exception& e) {
        std::cerr << "mlfm: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
