#include "mlfm/experiment.hpp"

#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mlfm/io.hpp"

namespace mlfm {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (T_values.empty() || dt_values.empty()) throw std::invalid_argument("config: T_values and dt_values must be non-empty");
    for (double T : T_values)
        for (double dt : dt_values) interval_count(T, dt);
    for (int m : orders)
        if (m < 1) throw std::invalid_argument("config: orders must be >= 1");
    if (replications < 1) throw std::invalid_argument("config: replications must be >= 1");
    if (!(force_kernel.variance > 0.0) || !(force_kernel.lengthscale > 0.0)) {
        throw std::invalid_argument("config: psi must be positive");
    }
    if (!(gamma_scale >= 0.0)) throw std::invalid_argument("config: gamma_scale must be >= 0");
    if (!(x0.norm() > 0.0)) throw std::invalid_argument("config: x0 must be nonzero");
    if (panels_per_interval < 1) throw std::invalid_argument("config: panels_per_interval must be >= 1");
    if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
    fit.validate();
}

namespace {

template <typename T>
T take(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"T_values", "dt_values", "orders", "replications", "seed", "psi", "gamma_scale", "x0", "fit",
                    "panels_per_interval", "threads", "record_wall_time"},
                   "top level");
    ExperimentConfig cfg;
    if (j.contains("T_values")) cfg.T_values = take<std::vector<double>>(j, "T_values");
    if (j.contains("dt_values")) cfg.dt_values = take<std::vector<double>>(j, "dt_values");
    if (j.contains("orders")) cfg.orders = take<std::vector<int>>(j, "orders");
    if (j.contains("replications")) cfg.replications = take<int>(j, "replications");
    if (j.contains("seed")) cfg.seed = take<std::uint64_t>(j, "seed");
    if (j.contains("psi")) {
        const auto psi = take<std::vector<double>>(j, "psi");
        if (psi.size() != 2) throw std::invalid_argument("config: psi must have two entries");
        cfg.force_kernel = RbfKernel(psi[0], psi[1]);
    }
    if (j.contains("gamma_scale")) cfg.gamma_scale = take<double>(j, "gamma_scale");
    if (j.contains("x0")) {
        const auto x0 = take<std::vector<double>>(j, "x0");
        if (x0.size() != 2) throw std::invalid_argument("config: x0 must have two entries");
        cfg.x0 = {x0[0], x0[1]};
    }
    if (j.contains("panels_per_interval")) cfg.panels_per_interval = take<int>(j, "panels_per_interval");
    if (j.contains("threads")) cfg.threads = take<int>(j, "threads");
    if (j.contains("record_wall_time")) cfg.record_wall_time = take<bool>(j, "record_wall_time");
    if (j.contains("fit")) {
        const json& f = j.at("fit");
        reject_unknown(f, {"rel_tol", "grad_tol", "max_iterations", "restarts", "hessian_step", "hyper_cycles"},
                       "fit");
        if (f.contains("rel_tol")) cfg.fit.rel_tol = take<double>(f, "rel_tol");
        if (f.contains("grad_tol")) cfg.fit.grad_tol = take<double>(f, "grad_tol");
        if (f.contains("max_iterations")) cfg.fit.max_iterations = take<int>(f, "max_iterations");
        if (f.contains("restarts")) cfg.fit.restarts = take<int>(f, "restarts");
        if (f.contains("hessian_step")) cfg.fit.hessian_step = take<double>(f, "hessian_step");
        if (f.contains("hyper_cycles")) cfg.fit.hyper_cycles = take<int>(f, "hyper_cycles");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) { return parse_experiment_config(read_file(path)); }

int interval_count(double T, double dt) {
    if (!(T > 0.0) || !(dt > 0.0)) throw std::invalid_argument("config: T and dt must be positive");
    const double ratio = T / dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
        throw std::invalid_argument("config: T / dt = " + format_number(ratio) + " is not a positive integer (T=" +
                                    format_number(T) + ", dt=" + format_number(dt) + ")");
    }
    return static_cast<int>(rounded);
}

Vector observation_times(double T, double dt) {
    const int n = interval_count(T, dt);
    Vector t(n + 1);
    for (int i = 0; i <= n; ++i) t(i) = static_cast<double>(i) * dt;
    t(n) = T;
    return t;
}

std::uint64_t replication_seed(std::uint64_t master, double T, double dt, int rep) {
    std::uint64_t h = mix64(master);
    h = mix64(h ^ std::bit_cast<std::uint64_t>(T));
    h = mix64(h ^ std::bit_cast<std::uint64_t>(dt));
    h = mix64(h ^ static_cast<std::uint64_t>(rep));
    return h;
}

ReplicationData simulate_replication(const ExperimentConfig& cfg, double T, double dt, int rep) {
    ReplicationData data;
    data.grid = build_grid(observation_times(T, dt), cfg.panels_per_interval);
    Rng rng(replication_seed(cfg.seed, T, dt, rep));
    data.trajectory = simulate_exact(cfg.force_kernel, data.grid, cfg.x0, rng);
    data.gamma = extract_angles(data.trajectory);
    data.truth = ground_truth_conditional(cfg.force_kernel, data.grid, data.gamma);
    return data;
}

MlfmModel kubo_model(const TimeGrid& grid, int order, double gamma_scale) {
    PicardConfig pc;
    pc.order = order;
    pc.gamma_scale = gamma_scale;
    pc.sigma0_kernels = {RbfKernel(1.0, 1.0), RbfKernel(1.0, 1.0)};
    return make_model(kubo_structure_basis(), grid, pc, ObservedStates::ObservationNodes);
}

FitOutcome fit_kubo(const KuboTrajectory& traj, const TimeGrid& grid, int order, const ExperimentConfig& cfg,
                    std::uint64_t seed) {
    const MlfmModel model = kubo_model(grid, order, cfg.gamma_scale);
    const Vector x = traj.stacked_states();
    Rng rng(seed);
    const ForceRealisation init = angle_informed_forces(cfg.force_kernel, grid, extract_angles(traj));
    FitOutcome out{optimize_hyper(x, cfg.fit, model, cfg.force_kernel, rng, init), {}};
    out.obs_marginal = marginal_at_obs(out.hyper.laplace, grid);
    return out;
}

std::vector<ResultRow> run_replication(const ExperimentConfig& cfg, double T, double dt, int rep) {
    std::vector<ResultRow> rows;
    if (cfg.orders.empty()) return rows;
    const ReplicationData data = simulate_replication(cfg, T, dt, rep);
    const std::uint64_t base = replication_seed(cfg.seed, T, dt, rep);
    for (int order : cfg.orders) {
        ResultRow row;
        row.T = T;
        row.dt = dt;
        row.order = order;
        row.rep = rep;
        row.wrapped = data.trajectory.wrapped();
        const auto start = std::chrono::steady_clock::now();
        try {
            const FitOutcome fit =
                fit_kubo(data.trajectory, data.grid, order, cfg, mix64(base ^ static_cast<std::uint64_t>(order)));
            row.wasserstein = wasserstein2(fit.obs_marginal, data.truth);
            row.converged = true;
        } catch (const std::exception&) {
            row.converged = false;
        }
        if (cfg.record_wall_time) {
            row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    std::map<std::tuple<double, double, int>, std::vector<const ResultRow*>> cells;
    std::vector<std::tuple<double, double, int>> order_seen;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.T, r.dt, r.order);
        if (!cells.contains(key)) order_seen.push_back(key);
        cells[key].push_back(&r);
    }
    std::vector<SummaryRow> out;
    for (const auto& key : order_seen) {
        const auto& members = cells[key];
        SummaryRow s;
        std::tie(s.T, s.dt, s.order) = key;
        s.replications = static_cast<int>(members.size());
        std::vector<double> w;
        for (const auto* r : members)
            if (r->converged && r->wasserstein) w.push_back(*r->wasserstein);
        s.converged = static_cast<int>(w.size());
        if (!w.empty()) {
            double sum = 0.0;
            for (double v : w) sum += v;
            s.mean = sum / static_cast<double>(w.size());
            if (w.size() > 1) {
                double ss = 0.0;
                for (double v : w) ss += (v - s.mean) * (v - s.mean);
                s.sd = std::sqrt(ss / static_cast<double>(w.size() - 1));
                s.se = s.sd / std::sqrt(static_cast<double>(w.size()));
            }
        }
        out.push_back(s);
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const LogSink& log) {
    cfg.validate();
    struct Task {
        double T;
        double dt;
        int rep;
    };
    std::vector<Task> tasks;
    for (double T : cfg.T_values)
        for (double dt : cfg.dt_values)
            for (int rep = 0; rep < cfg.replications; ++rep) tasks.push_back({T, dt, rep});

    std::vector<std::vector<ResultRow>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& t = tasks[i];
            results[i] = run_replication(cfg, t.T, t.dt, t.rep);
            if (log) {
                std::ostringstream msg;
                msg << "T=" << format_number(t.T) << " dt=" << format_number(t.dt) << " rep=" << t.rep << ":";
                for (const auto& r : results[i]) {
                    msg << " M" << r.order << "=" << (r.wasserstein ? format_number(*r.wasserstein) : "failed");
                }
                std::lock_guard lock(log_mutex);
                log(msg.str());
            }
        }
    };
    unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(tasks.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    ExperimentResult out;
    for (auto& r : results)
        for (auto& row : r) out.rows.push_back(row);
    out.summary = summarize(out.rows);
    return out;
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
    std::string out = "T,dt,M,rep,wasserstein,converged,wrapped_flag,wall_time_s\n";
    for (const auto& r : rows) {
        out += format_number(r.T) + "," + format_number(r.dt) + "," + std::to_string(r.order) + "," +
               std::to_string(r.rep) + "," + (r.wasserstein ? format_number(*r.wasserstein) : "") + "," +
               (r.converged ? "1" : "0") + "," + (r.wrapped ? "1" : "0") + "," +
               (r.wall_time_s ? format_number(*r.wall_time_s) : "") + "\n";
    }
    return out;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "T,dt,M,replications,converged,mean_wasserstein,sd_wasserstein,se_wasserstein\n";
    for (const auto& s : rows) {
        const bool any = s.converged > 0;
        out += format_number(s.T) + "," + format_number(s.dt) + "," + std::to_string(s.order) + "," +
               std::to_string(s.replications) + "," + std::to_string(s.converged) + "," +
               (any ? format_number(s.mean) : "") + "," + (any ? format_number(s.sd) : "") + "," +
               (any ? format_number(s.se) : "") + "\n";
    }
    return out;
}

}  // namespace mlfm
