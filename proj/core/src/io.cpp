#include "mlfm/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mlfm/experiment.hpp"

namespace mlfm {

using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::invalid_argument("trajectory csv: cannot parse number '" + s + "'");
    }
    return v;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json dist_to_json(const GaussianDist& d) { return {{"mean", vector_to_json(d.mean)}, {"cov", matrix_to_json(d.cov)}}; }

}  // namespace

std::string trajectory_to_csv(const KuboTrajectory& traj) {
    const bool with_nodes = traj.node_times.size() > 0;
    const Vector& nodes = with_nodes ? traj.node_times : traj.times;
    std::string out = "t,observed,x,y,g_true,G_true\n";
    Index obs = 0;
    for (Index p = 0; p < nodes.size(); ++p) {
        const bool observed = obs < traj.times.size() && nodes(p) == traj.times(obs);
        out += format_number(nodes(p)) + "," + (observed ? "1" : "0") + ",";
        if (observed) {
            const auto& s = traj.states[static_cast<std::size_t>(obs)];
            out += format_number(s(0)) + "," + format_number(s(1)) + ",";
        } else {
            out += ",,";
        }
        if (traj.true_g.size() == nodes.size()) out += format_number(traj.true_g(p));
        out += ",";
        if (observed && obs > 0 && traj.true_G.size() == traj.times.size() - 1) {
            out += format_number(traj.true_G(obs - 1));
        }
        out += "\n";
        if (observed) ++obs;
    }
    return out;
}

KuboTrajectory trajectory_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split(line, ',') != std::vector<std::string>{"t", "observed", "x", "y", "g_true", "G_true"}) {
        throw std::invalid_argument("trajectory csv: expected header t,observed,x,y,g_true,G_true");
    }
    std::vector<double> nodes, times, g, big_g;
    KuboTrajectory traj;
    bool all_g = true;
    bool all_big_g = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split(line, ',');
        if (f.size() != 6) throw std::invalid_argument("trajectory csv: expected 6 fields in '" + line + "'");
        const double t = parse_double(f[0]);
        nodes.push_back(t);
        if (f[4].empty()) all_g = false; else g.push_back(parse_double(f[4]));
        if (f[1] == "1") {
            times.push_back(t);
            traj.states.emplace_back(parse_double(f[2]), parse_double(f[3]));
            if (times.size() > 1) {
                if (f[5].empty()) all_big_g = false; else big_g.push_back(parse_double(f[5]));
            }
        } else if (f[1] != "0") {
            throw std::invalid_argument("trajectory csv: observed must be 0 or 1");
        }
    }
    if (times.size() < 2) throw std::invalid_argument("trajectory csv: need at least two observed rows");
    traj.times = Eigen::Map<Vector>(times.data(), static_cast<Index>(times.size()));
    traj.node_times = Eigen::Map<Vector>(nodes.data(), static_cast<Index>(nodes.size()));
    if (all_g) traj.true_g = Eigen::Map<Vector>(g.data(), static_cast<Index>(g.size()));
    if (all_big_g) traj.true_G = Eigen::Map<Vector>(big_g.data(), static_cast<Index>(big_g.size()));
    return traj;
}

std::string distribution_to_json(const GaussianDist& dist) { return dist_to_json(dist).dump(2) + "\n"; }

GaussianDist distribution_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        auto mean = j.at("mean").get<std::vector<double>>();
        auto cov = j.at("cov").get<std::vector<std::vector<double>>>();
        const Index d = static_cast<Index>(mean.size());
        if (static_cast<Index>(cov.size()) != d) throw std::invalid_argument("distribution json: cov has wrong row count");
        Matrix c(d, d);
        for (Index i = 0; i < d; ++i) {
            if (static_cast<Index>(cov[static_cast<std::size_t>(i)].size()) != d) {
                throw std::invalid_argument("distribution json: cov is not square");
            }
            for (Index k = 0; k < d; ++k) c(i, k) = cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        }
        return GaussianDist(Eigen::Map<Vector>(mean.data(), d), std::move(c));
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("distribution json: ") + e.what());
    }
}

std::string laplace_to_json(const LaplaceResult& result, const GaussianDist& obs_marginal,
                            const std::vector<RbfKernel>& sigma0_kernels, int order) {
    json j = dist_to_json(obs_marginal);
    j["order"] = order;
    j["full_posterior"] = dist_to_json(result.posterior);
    j["map_g"] = vector_to_json(result.map_g.flattened());
    json phi = json::array();
    for (const auto& k : sigma0_kernels) phi.push_back({k.variance, k.lengthscale});
    j["sigma0_phi"] = phi;
    j["diagnostics"] = {{"iterations", result.diagnostics.iterations},
                        {"converged", result.diagnostics.converged},
                        {"grad_norm", result.diagnostics.grad_norm},
                        {"stop_reason", result.diagnostics.stop_reason},
                        {"log_posterior_at_map", result.log_posterior_at_map}};
    return j.dump(2) + "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace mlfm
