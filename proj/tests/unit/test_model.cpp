#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mlfm/kubo.hpp"
#include "mlfm/model.hpp"
#include "oracles.hpp"

using namespace mlfm;

namespace {

Vector uniform_times(double T, double dt) {
    const int n = static_cast<int>(std::lround(T / dt));
    Vector t(n + 1);
    for (int i = 0; i <= n; ++i) t(i) = i * dt;
    return t;
}

PicardConfig kubo_config(int order, double gamma = 1e-4) {
    PicardConfig c;
    c.order = order;
    c.gamma_scale = gamma;
    c.sigma0_kernels = {RbfKernel(1.0, 1.0), RbfKernel(1.0, 1.0)};
    return c;
}

// g(t) = a + b sin(w t) and its exact antiderivative from 0.
struct SmoothForce {
    double a, b, w;
    double at(double t) const { return a + b * std::sin(w * t); }
    double angle(double t) const { return a * t + b * (1.0 - std::cos(w * t)) / w; }
};

ForceRealisation sample_force(const SmoothForce& f, const TimeGrid& grid) {
    Matrix v(1, grid.size());
    for (Index p = 0; p < grid.size(); ++p) v(0, p) = f.at(grid.nodes()(p));
    return ForceRealisation(v);
}

Vector exact_path(const SmoothForce& f, const TimeGrid& grid) {
    const Index n = grid.size();
    Vector x(2 * n);
    for (Index p = 0; p < n; ++p) {
        const double th = f.angle(grid.nodes()(p));
        x(p) = std::cos(th);
        x(n + p) = std::sin(th);
    }
    return x;
}

Matrix random_forces(Index r, Index n, std::mt19937_64& rng, double scale) {
    Matrix v(r, n);
    for (Index i = 0; i < r; ++i) v.row(i) = oracle::random_vec(n, rng, scale).transpose();
    return v;
}

double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

}  // namespace

TEST_CASE("coefficient_at") {
    const StructureBasis kubo = kubo_structure_basis();
    Vector c(1);
    c << 0.7;
    Matrix expect(2, 2);
    expect << 0, -0.7, 0.7, 0;
    CHECK(coefficient_at(kubo, c).isApprox(expect));
    CHECK(coefficient_at(kubo, Vector::Zero(1)).isZero());

    std::mt19937_64 rng(3);
    const StructureBasis b(oracle::random_psd(3, rng), {oracle::random_psd(3, rng), oracle::random_psd(3, rng)});
    CHECK(coefficient_at(b, Vector::Zero(2)).isApprox(b.a0));
    const Vector g1 = oracle::random_vec(2, rng), g2 = oracle::random_vec(2, rng);
    CHECK(coefficient_at(b, g1 + g2).isApprox(coefficient_at(b, g1) + coefficient_at(b, g2) - b.a0, 1e-12));
    CHECK_THROWS_AS(coefficient_at(b, Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("StructureBasis and ForceRealisation validation") {
    CHECK_THROWS_AS(StructureBasis(Matrix::Zero(2, 2), {}), std::invalid_argument);
    CHECK_THROWS_AS(StructureBasis(Matrix::Zero(2, 2), {Matrix::Zero(3, 3)}), std::invalid_argument);
    CHECK_THROWS_AS(StructureBasis(Matrix::Zero(2, 3), {Matrix::Zero(2, 3)}), std::invalid_argument);

    Matrix v(2, 3);
    v << 1, 2, 3, 4, 5, 6;
    const ForceRealisation f(v);
    const Vector flat = f.flattened();
    CHECK(flat(0) == 1);
    CHECK(flat(3) == 4);
    CHECK(ForceRealisation::from_flat(flat, 2, 3).values == v);
}

TEST_CASE("picard_operator with zero force is the initial-state selector") {
    const TimeGrid grid = build_grid(uniform_times(2.0, 0.5));
    const QuadratureRule rule = build_rule(grid);
    const Matrix op = picard_operator(kubo_structure_basis(), grid, rule, ForceRealisation::zeros(1, grid.size()));
    std::mt19937_64 rng(4);
    const Vector x = oracle::random_vec(op.rows(), rng);
    const Vector y = picard_iterate(op, x);
    const Index n = grid.size();
    for (Index p = 0; p < n; ++p) {
        CHECK(y(p) == x(0));
        CHECK(y(n + p) == x(n));
    }
}

TEST_CASE("picard_operator matches direct summation for constant force") {
    const TimeGrid grid = build_grid(uniform_times(1.0, 1.0));
    const QuadratureRule rule = build_rule(grid);
    const double c = 0.8;
    Matrix v = Matrix::Constant(1, 3, c);
    const Matrix op = picard_operator(kubo_structure_basis(), grid, rule, ForceRealisation(v));
    // hand-assembled row block for node t_1 (index 2): x(t_0) + c J sum_q w_q x_q
    const double w[3] = {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};
    Matrix expect = Matrix::Zero(2, 6);
    expect(0, 0) = 1.0;
    expect(1, 3) = 1.0;
    for (int q = 0; q < 3; ++q) {
        expect(0, 3 + q) += -c * w[q];
        expect(1, q) += c * w[q];
    }
    Matrix got(2, 6);
    got.row(0) = op.row(2);
    got.row(1) = op.row(5);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("picard_operator is affine in the forces") {
    std::mt19937_64 rng(5);
    const TimeGrid grid = build_grid(uniform_times(1.5, 0.5));
    const QuadratureRule rule = build_rule(grid);
    const StructureBasis b(oracle::random_psd(3, rng), {oracle::random_psd(3, rng), oracle::random_psd(3, rng)});
    const ForceRealisation g1(random_forces(2, grid.size(), rng, 1.0));
    const ForceRealisation g2(random_forces(2, grid.size(), rng, 1.0));
    const ForceRealisation sum(g1.values + g2.values);
    const Matrix lhs = picard_operator(b, grid, rule, sum) +
                       picard_operator(b, grid, rule, ForceRealisation::zeros(2, grid.size()));
    const Matrix rhs = picard_operator(b, grid, rule, g1) + picard_operator(b, grid, rule, g2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);

    CHECK_THROWS_AS(picard_operator(b, grid, rule, ForceRealisation::zeros(1, grid.size())), std::invalid_argument);
    CHECK_THROWS_AS(picard_operator(b, grid, rule, ForceRealisation::zeros(2, 4)), std::invalid_argument);
}

TEST_CASE("exact Kubo path is a near fixed point and iteration converges to it") {
    const SmoothForce f{0.4, 0.5, 1.3};
    const TimeGrid grid = build_grid(uniform_times(3.0, 0.5));
    const QuadratureRule rule = build_rule(grid);
    const Matrix op = picard_operator(kubo_structure_basis(), grid, rule, sample_force(f, grid));
    const Vector exact = exact_path(f, grid);
    const Index n = grid.size();

    const Vector residual = picard_iterate(op, exact) - exact;
    for (Index p : grid.obs_nodes()) {
        CHECK(std::abs(residual(p)) < 1e-3);
        CHECK(std::abs(residual(n + p)) < 1e-3);
    }

    Vector x(2 * n);
    x.head(n).setConstant(1.0);
    x.tail(n).setZero();
    for (int i = 0; i < 15; ++i) x = picard_iterate(op, x);
    Vector fixed = x;
    for (int i = 0; i < 100; ++i) fixed = picard_iterate(op, fixed);
    CHECK((x - fixed).cwiseAbs().maxCoeff() < 1e-8);

    // the discrete fixed point differs from the exact path by the discretization
    // error, which the second-order midpoint rows dominate
    double worst = 0.0;
    for (Index p : grid.obs_nodes()) {
        worst = std::max(worst, std::hypot(x(p) - exact(p), x(n + p) - exact(n + p)));
    }
    CHECK(worst < 5e-3);
}

TEST_CASE("fixed-point residual at observation nodes is fourth order") {
    const SmoothForce f{0.3, 0.8, 1.1};
    double res[2];
    const double steps[2] = {0.5, 0.25};
    for (int s = 0; s < 2; ++s) {
        const TimeGrid grid = build_grid(uniform_times(3.0, steps[s]));
        const Matrix op =
            picard_operator(kubo_structure_basis(), grid, build_rule(grid), sample_force(f, grid));
        const Vector exact = exact_path(f, grid);
        const Vector r = picard_iterate(op, exact) - exact;
        const Index n = grid.size();
        double worst = 0.0;
        for (Index p : grid.obs_nodes()) worst = std::max({worst, std::abs(r(p)), std::abs(r(n + p))});
        res[s] = worst;
    }
    const double order = std::log2(res[0] / res[1]);
    CHECK(order > 3.0);
    CHECK(order < 5.0);
}

TEST_CASE("sa_covariance recursion") {
    std::mt19937_64 rng(6);
    const Index d = 6;
    const Matrix op = oracle::random_psd(d, rng) - Matrix::Identity(d, d) * 0.3;
    const Matrix s0 = oracle::random_psd(d, rng);
    PicardConfig cfg = kubo_config(3, 0.01);
    CHECK(sa_covariance(op, cfg, s0, 0) == s0);
    const Matrix one = sa_covariance(op, cfg, s0, 1);
    CHECK(one.isApprox(op * s0 * op.transpose() + 0.01 * Matrix::Identity(d, d), 1e-13));
    Matrix manual = s0;
    for (int m = 0; m < 3; ++m) manual = op * manual * op.transpose() + 0.01 * Matrix::Identity(d, d);
    CHECK(sa_covariance(op, cfg, s0).isApprox(manual, 1e-12));
    CHECK(sa_covariance(op, cfg, s0) == sa_covariance(op, cfg, s0).transpose());
}

TEST_CASE("Sigma_M entries are polynomials of degree 2M in each force value") {
    std::mt19937_64 rng(7);
    const TimeGrid grid = build_grid(uniform_times(1.0, 0.5));
    const QuadratureRule rule = build_rule(grid);
    const StructureBasis basis = kubo_structure_basis();
    for (int order : {1, 2, 3}) {
        const PicardConfig cfg = kubo_config(order);
        const Matrix s0 = build_sigma0(cfg, grid);
        const Matrix base = random_forces(1, grid.size(), rng, 0.5);
        const Index coord = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(grid.size() - 1));
        const int n = 2 * order + 1;
        const double h = 0.25;
        Matrix diff = Matrix::Zero(s0.rows(), s0.cols());
        double scale = 0.0;
        for (int j = 0; j <= n; ++j) {
            Matrix v = base;
            v(0, coord) += j * h;
            const Matrix s = sa_covariance(picard_operator(basis, grid, rule, ForceRealisation(v)), cfg, s0);
            diff += ((n - j) % 2 == 0 ? 1.0 : -1.0) * binomial(n, j) * s;
            scale = std::max(scale, s.cwiseAbs().maxCoeff());
        }
        CHECK(diff.cwiseAbs().maxCoeff() / scale < 1e-6);

        // one order lower does not vanish in general
        Matrix lower = Matrix::Zero(s0.rows(), s0.cols());
        for (int j = 0; j < n; ++j) {
            Matrix v = base;
            v(0, coord) += j * h;
            lower += ((n - 1 - j) % 2 == 0 ? 1.0 : -1.0) * binomial(n - 1, j) *
                     sa_covariance(picard_operator(basis, grid, rule, ForceRealisation(v)), cfg, s0);
        }
        CHECK(lower.cwiseAbs().maxCoeff() / scale > 1e-8);
    }
}

TEST_CASE("Sigma_M is symmetric PSD on random instances") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const TimeGrid grid = build_grid(uniform_times(1.0 + trial % 3, 0.5 + 0.25 * (trial % 2)));
        const PicardConfig cfg = kubo_config(1 + trial % 6, trial % 4 == 0 ? 0.0 : 1e-4);
        const Matrix op = picard_operator(kubo_structure_basis(), grid, build_rule(grid),
                                          ForceRealisation(random_forces(1, grid.size(), rng, 1.5)));
        const Matrix s = sa_covariance(op, cfg, build_sigma0(cfg, grid));
        CHECK(s == s.transpose());
        const Eigen::SelfAdjointEigenSolver<Matrix> es(s);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
    }
}

TEST_CASE("successive covariance increments decay without regularization") {
    // forces drawn from the smooth prior; increments alternate in size, so the
    // halving is checked over two steps
    const TimeGrid grid = build_grid(uniform_times(1.0, 0.25));
    const PicardConfig cfg = kubo_config(1, 0.0);
    const Matrix s0 = build_sigma0(cfg, grid);
    for (int trial = 0; trial < 5; ++trial) {
        Rng rng(static_cast<std::uint64_t>(100 + trial));
        const KuboTrajectory tr = simulate_exact(RbfKernel(1.0, 1.0), grid, Eigen::Vector2d(1.0, 0.0), rng);
        const Matrix op = picard_operator(kubo_structure_basis(), grid, build_rule(grid),
                                          ForceRealisation(Matrix(tr.true_g.transpose())));
        std::vector<double> inc;
        for (int m = 0; m < 14; ++m) {
            inc.push_back(std::abs(
                (sa_covariance(op, cfg, s0, m + 1) - sa_covariance(op, cfg, s0, m)).trace()));
        }
        for (std::size_t m = 5; m + 2 < inc.size(); ++m) {
            if (inc[m] < 1e-13) continue;
            CHECK(inc[m + 2] <= 0.5 * inc[m]);
        }
        CHECK(inc.back() < 1e-3 * inc.front());
    }
}

TEST_CASE("build_sigma0 is block diagonal") {
    const TimeGrid grid = build_grid(uniform_times(2.0, 1.0));
    PicardConfig cfg = kubo_config(2);
    cfg.sigma0_kernels = {RbfKernel(2.0, 0.5), RbfKernel(0.3, 1.7)};
    const Matrix s = build_sigma0(cfg, grid);
    const Index n = grid.size();
    CHECK(s.topLeftCorner(n, n).isApprox(gram(cfg.sigma0_kernels[0], grid.nodes())));
    CHECK(s.bottomRightCorner(n, n).isApprox(gram(cfg.sigma0_kernels[1], grid.nodes())));
    CHECK(s.topRightCorner(n, n).isZero());
    CHECK(s.bottomLeftCorner(n, n).isZero());

    PicardConfig one = cfg;
    one.sigma0_kernels = {RbfKernel(2.0, 0.5)};
    CHECK(build_sigma0(one, grid) == gram(one.sigma0_kernels[0], grid.nodes()));
}

TEST_CASE("PicardConfig validation") {
    PicardConfig c = kubo_config(0);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = kubo_config(2, -1.0);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_NOTHROW(kubo_config(2).validate());
}

TEST_CASE("identity Sigma_M gives the standard normal density at zero") {
    const Index d = 10;
    const Matrix op = Matrix::Zero(d, d);
    const PicardConfig cfg = kubo_config(1, 1.0);
    const Matrix sigma = sa_covariance(op, cfg, 3.0 * Matrix::Identity(d, d));
    CHECK(sigma.isApprox(Matrix::Identity(d, d)));
    CHECK(log_density(Vector::Zero(d), GaussianDist(Vector::Zero(d), sigma)) ==
          doctest::Approx(-0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi)).epsilon(1e-9));
}

TEST_CASE("marginal_loglik matches a dense evaluation on a three-node Kubo instance") {
    const TimeGrid grid = build_grid(uniform_times(1.0, 1.0));
    const QuadratureRule rule = build_rule(grid);
    const PicardConfig cfg = kubo_config(3, 1e-3);
    Matrix v(1, 3);
    v << 0.4, -0.2, 0.9;
    Vector x(6);
    x << 1.0, 0.9, 0.8, 0.0, 0.1, 0.05;

    // operator from the quadrature formula, assembled entry by entry
    const double w[3][3] = {{0, 0, 0}, {0.25, 0.25, 0}, {1.0 / 6, 4.0 / 6, 1.0 / 6}};
    Matrix op = Matrix::Zero(6, 6);
    for (int p = 0; p < 3; ++p) {
        op(p, 0) = 1.0;
        op(3 + p, 3) = 1.0;
        for (int q = 0; q < 3; ++q) {
            op(p, 3 + q) -= w[p][q] * v(0, q);
            op(3 + p, q) += w[p][q] * v(0, q);
        }
    }
    Matrix s = Matrix::Zero(6, 6);
    const double nodes[3] = {0.0, 0.5, 1.0};
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                s(3 * k + i, 3 * k + j) = std::exp(-0.5 * (nodes[i] - nodes[j]) * (nodes[i] - nodes[j]));
    for (int m = 0; m < 3; ++m) s = op * s * op.transpose() + 1e-3 * Matrix::Identity(6, 6);

    // the factorization always carries the relative jitter, which is visible
    // at this Gamma, so the oracle applies the same shift
    s.diagonal().array() += 1e-10 * s.trace() / 6.0;
    const double expect = oracle::dense_log_density(x, Vector::Zero(6), s);
    CHECK(marginal_loglik(x, ForceRealisation(v), kubo_structure_basis(), grid, rule, cfg) ==
          doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("marginal_loglik is invariant to relabelling the state") {
    std::mt19937_64 rng(10);
    const TimeGrid grid = build_grid(uniform_times(1.5, 0.5));
    const QuadratureRule rule = build_rule(grid);
    const PicardConfig cfg = kubo_config(3);
    const ForceRealisation g(random_forces(1, grid.size(), rng, 0.7));
    const Vector x = oracle::random_vec(2 * grid.size(), rng, 0.5);
    const Matrix sigma =
        sa_covariance(picard_operator(kubo_structure_basis(), grid, rule, g), cfg, build_sigma0(cfg, grid));
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(x.size());
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + x.size(), rng);
    const GaussianDist permuted(Vector::Zero(x.size()), perm * sigma * perm.transpose());
    CHECK(log_density(perm * x, permuted) ==
          doctest::Approx(marginal_loglik(x, g, kubo_structure_basis(), grid, rule, cfg)).epsilon(1e-10));
}

TEST_CASE("loglik_gradient matches central finite differences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 8; ++trial) {
        const TimeGrid grid = build_grid(uniform_times(1.0 + trial % 3, 0.5 + 0.5 * (trial % 2)));
        const QuadratureRule rule = build_rule(grid);
        PicardConfig cfg = kubo_config(1 + trial % 5, 1e-2);
        cfg.sigma0_kernels = {RbfKernel(oracle::uniform(rng, 0.5, 2), oracle::uniform(rng, 0.5, 2)),
                              RbfKernel(oracle::uniform(rng, 0.5, 2), oracle::uniform(rng, 0.5, 2))};
        const MlfmModel model = make_model(kubo_structure_basis(), grid, cfg,
                                           trial % 2 ? ObservedStates::ObservationNodes : ObservedStates::AllNodes);
        const Matrix v = random_forces(1, grid.size(), rng, 0.5);
        const Vector x = oracle::random_vec(model.data_size(), rng, 0.7);
        const LikelihoodTerms t = evaluate_likelihood(model, x, ForceRealisation(v), true);
        const double h = 1e-5;
        for (Index p = 0; p < grid.size(); ++p) {
            Matrix up = v, dn = v;
            up(0, p) += h;
            dn(0, p) -= h;
            const double fd = (marginal_loglik(x, ForceRealisation(up), model) -
                               marginal_loglik(x, ForceRealisation(dn), model)) / (2 * h);
            CHECK(std::abs(t.grad_g(0, p) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
        // kernel hyperparameters, in log space
        for (Index j = 0; j < 4; ++j) {
            auto eval = [&](double delta) {
                MlfmModel m = model;
                RbfKernel& k = m.config.sigma0_kernels[static_cast<std::size_t>(j / 2)];
                if (j % 2 == 0) k.variance *= std::exp(delta);
                else k.lengthscale *= std::exp(delta);
                return marginal_loglik(x, ForceRealisation(v), m);
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            CHECK(std::abs(t.grad_log_sigma0(j) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
        CHECK(t.value == doctest::Approx(marginal_loglik(x, ForceRealisation(v), model)).epsilon(1e-12));
    }
}

TEST_CASE("loglik_gradient vanishes for a force-free basis") {
    std::mt19937_64 rng(12);
    const TimeGrid grid = build_grid(uniform_times(2.0, 0.5));
    Matrix a0(2, 2);
    a0 << -0.1, 0.3, -0.2, 0.05;
    const StructureBasis basis(a0, {Matrix::Zero(2, 2), Matrix::Zero(2, 2)});
    const Vector x = oracle::random_vec(2 * grid.size(), rng);
    const Matrix grad = loglik_gradient(x, ForceRealisation(random_forces(2, grid.size(), rng, 1.0)), basis, grid,
                                        build_rule(grid), kubo_config(4));
    CHECK(grad.rows() == 2);
    CHECK(grad.cols() == grid.size());
    CHECK(grad.isZero());
}

TEST_CASE("marginal_loglik rejects mismatched data") {
    const TimeGrid grid = build_grid(uniform_times(1.0, 0.5));
    CHECK_THROWS_AS(marginal_loglik(Vector::Zero(3), ForceRealisation::zeros(1, grid.size()), kubo_structure_basis(),
                                    grid, build_rule(grid), kubo_config(2)),
                    std::invalid_argument);
}
