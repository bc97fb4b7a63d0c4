#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

#include "rmdiff/sde.hpp"

using namespace rmdiff;
using Catch::Approx;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    RngStream rng(seed, 0, Purpose::Generic);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

Vector random_vector(int n, std::uint64_t seed, double scale = 1.0) {
    return random_matrix(n, 1, seed, scale).col(0);
}

Matrix const_sigma(int n, double s) {
    Matrix sigma = Matrix::Zero(n + 1, n);
    sigma.row(0).setConstant(s);
    return sigma;
}

// m' = D m + h by classical RK4 with step halving until two successive
// results agree to 1e-12.
Vector rk4_mean(const Matrix& d, const Vector& h, const Vector& x0, double t) {
    auto solve = [&](int steps) {
        Vector m = x0;
        const double dt = t / steps;
        auto f = [&](const Vector& y) -> Vector { return d * y + h; };
        for (int s = 0; s < steps; ++s) {
            Vector k1 = f(m), k2 = f(m + 0.5 * dt * k1), k3 = f(m + 0.5 * dt * k2), k4 = f(m + dt * k3);
            m += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        return m;
    };
    int steps = 16;
    Vector prev = solve(steps);
    for (int it = 0; it < 12; ++it) {
        steps *= 2;
        Vector next = solve(steps);
        if ((next - prev).cwiseAbs().maxCoeff() < 1e-12) return next;
        prev = next;
    }
    return prev;
}

} // namespace

TEST_CASE("drift") {
    SystemParams p = SystemParams::make(Matrix::Zero(3, 3), Matrix::Zero(3, 3), Vector::Ones(3), Matrix::Zero(4, 3));
    CHECK(drift(p, random_vector(3, 1)) == Vector::Ones(3));

    Matrix j = Matrix::Zero(2, 2);
    j(0, 1) = 1.0;
    SystemParams q = SystemParams::make(j, Matrix::Zero(2, 2), Vector::Zero(2), Matrix::Zero(3, 2));
    Vector x(2);
    x << 5, 0;
    Vector want(2);
    want << 0, 5;
    CHECK(drift(q, x) == want);

    const int n = 8;
    Matrix jj = random_matrix(n, n, 2, 0.3), lam = random_matrix(n, n, 3, 0.1);
    Vector h = random_vector(n, 4), xx = random_vector(n, 5);
    SystemParams r = SystemParams::make(jj, lam, h, const_sigma(n, 0.2));
    Vector got = drift(r, xx);
    for (int col = 0; col < n; ++col) {
        double acc = h(col);
        for (int i = 0; i < n; ++i) acc += jj(i, col) * xx(i) + lam(i, col) * xx(i);
        CHECK(got(col) == Approx(acc).margin(1e-12));
    }
    CHECK_THROWS_AS(drift(r, Vector::Zero(3)), InvalidArgument);
}

TEST_CASE("diffusion_row") {
    const int n = 3;
    SystemParams c = SystemParams::make(Matrix::Zero(n, n), Matrix::Zero(n, n), Vector::Zero(n),
                                        const_sigma(n, 1.0 / std::sqrt(2.0)));
    Vector d = diffusion_row(c, random_vector(n, 9));
    for (int i = 0; i < n; ++i) CHECK(d(i) == Approx(1.0).epsilon(1e-15));
    CHECK(c.constant_diffusion());

    SystemParams z = SystemParams::zero(n);
    CHECK(diffusion_row(z, random_vector(n, 10)) == Vector::Zero(n));
    CHECK(z.zero_diffusion());

    Matrix sigma = Matrix::Zero(3, 2);
    sigma(1, 0) = sigma(2, 1) = 1.0 / std::sqrt(2.0);
    SystemParams g = SystemParams::make(Matrix::Zero(2, 2), Matrix::Zero(2, 2), Vector::Zero(2), sigma);
    Vector x(2);
    x << 2, 3;
    Vector out = diffusion_row(g, x);
    CHECK(out(0) == Approx(2.0));
    CHECK(out(1) == Approx(3.0));
    CHECK_FALSE(g.constant_diffusion());
}

TEST_CASE("system parameter constants and declared bounds") {
    const int n = 4;
    Matrix lam = Matrix::Zero(n, n);
    lam(0, 0) = -1.0;
    lam(0, 1) = 0.5;
    lam(2, 3) = 2.0;
    Matrix sigma = Matrix::Zero(n + 1, n);
    sigma(0, 0) = 0.7;
    sigma(1, 0) = 0.1;
    sigma(3, 0) = -0.2;
    Vector h = Vector::Zero(n);
    h(2) = -1.5;
    SystemParams p = SystemParams::make(Matrix::Zero(n, n), lam, h, sigma);
    CHECK(p.n_lambda() == 1);
    CHECK(p.c_lambda() == Approx(2.0));
    CHECK(p.c_h() == Approx(1.5));
    CHECK(p.n_sigma() == 2);
    CHECK(p.n_sigma_with_constant() == 3);
    CHECK(p.c_sigma() == Approx(0.7));
    CHECK_FALSE(p.constant_diffusion());
    CHECK(p.lambda_column(1).size() == 1);
    CHECK(p.sigma_column(0).size() == 3);

    DeclaredBounds tight;
    tight.c_lambda = 1.0;
    CHECK_THROWS_AS(SystemParams::make(Matrix::Zero(n, n), lam, h, sigma, 1.0, tight), InvalidArgument);
    DeclaredBounds ok;
    ok.c_lambda = 2.0;
    ok.c_h = 1.5;
    ok.c_sigma = 1.0;
    CHECK_NOTHROW(SystemParams::make(Matrix::Zero(n, n), lam, h, sigma, 1.0, ok));
    CHECK_THROWS_AS(SystemParams::make(Matrix::Zero(n, n), lam, h, Matrix::Zero(n, n)), InvalidArgument);
}

TEST_CASE("integrator grid rounding") {
    auto cfg = IntegratorConfig::make(0.01, 1.0, {0.333, 0.5, 0.5, 1.0, 0.0});
    REQUIRE(cfg.grid_steps == std::vector<long>{0, 33, 50, 100});
    CHECK_THROWS_AS(IntegratorConfig::make(0.0, 1.0, {}), InvalidArgument);
    CHECK_THROWS_AS(IntegratorConfig::make(0.1, 1.0, {1.5}), InvalidArgument);
    SystemParams p = SystemParams::zero(2);
    RngStream rng(1, 1);
    Trajectory tr = simulate(p, Vector::Ones(2), cfg, rng);
    CHECK(tr.index_of(0.33) == 1);
    CHECK(tr.index_of(0.333) == 1);
    CHECK_THROWS_AS(tr.index_of(0.25), InvalidArgument);
}

TEST_CASE("simulate: noiseless runs are deterministic") {
    const int n = 6;
    SystemParams p = SystemParams::make(random_matrix(n, n, 21, 0.4), -Matrix::Identity(n, n), random_vector(n, 22),
                                        Matrix::Zero(n + 1, n));
    auto cfg = IntegratorConfig::uniform(1e-3, 1.0, 11);
    RngStream r1(1, 1), r2(2, 2);
    Vector x0 = random_vector(n, 23);
    Trajectory a = simulate(p, x0, cfg, r1), b = simulate(p, x0, cfg, r2);
    CHECK(a.x == b.x);
    CHECK(a.m == Matrix::Zero(n, a.grid_size()));
}

TEST_CASE("simulate: scalar decay ODE") {
    Matrix lam(1, 1);
    lam(0, 0) = -1.0;
    SystemParams p = SystemParams::make(Matrix::Zero(1, 1), lam, Vector::Zero(1), Matrix::Zero(2, 1));
    for (double dt : {1e-3, 5e-4}) {
        RngStream rng(1, 1);
        Trajectory tr = simulate(p, Vector::Ones(1), IntegratorConfig::make(dt, 1.0, {1.0}), rng);
        CHECK(std::abs(tr.x(0, 0) - std::exp(-1.0)) <= 5 * dt);
        // Euler on x' = -x is exactly (1 - dt)^n
        CHECK(tr.x(0, 0) == Approx(std::pow(1.0 - dt, std::lround(1.0 / dt))).epsilon(1e-12));
    }
}

TEST_CASE("simulate: decomposition identity and M(0) = 0") {
    const int n = 5;
    Matrix sigma = const_sigma(n, 0.4);
    for (int i = 1; i <= n; ++i) sigma(i, i - 1) = 0.3;
    sigma(2, 3) = -0.2;
    SystemParams p = SystemParams::make(random_matrix(n, n, 31, 0.3), -0.5 * Matrix::Identity(n, n),
                                        random_vector(n, 32), sigma);
    auto cfg = IntegratorConfig::make(1e-3, 1.0, {0.0, 0.001, 0.002, 0.5, 1.0});
    RngStream rng(3, 3, Purpose::Noise);
    Trajectory tr = simulate(p, random_vector(n, 33), cfg, rng);
    CHECK(tr.m.col(0) == Vector::Zero(n));
    CHECK(tr.x.col(0) == tr.x0);
    CHECK(tr.max_decomposition_residual <= 1e-10);
    // consecutive recorded steps: X1 - X0 - dt f(X0) - dM = 0
    Vector f = drift(p, tr.x.col(0));
    Vector resid = tr.x.col(1) - tr.x.col(0) - 1e-3 * f - (tr.m.col(1) - tr.m.col(0));
    CHECK(resid.cwiseAbs().maxCoeff() <= 1e-12);
    Vector f1 = drift(p, tr.x.col(1));
    Vector resid2 = tr.x.col(2) - tr.x.col(1) - 1e-3 * f1 - (tr.m.col(2) - tr.m.col(1));
    CHECK(resid2.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("simulate: non-finite state reports the step") {
    Matrix lam(1, 1);
    lam(0, 0) = 1e200;
    SystemParams p = SystemParams::make(Matrix::Zero(1, 1), lam, Vector::Zero(1), Matrix::Zero(2, 1));
    RngStream rng(1, 1);
    try {
        simulate(p, Vector::Ones(1), IntegratorConfig::make(0.1, 10.0, {10.0}), rng);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
}

TEST_CASE("exact_mean_linear") {
    const int n = 3;
    SystemParams p = SystemParams::make(random_matrix(n, n, 41, 0.5), random_matrix(n, n, 42, 0.2),
                                        random_vector(n, 43), const_sigma(n, 0.5));
    Vector x0 = random_vector(n, 44);
    CHECK((exact_mean_linear(p, x0, 0.0) - x0).cwiseAbs().maxCoeff() == 0.0);

    Vector c = Vector::Constant(n, 0.7);
    SystemParams q = SystemParams::make(Matrix::Zero(n, n), Matrix::Zero(n, n), c, const_sigma(n, 1.0));
    CHECK((exact_mean_linear(q, x0, 2.5) - (x0 + 2.5 * c)).cwiseAbs().maxCoeff() <= 1e-14);

    for (double t : {0.3, 1.0, 2.0}) {
        Matrix d = p.j().transpose() + p.lambda().transpose();
        Vector oracle = rk4_mean(d, p.h(), x0, t);
        CHECK((exact_mean_linear(p, x0, t) - oracle).cwiseAbs().maxCoeff() <= 1e-8);
    }

    Matrix sigma = const_sigma(n, 0.5);
    sigma(1, 0) = 0.1;
    SystemParams mult = SystemParams::make(Matrix::Zero(n, n), Matrix::Zero(n, n), Vector::Zero(n), sigma);
    CHECK_THROWS_AS(exact_mean_linear(mult, x0, 1.0), InvalidArgument);
}

TEST_CASE("simulate: N=8 path mean matches exact_mean_linear") {
    const int n = 8;
    SystemParams p = SystemParams::make(random_matrix(n, n, 51, 1.0 / std::sqrt(8.0)), -Matrix::Identity(n, n),
                                        random_vector(n, 52, 0.5), const_sigma(n, 1.0 / std::sqrt(2.0)));
    auto params = std::make_shared<const SystemParams>(p);
    Vector x0 = random_vector(n, 53);
    const double dt = 1e-3;
    auto cfg = IntegratorConfig::make(dt, 1.0, {1.0});
    const int paths = 10000;
    Vector sum = Vector::Zero(n), sumsq = Vector::Zero(n);
    for (int k = 0; k < paths; ++k) {
        RngStream rng(77, k, Purpose::Noise);
        Vector x = simulate(params, x0, cfg, rng).x.col(0);
        sum += x;
        sumsq += x.cwiseProduct(x);
    }
    Vector mean = sum / paths;
    Vector exact = exact_mean_linear(p, x0, 1.0);
    for (int i = 0; i < n; ++i) {
        double se = std::sqrt((sumsq(i) / paths - mean(i) * mean(i)) / (paths - 1));
        CHECK(std::abs(mean(i) - exact(i)) <= 3 * se + 10 * dt);
    }
}

TEST_CASE("simulate: first-order weak error on the scalar OU process") {
    Matrix lam(1, 1);
    lam(0, 0) = -1.0;
    Matrix sigma = const_sigma(1, 1.0 / std::sqrt(2.0));
    auto params = std::make_shared<const SystemParams>(
        SystemParams::make(Matrix::Zero(1, 1), lam, Vector::Zero(1), sigma));
    const double x0 = 2.0;
    std::vector<double> bias;
    for (double dt : {1e-2, 1e-3}) {
        const int paths = 20000;
        double s = 0, ss = 0;
        auto cfg = IntegratorConfig::make(dt, 1.0, {1.0});
        for (int k = 0; k < paths; ++k) {
            RngStream rng(5, k, Purpose::Noise);
            double x = simulate(params, Vector::Constant(1, x0), cfg, rng).x(0, 0);
            s += x;
            ss += x * x;
        }
        double mean = s / paths, se = std::sqrt((ss / paths - mean * mean) / (paths - 1));
        // Euler mean is (1 - dt)^{1/dt} x0 exactly; its gap to e^{-1} x0 is about x0 e^{-1} dt / 2
        double b = std::abs(std::pow(1.0 - dt, std::lround(1.0 / dt)) - std::exp(-1.0)) * x0;
        bias.push_back(b);
        CHECK(std::abs(mean - std::exp(-1.0) * x0) <= 3 * se + b);
        CHECK(b <= 0.5 * x0 * std::exp(-1.0) * dt * 1.05);
    }
    CHECK(bias[1] / bias[0] == Approx(0.1).margin(0.01));
}

TEST_CASE("langevin_params") {
    Matrix a(2, 2);
    a << 0, 1.5, 1.5, 0;
    auto c = CouplingMatrix::from_a(a, true);
    SystemParams flow = langevin_params(c, kInfiniteBeta, 0.0);
    CHECK(flow.zero_diffusion());
    CHECK(flow.constant_diffusion());
    SystemParams l = langevin_params(c, 1.0, 0.0);
    Matrix dmat = l.coupling_gain() * l.j().transpose() + l.lambda().transpose();
    Matrix want(2, 2);
    want << 0, 2 * c.j(0, 1), 2 * c.j(0, 1), 0;
    CHECK((dmat - want).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(l.sigma()(0, 0) == Approx(1.0 / std::sqrt(2.0)));
    SystemParams hot = langevin_params(c, 4.0, 0.0);
    CHECK(diffusion_row(hot, Vector::Zero(2))(0) == Approx(0.5));

    Matrix asym(2, 2);
    asym << 0, 1, 0, 0;
    CHECK_THROWS_AS(langevin_params(CouplingMatrix::from_a(asym, false), 1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(langevin_params(c, 0.0, 0.0), InvalidArgument);

    // confinement above ||2J|| makes the mean decay
    const int n = 30;
    RngStream rng(9, 0, Purpose::Coupling);
    auto big = sample_matrix(EntryDistribution{}, VarianceProfile::off_diagonal(n), true, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> es(big.j);
    double norm2j = 2.0 * es.eigenvalues().cwiseAbs().maxCoeff();
    SystemParams conf = langevin_params(big, 2.0, norm2j + 0.5);
    Vector x0 = Vector::Ones(n);
    for (double t : {1.0, 2.0, 4.0, 8.0})
        CHECK(exact_mean_linear(conf, x0, t).norm() <= x0.norm() * std::exp(-0.5 * t) * (1 + 1e-9));
}

TEST_CASE("trajectory CSV export") {
    SystemParams p = SystemParams::zero(2);
    RngStream rng(1, 1);
    Trajectory tr = simulate(p, Vector::Constant(2, 1.5), IntegratorConfig::make(0.5, 1.0, {0.0, 1.0}), rng);
    std::ostringstream os;
    write_trajectory_csv(os, tr, "abc");
    CHECK(os.str() == "# config-hash: abc\ntime,coord,X,M\n0,1,1.5,0\n0,2,1.5,0\n1,1,1.5,0\n1,2,1.5,0\n");
}
