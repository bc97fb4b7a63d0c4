#pragma once

// Linear-drift, affine-diffusion stochastic systems:
//   dX_j = (g * sum_i J_ij X_i + sum_i Lambda_ij X_i + h_j) dt
//          + sqrt(2) (sigma_0j + sum_{i>=1} sigma_ij X_i) dB_j
// with Euler-Maruyama integration and exact martingale bookkeeping.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "rmdiff/ensembles.hpp"
#include "rmdiff/error.hpp"
#include "rmdiff/io.hpp"
#include "rmdiff/linalg.hpp"
#include "rmdiff/rng.hpp"

namespace rmdiff {

/// Optional user-declared constants; construction fails if the data exceed them.
struct DeclaredBounds {
    double c_lambda = std::numeric_limits<double>::infinity();
    double c_h = std::numeric_limits<double>::infinity();
    double c_sigma = std::numeric_limits<double>::infinity();
};

struct SparseEntry {
    int row;
    double value;
};

/// Parameters of one system. Row 0 of `sigma` holds the constant diffusion
/// coefficients (the x_0 = 1 convention); rows 1..N multiply X_1..X_N.
class SystemParams {
public:
    static SystemParams make(Matrix j, Matrix lambda, Vector h, Matrix sigma,
                             double coupling_gain = 1.0, const DeclaredBounds& declared = {}) {
        const auto n = j.rows();
        if (j.cols() != n) throw InvalidArgument("J must be square");
        if (lambda.rows() != n || lambda.cols() != n) throw InvalidArgument("Lambda must be N x N");
        if (h.size() != n) throw InvalidArgument("h must have N entries");
        if (sigma.rows() != n + 1 || sigma.cols() != n)
            throw InvalidArgument("sigma must be (N+1) x N");
        if (!j.allFinite() || !lambda.allFinite() || !h.allFinite() || !sigma.allFinite())
            throw InvalidArgument("system parameters must be finite");
        SystemParams p;
        p.n_ = static_cast<int>(n);
        p.j_ = std::move(j);
        p.lambda_ = std::move(lambda);
        p.h_ = std::move(h);
        p.sigma_ = std::move(sigma);
        p.gain_ = coupling_gain;
        p.derive();
        if (p.c_lambda_ > declared.c_lambda * (1 + 1e-12))
            throw InvalidArgument("Lambda exceeds declared bound C_Lambda");
        if (p.c_h_ > declared.c_h * (1 + 1e-12)) throw InvalidArgument("h exceeds declared bound C_h");
        if (p.c_sigma_ > declared.c_sigma * (1 + 1e-12))
            throw InvalidArgument("sigma exceeds declared bound C_sigma");
        return p;
    }

    /// J, Lambda, h all zero, sigma given.
    static SystemParams zero(int n) {
        return make(Matrix::Zero(n, n), Matrix::Zero(n, n), Vector::Zero(n), Matrix::Zero(n + 1, n));
    }

    int n() const { return n_; }
    const Matrix& j() const { return j_; }
    double coupling_gain() const { return gain_; }
    const Matrix& lambda() const { return lambda_; }
    const Vector& h() const { return h_; }
    const Matrix& sigma() const { return sigma_; }

    /// max_i ||Lambda_i.||_1 combined with N_Lambda * max |Lambda_ij|.
    double c_lambda() const { return c_lambda_; }
    /// max_j number of non-zero Lambda_ij over i.
    int n_lambda() const { return n_lambda_; }
    double c_h() const { return c_h_; }
    double c_sigma() const { return c_sigma_; }
    /// max_j number of non-zero sigma_ij over i = 1..N.
    int n_sigma() const { return n_sigma_; }
    /// max_j number of non-zero sigma_ij over i = 0..N.
    int n_sigma_with_constant() const { return n_sigma0_; }
    bool constant_diffusion() const { return constant_diffusion_; }
    bool zero_diffusion() const { return zero_diffusion_; }

    /// Non-zero Lambda_ij for fixed column j.
    const std::vector<SparseEntry>& lambda_column(int j) const { return lambda_cols_[j]; }
    /// Non-zero sigma_ij (i in 0..N) for fixed column j.
    const std::vector<SparseEntry>& sigma_column(int j) const { return sigma_cols_[j]; }

    SystemParams with_coupling(Matrix j) const {
        SystemParams p = *this;
        if (j.rows() != n_ || j.cols() != n_) throw InvalidArgument("J must be N x N");
        p.j_ = std::move(j);
        return p;
    }

private:
    void derive() {
        lambda_cols_.assign(n_, {});
        sigma_cols_.assign(n_, {});
        n_lambda_ = 0;
        n_sigma_ = 0;
        n_sigma0_ = 0;
        double row_sum = 0.0, lam_max = 0.0;
        for (int i = 0; i < n_; ++i) row_sum = std::max(row_sum, lambda_.row(i).cwiseAbs().sum());
        for (int col = 0; col < n_; ++col) {
            for (int i = 0; i < n_; ++i)
                if (lambda_(i, col) != 0.0) {
                    lambda_cols_[col].push_back({i, lambda_(i, col)});
                    lam_max = std::max(lam_max, std::abs(lambda_(i, col)));
                }
            n_lambda_ = std::max<int>(n_lambda_, static_cast<int>(lambda_cols_[col].size()));
            int nz = 0;
            for (int i = 0; i <= n_; ++i)
                if (sigma_(i, col) != 0.0) {
                    sigma_cols_[col].push_back({i, sigma_(i, col)});
                    if (i >= 1) ++nz;
                }
            n_sigma_ = std::max(n_sigma_, nz);
            n_sigma0_ = std::max<int>(n_sigma0_, static_cast<int>(sigma_cols_[col].size()));
        }
        c_lambda_ = std::max(row_sum, lam_max * n_lambda_);
        c_h_ = n_ ? h_.cwiseAbs().maxCoeff() : 0.0;
        double s0 = n_ ? sigma_.row(0).cwiseAbs().maxCoeff() : 0.0;
        double s1 = n_ ? sigma_.bottomRows(n_).cwiseAbs().maxCoeff() : 0.0;
        c_sigma_ = std::max(s0, s1 * n_sigma_);
        constant_diffusion_ = (s1 == 0.0);
        zero_diffusion_ = constant_diffusion_ && s0 == 0.0;
    }

    int n_ = 0;
    Matrix j_;
    double gain_ = 1.0;
    Matrix lambda_;
    Vector h_;
    Matrix sigma_;
    std::vector<std::vector<SparseEntry>> lambda_cols_;
    std::vector<std::vector<SparseEntry>> sigma_cols_;
    double c_lambda_ = 0.0, c_h_ = 0.0, c_sigma_ = 0.0;
    int n_lambda_ = 0, n_sigma_ = 0, n_sigma0_ = 0;
    bool constant_diffusion_ = true;
    bool zero_diffusion_ = true;
};

/// g J^T x + Lambda^T x + h.
inline Vector drift(const SystemParams& p, const Vector& x) {
    if (x.size() != p.n()) throw InvalidArgument("drift: dimension mismatch");
    Vector out(p.n());
    out.noalias() = p.j().transpose() * x;
    out *= p.coupling_gain();
    for (int col = 0; col < p.n(); ++col) {
        double acc = 0.0;
        for (const auto& e : p.lambda_column(col)) acc += e.value * x(e.row);
        out(col) += acc + p.h()(col);
    }
    return out;
}

/// Component j: sqrt(2) (sigma_0j + sum_{i>=1} sigma_ij x_i).
inline Vector diffusion_row(const SystemParams& p, const Vector& x) {
    if (x.size() != p.n()) throw InvalidArgument("diffusion_row: dimension mismatch");
    Vector out(p.n());
    for (int col = 0; col < p.n(); ++col) {
        double acc = 0.0;
        for (const auto& e : p.sigma_column(col)) acc += e.value * (e.row == 0 ? 1.0 : x(e.row - 1));
        out(col) = std::sqrt(2.0) * acc;
    }
    return out;
}

enum class Scheme { EulerMaruyama };

/// Fixed-step integration settings. Grid times are rounded to the step lattice.
struct IntegratorConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    Scheme scheme = Scheme::EulerMaruyama;
    std::vector<double> requested;  // grid as given
    std::vector<long> grid_steps;   // rounded, sorted, unique
    long total_steps = 0;

    static IntegratorConfig make(double dt, double horizon, std::vector<double> grid) {
        if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
        if (!(horizon >= 0.0)) throw InvalidArgument("horizon must be non-negative");
        IntegratorConfig c;
        c.dt = dt;
        c.horizon = horizon;
        c.total_steps = std::lround(horizon / dt);
        c.requested = grid;
        for (double t : grid) {
            if (t < 0.0 || t > horizon + 0.5 * dt) throw InvalidArgument("grid time outside [0, T]");
            c.grid_steps.push_back(std::lround(t / dt));
        }
        std::sort(c.grid_steps.begin(), c.grid_steps.end());
        c.grid_steps.erase(std::unique(c.grid_steps.begin(), c.grid_steps.end()), c.grid_steps.end());
        return c;
    }

    /// Uniform grid with `points` times 0, T/(points-1), ..., T.
    static IntegratorConfig uniform(double dt, double horizon, int points) {
        std::vector<double> g;
        for (int k = 0; k < points; ++k)
            g.push_back(points == 1 ? horizon : horizon * k / (points - 1));
        return make(dt, horizon, g);
    }

    double time_of(long step) const { return static_cast<double>(step) * dt; }
};

/// Snapshots of one realization on the integrator grid.
struct Trajectory {
    std::shared_ptr<const SystemParams> params;
    std::vector<long> steps;
    std::vector<double> times;
    double dt = 0.0;
    Matrix x;  // N x G, column k = X at times[k]
    Matrix m;  // N x G, martingale part, column for time 0 is 0
    Vector x0;
    double max_decomposition_residual = 0.0;

    int n() const { return static_cast<int>(x.rows()); }
    int grid_size() const { return static_cast<int>(times.size()); }

    /// Column index of grid time t; throws if t is not (within dt/2) on the grid.
    int index_of(double t) const {
        long s = std::lround(t / dt);
        auto it = std::lower_bound(steps.begin(), steps.end(), s);
        if (it == steps.end() || *it != s || std::abs(t - static_cast<double>(s) * dt) > 0.5 * dt)
            throw InvalidArgument("time " + format_double(t) + " is not on the trajectory grid");
        return static_cast<int>(it - steps.begin());
    }
};

/// Euler-Maruyama. Brownian increments are drawn per (step, coordinate) from `rng`
/// unless the diffusion is identically zero.
inline Trajectory simulate(std::shared_ptr<const SystemParams> params, const Vector& x0,
                           const IntegratorConfig& cfg, RngStream& rng) {
    const SystemParams& p = *params;
    const int n = p.n();
    if (x0.size() != n) throw InvalidArgument("simulate: x0 dimension mismatch");
    Trajectory tr;
    tr.params = params;
    tr.steps = cfg.grid_steps;
    tr.dt = cfg.dt;
    for (long s : tr.steps) tr.times.push_back(cfg.time_of(s));
    const int g = static_cast<int>(tr.steps.size());
    tr.x.resize(n, g);
    tr.m.resize(n, g);
    tr.x0 = x0;

    const double dt = cfg.dt;
    const double sqdt = std::sqrt(dt);
    const bool noisy = !p.zero_diffusion();
    const bool constant = p.constant_diffusion();
    Vector const_diff = constant ? diffusion_row(p, Vector::Zero(n)) : Vector();

    Vector x = x0, mart = Vector::Zero(n), f(n), dm(n), xi(n);
    int next = 0;
    auto record = [&](long step) {
        while (next < g && tr.steps[next] == step) {
            tr.x.col(next) = x;
            tr.m.col(next) = mart;
            ++next;
        }
    };
    record(0);
    const long last = g ? std::max(cfg.total_steps, tr.steps.back()) : cfg.total_steps;
    double worst = 0.0;
    for (long step = 1; step <= last && next < g; ++step) {
        f.noalias() = p.j().transpose() * x;
        f *= p.coupling_gain();
        for (int col = 0; col < n; ++col) {
            double acc = p.h()(col);
            for (const auto& e : p.lambda_column(col)) acc += e.value * x(e.row);
            f(col) += acc;
        }
        if (noisy) {
            for (int i = 0; i < n; ++i) xi(i) = rng.normal();
            if (constant)
                dm = const_diff.cwiseProduct(xi) * sqdt;
            else
                dm = diffusion_row(p, x).cwiseProduct(xi) * sqdt;
        } else {
            dm.setZero();
        }
        Vector xn = x + dt * f + dm;
        if (!xn.allFinite())
            throw NumericalError("simulate: non-finite state at step " + std::to_string(step));
        double scale = std::max({1.0, x.cwiseAbs().maxCoeff(), xn.cwiseAbs().maxCoeff()});
        worst = std::max(worst, (xn - x - dt * f - dm).cwiseAbs().maxCoeff() / scale);
        x = std::move(xn);
        mart += dm;
        record(step);
    }
    tr.max_decomposition_residual = worst;
    return tr;
}

inline Trajectory simulate(const SystemParams& params, const Vector& x0, const IntegratorConfig& cfg,
                           RngStream& rng) {
    return simulate(std::make_shared<const SystemParams>(params), x0, cfg, rng);
}

/// E_B[X_t] for fixed J when the diffusion is constant:
///   e^{D t} x0 + int_0^t e^{D(t-s)} h ds,  D = g J^T + Lambda^T,
/// via the exponential of the augmented matrix [[D, h], [0, 0]] t.
inline Vector exact_mean_linear(const SystemParams& p, const Vector& x0, double t) {
    if (!p.constant_diffusion())
        throw InvalidArgument("exact_mean_linear requires constant diffusion");
    const int n = p.n();
    if (x0.size() != n) throw InvalidArgument("exact_mean_linear: dimension mismatch");
    Matrix aug = Matrix::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = p.coupling_gain() * p.j().transpose() + p.lambda().transpose();
    aug.topRightCorner(n, 1) = p.h();
    Matrix e = expm(aug * t);
    return e.topLeftCorner(n, n) * x0 + e.topRightCorner(n, 1);
}

inline constexpr double kInfiniteBeta = std::numeric_limits<double>::infinity();

/// Langevin dynamics for H(x) = sum J_ij x_i x_j with linear confinement K:
/// drift matrix 2J - K I, noise beta^{-1/2} dB (sigma_0j = beta^{-1/2}/sqrt 2),
/// beta = inf gives the gradient flow.
inline SystemParams langevin_params(const CouplingMatrix& coupling, double beta, double confinement) {
    if (!coupling.symmetric || coupling.j != coupling.j.transpose())
        throw InvalidArgument("langevin_params requires a symmetric coupling");
    if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
    if (confinement < 0.0) throw InvalidArgument("confinement must be non-negative");
    const int n = coupling.n;
    Matrix sigma = Matrix::Zero(n + 1, n);
    if (std::isfinite(beta)) sigma.row(0).setConstant(1.0 / std::sqrt(2.0 * beta));
    return SystemParams::make(coupling.j, -confinement * Matrix::Identity(n, n), Vector::Zero(n),
                              std::move(sigma), 2.0);
}

/// Long-format CSV: time, coordinate (1-based), X, M.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, const std::string& config_hash) {
    os << "# config-hash: " << config_hash << "\n";
    os << "time,coord,X,M\n";
    for (int k = 0; k < tr.grid_size(); ++k)
        for (int i = 0; i < tr.n(); ++i)
            os << format_double(tr.times[k]) << ',' << (i + 1) << ',' << format_double(tr.x(i, k)) << ','
               << format_double(tr.m(i, k)) << '\n';
}

} // namespace rmdiff
