#pragma once

// Observables evaluated on trajectory snapshots: building blocks, quadratic
// and tensor averages, spin-glass functionals and localization diagnostics.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rmdiff/ensembles.hpp"
#include "rmdiff/error.hpp"
#include "rmdiff/sde.hpp"

namespace rmdiff {

enum class BuildingBlock { One, X, G, M };

inline std::string_view to_string(BuildingBlock b) {
    switch (b) {
    case BuildingBlock::One: return "One";
    case BuildingBlock::X: return "X";
    case BuildingBlock::G: return "G";
    case BuildingBlock::M: return "M";
    }
    return "?";
}

inline BuildingBlock parse_block(std::string_view s) {
    if (s == "One" || s == "one" || s == "1") return BuildingBlock::One;
    if (s == "X" || s == "x") return BuildingBlock::X;
    if (s == "G" || s == "g") return BuildingBlock::G;
    if (s == "M" || s == "m") return BuildingBlock::M;
    throw InvalidArgument("unknown building block '" + std::string(s) + "'");
}

/// The whole block vector (Y_1(t), ..., Y_N(t)). G uses the coupling J itself,
/// G_i = sum_k J_ki X_k, without the drift gain.
inline Vector block_vector(const Trajectory& tr, BuildingBlock b, double t) {
    const int k = tr.index_of(t);
    switch (b) {
    case BuildingBlock::One: return Vector::Ones(tr.n());
    case BuildingBlock::X: return tr.x.col(k);
    case BuildingBlock::G: return tr.params->j().transpose() * tr.x.col(k);
    case BuildingBlock::M: return tr.m.col(k);
    }
    return {};
}

/// Single coordinate i (0-based) of a building block at grid time t.
inline double eval_block(const Trajectory& tr, BuildingBlock b, int i, double t) {
    if (i < 0 || i >= tr.n()) throw InvalidArgument("eval_block: coordinate out of range");
    const int k = tr.index_of(t);
    switch (b) {
    case BuildingBlock::One: return 1.0;
    case BuildingBlock::X: return tr.x(i, k);
    case BuildingBlock::G: return tr.params->j().col(i).dot(tr.x.col(k));
    case BuildingBlock::M: return tr.m(i, k);
    }
    return 0.0;
}

/// F = (1/N) sum_i a_i Y_i(t) Y'_i(t').
struct QuadraticObservable {
    Vector a;
    BuildingBlock y1 = BuildingBlock::X;
    BuildingBlock y2 = BuildingBlock::X;
    double t1 = 0.0;
    double t2 = 0.0;

    static QuadraticObservable make(Vector a, BuildingBlock y1, BuildingBlock y2, double t1, double t2,
                                    double c_a = std::numeric_limits<double>::infinity()) {
        if (a.size() && a.cwiseAbs().maxCoeff() > c_a)
            throw InvalidArgument("weights exceed the declared bound C_a");
        return QuadraticObservable{std::move(a), y1, y2, t1, t2};
    }
};

inline double eval_quadratic(const Trajectory& tr, const QuadraticObservable& obs) {
    if (obs.a.size() != tr.n()) throw InvalidArgument("eval_quadratic: weight dimension mismatch");
    Vector u = block_vector(tr, obs.y1, obs.t1);
    Vector v = block_vector(tr, obs.y2, obs.t2);
    return (obs.a.array() * u.array() * v.array()).sum() / tr.n();
}

/// Explicit list of non-zero tensor entries.
struct SparseTensorEntry {
    std::vector<int> index;
    double value;
};

/// Tensor weights: constant fill, dense (m = 1 vector or m = 2 matrix),
/// callback over index tuples (dense evaluation, m <= 3) or a sparse entry list.
using TensorWeights = std::variant<double, Vector, Matrix,
                                   std::function<double(std::span<const int>)>,
                                   std::vector<SparseTensorEntry>>;

/// F(t) = N^{-m} sum_{i_1..i_m} a_{i_1..i_m} prod_l F^(l)_{i_l},
/// F^(l)_i = prod_k Y^(l,k)_i(t_k).
struct TensorObservable {
    int arity = 1;
    TensorWeights a = 1.0;
    std::vector<std::vector<BuildingBlock>> blocks; // arity rows of p blocks
    std::vector<double> times;                      // p times
    double c_a = std::numeric_limits<double>::infinity();

    int p() const { return static_cast<int>(times.size()); }
};

inline constexpr int kMaxDenseArity = 3;

inline double eval_tensor(const Trajectory& tr, const TensorObservable& obs) {
    const int n = tr.n();
    const int m = obs.arity;
    if (m < 1) throw InvalidArgument("tensor arity must be positive");
    if (static_cast<int>(obs.blocks.size()) != m) throw InvalidArgument("tensor blocks must have arity rows");
    std::vector<Vector> factors;
    for (const auto& row : obs.blocks) {
        if (static_cast<int>(row.size()) != obs.p())
            throw InvalidArgument("each tensor block row needs one block per time");
        Vector f = Vector::Ones(n);
        for (int k = 0; k < obs.p(); ++k) f.array() *= block_vector(tr, row[k], obs.times[k]).array();
        factors.push_back(std::move(f));
    }
    const double scale = std::pow(static_cast<double>(n), -m);
    auto check = [&](double v) {
        if (std::abs(v) > obs.c_a) throw InvalidArgument("tensor weight exceeds C_a");
        return v;
    };

    if (const double* c = std::get_if<double>(&obs.a)) {
        check(*c);
        double prod = *c;
        for (const auto& f : factors) prod *= f.sum();
        return prod * scale;
    }
    if (const Vector* v = std::get_if<Vector>(&obs.a)) {
        if (m != 1 || v->size() != n) throw InvalidArgument("vector weights require arity 1 and N entries");
        if (v->size()) check(v->cwiseAbs().maxCoeff());
        return v->dot(factors[0]) * scale;
    }
    if (const Matrix* w = std::get_if<Matrix>(&obs.a)) {
        if (m != 2 || w->rows() != n || w->cols() != n)
            throw InvalidArgument("matrix weights require arity 2 and N x N entries");
        if (w->size()) check(w->cwiseAbs().maxCoeff());
        return factors[0].dot(*w * factors[1]) * scale;
    }
    if (const auto* entries = std::get_if<std::vector<SparseTensorEntry>>(&obs.a)) {
        double acc = 0.0;
        for (const auto& e : *entries) {
            if (static_cast<int>(e.index.size()) != m) throw InvalidArgument("sparse entry has wrong arity");
            double term = check(e.value);
            for (int l = 0; l < m; ++l) {
                if (e.index[l] < 0 || e.index[l] >= n) throw InvalidArgument("sparse index out of range");
                term *= factors[l](e.index[l]);
            }
            acc += term;
        }
        return acc * scale;
    }
    const auto& fn = std::get<std::function<double(std::span<const int>)>>(obs.a);
    if (m > kMaxDenseArity)
        throw InvalidArgument("dense tensor evaluation is limited to arity <= 3; supply sparse entries");
    std::vector<int> idx(m, 0);
    double acc = 0.0;
    while (true) {
        double term = check(fn(std::span<const int>(idx)));
        for (int l = 0; l < m && term != 0.0; ++l) term *= factors[l](idx[l]);
        acc += term;
        int l = m - 1;
        while (l >= 0 && ++idx[l] == n) idx[l--] = 0;
        if (l < 0) break;
    }
    return acc * scale;
}

/// C_N(s, t) = (1/N) sum_i X_i(s) X_i(t).
inline double autocorrelation(const Trajectory& tr, double s, double t) {
    return tr.x.col(tr.index_of(s)).dot(tr.x.col(tr.index_of(t))) / tr.n();
}

/// H(X_t)/N = (1/N) sum_ij J_ij X_i X_j.
inline double hamiltonian_density(const Trajectory& tr, double t) {
    const auto x = tr.x.col(tr.index_of(t));
    return x.dot(tr.params->j() * x) / tr.n();
}

/// (1/N) sum_i G_i(X_t)^2.
inline double grad_sq_density(const Trajectory& tr, double t) {
    return (tr.params->j().transpose() * tr.x.col(tr.index_of(t))).squaredNorm() / tr.n();
}

/// Components of the localization functional, computed with the drift
/// coupling g J so that the growth bound below uses the matrix that drives X.
struct LocalizationReport {
    double x0_sq = 0.0;          // ||X_0||^2
    double coupling_sq = 0.0;    // N ||g J||_{2->2}^2
    double sup_mart_sq = 0.0;    // sup over grid ||M_t||^2
    double r_effective = 0.0;    // sum of the three / N
    double mix_norm = 0.0;       // (||X_0||^2 + N sum_ij (g J_ij)^2 + sup ||M_t||^2)^{1/2}
    double horizon = 0.0;        // last grid time
};

inline LocalizationReport localization_report(const Trajectory& tr) {
    const SystemParams& p = *tr.params;
    const double n = tr.n();
    LocalizationReport r;
    r.x0_sq = tr.x0.squaredNorm();
    const double g = std::abs(p.coupling_gain());
    double op = g * operator_norm(p.j(), 1e-6);
    r.coupling_sq = n * op * op;
    for (int k = 0; k < tr.grid_size(); ++k) r.sup_mart_sq = std::max(r.sup_mart_sq, tr.m.col(k).squaredNorm());
    r.r_effective = n > 0 ? (r.x0_sq + r.coupling_sq + r.sup_mart_sq) / n : 0.0;
    r.mix_norm = std::sqrt(r.x0_sq + n * g * g * p.j().squaredNorm() + r.sup_mart_sq);
    r.horizon = tr.times.empty() ? 0.0 : tr.times.back();
    return r;
}

/// Growth bound on the localization set:
///   sup_t ||X_t|| / sqrt N <= (sqrt R + C_h T) exp((sqrt R + C_Lambda) T).
inline double gronwall_bound(double r, double c_h, double c_lambda, double horizon) {
    const double sr = std::sqrt(r);
    return (sr + c_h * horizon) * std::exp((sr + c_lambda) * horizon);
}

/// max over grid of ||X_t|| / sqrt N.
inline double sup_state_norm(const Trajectory& tr) {
    double best = 0.0;
    for (int k = 0; k < tr.grid_size(); ++k) best = std::max(best, tr.x.col(k).norm());
    return tr.n() ? best / std::sqrt(static_cast<double>(tr.n())) : 0.0;
}

} // namespace rmdiff
