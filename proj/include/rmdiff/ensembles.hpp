#pragma once

// Coupling-matrix ensembles, initial laws and their exact moments.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rmdiff/error.hpp"
#include "rmdiff/rng.hpp"

namespace rmdiff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class DistKind : std::uint8_t { Gaussian, Rademacher, UniformCentered, ExponentialCentered };

inline std::string_view to_string(DistKind kind) {
    switch (kind) {
    case DistKind::Gaussian: return "gaussian";
    case DistKind::Rademacher: return "rademacher";
    case DistKind::UniformCentered: return "uniform";
    case DistKind::ExponentialCentered: return "exponential";
    }
    return "?";
}

inline DistKind parse_dist_kind(std::string_view name) {
    if (name == "gaussian") return DistKind::Gaussian;
    if (name == "rademacher") return DistKind::Rademacher;
    if (name == "uniform") return DistKind::UniformCentered;
    if (name == "exponential") return DistKind::ExponentialCentered;
    throw InvalidArgument("unknown distribution '" + std::string(name) + "'");
}

/// Exact raw moment E[Z^l] of the mean-zero, unit-variance law `kind`.
///   Gaussian            (l-1)!! for even l
///   Rademacher (+-1)    1 for even l
///   uniform [-r3, r3]   3^{l/2} / (l+1) for even l
///   Exp(1) - 1          derangement number !l
inline double entry_moment(DistKind kind, int l) {
    if (l < 0) throw InvalidArgument("entry_moment: negative order");
    if (l == 0) return 1.0;
    switch (kind) {
    case DistKind::Gaussian: {
        if (l % 2) return 0.0;
        double m = 1.0;
        for (int k = l - 1; k > 1; k -= 2) m *= k;
        return m;
    }
    case DistKind::Rademacher: return (l % 2) ? 0.0 : 1.0;
    case DistKind::UniformCentered:
        return (l % 2) ? 0.0 : std::pow(3.0, l / 2) / (l + 1);
    case DistKind::ExponentialCentered: {
        double d0 = 1.0, d1 = 0.0;
        for (int n = 2; n <= l; ++n) {
            double dn = (n - 1) * (d1 + d0);
            d0 = d1;
            d1 = dn;
        }
        return d1;
    }
    }
    return 0.0;
}

/// Mean-zero, unit-variance entry law.
struct EntryDistribution {
    DistKind kind = DistKind::Gaussian;

    double sample(RngStream& rng) const {
        switch (kind) {
        case DistKind::Gaussian: return rng.normal();
        case DistKind::Rademacher: return rng.bit() ? 1.0 : -1.0;
        case DistKind::UniformCentered: return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
        case DistKind::ExponentialCentered:
            return std::exponential_distribution<double>(1.0)(rng) - 1.0;
        }
        return 0.0;
    }
    double moment(int l) const { return entry_moment(kind, l); }

    friend bool operator==(const EntryDistribution&, const EntryDistribution&) = default;
};

/// Entrywise second moments m_ij of the unscaled matrix A.
struct VarianceProfile {
    Matrix m;
    std::string name = "custom";

    int size() const { return static_cast<int>(m.rows()); }
    bool is_symmetric() const { return m.rows() == m.cols() && m == m.transpose(); }
    double bound() const { return m.size() ? m.maxCoeff() : 0.0; }

    /// m_ij = 1{i != j}.
    static VarianceProfile off_diagonal(int n) {
        VarianceProfile p;
        p.m = Matrix::Ones(n, n) - Matrix::Identity(n, n);
        p.name = "offdiag";
        return p;
    }
    /// m_ij = 1.
    static VarianceProfile full(int n) {
        VarianceProfile p;
        p.m = Matrix::Ones(n, n);
        p.name = "full";
        return p;
    }
    /// Two diagonal blocks of variance 1.5, cross-block variance 0.5, zero diagonal.
    /// An illustrative non-homogeneous profile, not a canonical choice.
    static VarianceProfile two_block(int n) {
        VarianceProfile p;
        p.m.resize(n, n);
        int half = n / 2;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                p.m(i, j) = (i == j) ? 0.0 : ((i < half) == (j < half) ? 1.5 : 0.5);
        p.name = "block2";
        return p;
    }

    void validate() const {
        if (m.rows() != m.cols()) throw InvalidArgument("variance profile must be square");
        if (m.size() && m.minCoeff() < 0.0)
            throw InvalidArgument("variance profile has negative entries");
        if (!m.allFinite()) throw InvalidArgument("variance profile has non-finite entries");
    }
};

/// Read an N x N comma-separated matrix (no header; lines starting with '#' skipped).
inline Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open matrix file '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    Matrix out(static_cast<Eigen::Index>(rows.size()),
               rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != static_cast<std::size_t>(out.cols()))
            throw InvalidArgument("ragged matrix file '" + path + "'");
        for (std::size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j];
    }
    return out;
}

/// Preset name ("offdiag", "full", "block2") or a CSV path.
inline VarianceProfile make_profile(const std::string& source, int n) {
    if (source == "offdiag") return VarianceProfile::off_diagonal(n);
    if (source == "full") return VarianceProfile::full(n);
    if (source == "block2") return VarianceProfile::two_block(n);
    VarianceProfile p;
    p.m = load_matrix_csv(source);
    p.name = source;
    if (p.size() != n)
        throw InvalidArgument("profile '" + source + "' has dimension " + std::to_string(p.size()) +
                              ", expected " + std::to_string(n));
    p.validate();
    return p;
}

struct CouplingSource {
    EntryDistribution dist;
    std::string profile;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

/// Sampled interaction matrix A and its rescaling J = A / sqrt(N).
struct CouplingMatrix {
    int n = 0;
    Matrix a;
    Matrix j;
    bool symmetric = false;
    CouplingSource source;

    /// Build from an explicit A (used for hand-made test instances).
    static CouplingMatrix from_a(Matrix a, bool symmetric) {
        if (a.rows() != a.cols()) throw InvalidArgument("coupling matrix must be square");
        if (symmetric && a != a.transpose())
            throw InvalidArgument("coupling matrix flagged symmetric but A != A^T");
        CouplingMatrix c;
        c.n = static_cast<int>(a.rows());
        c.j = a / std::sqrt(static_cast<double>(c.n));
        c.a = std::move(a);
        c.symmetric = symmetric;
        return c;
    }
};

/// A_ij = sqrt(m_ij) Z_ij with Z i.i.d. from `dist`. Symmetric ensembles draw the
/// upper triangle (diagonal included) row by row and mirror it.
inline CouplingMatrix sample_matrix(const EntryDistribution& dist, const VarianceProfile& profile,
                                    bool symmetric, RngStream& rng) {
    profile.validate();
    if (symmetric && !profile.is_symmetric())
        throw InvalidArgument("symmetric ensemble requires a symmetric variance profile");
    const int n = profile.size();
    CouplingMatrix c;
    c.n = n;
    c.symmetric = symmetric;
    c.a.resize(n, n);
    auto entry = [&](int i, int k) {
        double z = dist.sample(rng);
        double var = profile.m(i, k);
        return var == 0.0 ? 0.0 : std::sqrt(var) * z;
    };
    if (symmetric) {
        for (int i = 0; i < n; ++i)
            for (int k = i; k < n; ++k) {
                double v = entry(i, k);
                c.a(i, k) = v;
                c.a(k, i) = v;
            }
    } else {
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) c.a(i, k) = entry(i, k);
    }
    c.j = c.a / std::sqrt(static_cast<double>(n));
    c.source = {dist, profile.name, rng.seed(), rng.stream()};
    return c;
}

/// One coordinate of a product initial law: X_i(0) = loc + scale * Z, Z from `dist`.
/// scale = 0 gives a point mass at loc.
struct InitialCoordinate {
    EntryDistribution dist;
    double loc = 0.0;
    double scale = 1.0;
};

/// Product measure mu over R^N.
struct InitialLaw {
    std::vector<InitialCoordinate> coords;

    static InitialLaw iid(int n, EntryDistribution dist, double loc = 0.0, double scale = 1.0) {
        return InitialLaw{std::vector<InitialCoordinate>(static_cast<std::size_t>(n),
                                                         InitialCoordinate{dist, loc, scale})};
    }
    static InitialLaw point_mass(int n, double value) {
        return iid(n, EntryDistribution{}, value, 0.0);
    }

    int size() const { return static_cast<int>(coords.size()); }

    /// E[X_i(0)^l] for 0-based coordinate i, by binomial expansion of (loc + scale Z)^l.
    double moment(int i, int l) const {
        const auto& c = coords.at(static_cast<std::size_t>(i));
        double total = 0.0, binom = 1.0;
        for (int k = 0; k <= l; ++k) {
            double zk = c.dist.moment(k);
            if (zk != 0.0) total += binom * std::pow(c.loc, l - k) * std::pow(c.scale, k) * zk;
            binom = binom * (l - k) / (k + 1);
        }
        return total;
    }
};

inline Vector sample_initial(const InitialLaw& law, RngStream& rng) {
    Vector x(law.size());
    for (int i = 0; i < law.size(); ++i) {
        const auto& c = law.coords[static_cast<std::size_t>(i)];
        double z = c.dist.sample(rng);
        x(i) = c.loc + c.scale * z;
    }
    return x;
}

/// Power iteration did not reach the requested accuracy; carries the best estimate.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double estimate)
        : NumericalError(what), estimate(estimate) {}
    double estimate;
};

/// Largest singular value by power iteration on M^T M. Stops once the
/// extrapolated remaining increase of the Rayleigh quotient falls below tol
/// (relative).
inline double operator_norm(const Matrix& m, double tol = 1e-6, int max_iter = 10000) {
    if (tol <= 0.0) throw InvalidArgument("operator_norm: tol must be positive");
    const Eigen::Index n = m.cols();
    if (n == 0 || m.rows() == 0) return 0.0;
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.37 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    v.normalize();
    double lambda = 0.0, prev_delta = -1.0;
    for (int it = 0; it < max_iter; ++it) {
        Vector mv = m * v;
        double next = mv.squaredNorm();
        Vector w = m.transpose() * mv;
        double wn = w.norm();
        if (wn == 0.0) return std::sqrt(next);
        v = w / wn;
        double delta = next - lambda;
        lambda = next;
        if (it > 0 && delta <= tol * lambda) {
            double remaining = delta;
            if (prev_delta > 0.0 && delta < prev_delta) {
                double r = delta / prev_delta;
                remaining = delta * r / (1.0 - r);
            } else if (prev_delta > 0.0) {
                remaining = tol * lambda * 2.0; // not yet geometric
            }
            if (remaining <= tol * lambda || delta <= 1e-15 * lambda) return std::sqrt(lambda);
        }
        prev_delta = delta;
    }
    throw ConvergenceError("operator_norm: no convergence after " + std::to_string(max_iter) +
                               " iterations",
                           std::sqrt(lambda));
}

} // namespace rmdiff
