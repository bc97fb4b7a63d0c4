#pragma once

// Paired-ensemble studies at desk scale: universality of expectations,
// concentration, aging of the spherical model, Hopfield-type and Rayleigh
// gradient flows, and the symbolic series against Monte Carlo.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rmdiff/ensembles.hpp"
#include "rmdiff/error.hpp"
#include "rmdiff/generator_algebra.hpp"
#include "rmdiff/io.hpp"
#include "rmdiff/observables.hpp"
#include "rmdiff/parallel.hpp"
#include "rmdiff/rng.hpp"
#include "rmdiff/sde.hpp"

namespace rmdiff {

// ---------------------------------------------------------------- configuration

enum class TemplateKind { Linear, Langevin };

/// Deterministic part of the system, instantiated for each sampled coupling.
///  Linear:   drift J^T x + lambda x + h, sigma_0j = sigma0, sigma_jj = sigma_mult.
///  Langevin: drift (2J - K) x + h, noise beta^{-1/2} dB. K is fixed or, with
///            confinement_auto, ||2J|| + margin for each sampled J.
struct SystemTemplate {
    TemplateKind kind = TemplateKind::Linear;
    double lambda = -1.0;
    double h = 0.0;
    double sigma0 = 1.0 / std::sqrt(2.0);
    double sigma_mult = 0.0;
    double beta = 1.0;
    double confinement = 0.0;
    bool confinement_auto = false;
    double margin = 0.5;

    bool constant_diffusion() const {
        return kind == TemplateKind::Langevin || sigma_mult == 0.0;
    }
    bool noiseless() const {
        return kind == TemplateKind::Langevin ? std::isinf(beta) : (sigma0 == 0.0 && sigma_mult == 0.0);
    }

    friend bool operator==(const SystemTemplate&, const SystemTemplate&) = default;
};

/// Langevin/gradient-flow system with thresholds h: drift (2J - K I) x + h and
/// noise beta^{-1/2} dB. J need not be symmetric here.
inline SystemParams hopfield_params(const Matrix& j, double beta, double confinement, const Vector& h) {
    if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
    if (confinement < 0.0) throw InvalidArgument("confinement must be non-negative");
    const auto n = j.rows();
    Matrix sigma = Matrix::Zero(n + 1, n);
    if (std::isfinite(beta)) sigma.row(0).setConstant(1.0 / std::sqrt(2.0 * beta));
    return SystemParams::make(j, -confinement * Matrix::Identity(n, n), h, std::move(sigma), 2.0);
}

/// Confinement used with coupling j under template t.
inline double template_confinement(const SystemTemplate& t, const Matrix& j) {
    if (!t.confinement_auto) return t.confinement;
    return 2.0 * operator_norm(j, 1e-6) + t.margin;
}

inline SystemParams instantiate(const SystemTemplate& t, const Matrix& j) {
    const auto n = j.rows();
    if (t.kind == TemplateKind::Langevin)
        return hopfield_params(j, t.beta, template_confinement(t, j), Vector::Constant(n, t.h));
    Matrix sigma = Matrix::Zero(n + 1, n);
    sigma.row(0).setConstant(t.sigma0);
    for (Eigen::Index i = 0; i < n; ++i) sigma(i + 1, i) = t.sigma_mult;
    return SystemParams::make(j, t.lambda * Matrix::Identity(n, n), Vector::Constant(n, t.h), std::move(sigma));
}

/// X_i(0) = loc + scale Z, Z from dist.
struct InitialSettings {
    EntryDistribution dist{DistKind::Rademacher};
    double loc = 0.0;
    double scale = 1.0;

    InitialLaw law(int n) const { return InitialLaw::iid(n, dist, loc, scale); }
    friend bool operator==(const InitialSettings&, const InitialSettings&) = default;
};

struct IntegratorSettings {
    double dt = 1e-3;
    double horizon = 1.0;
    int grid_points = 11;

    friend bool operator==(const IntegratorSettings&, const IntegratorSettings&) = default;
};

enum class ObservableKind { Autocorr, Hamiltonian, GradSq, Overlap, Quadratic, Tensor };

inline std::string to_string(ObservableKind k) {
    switch (k) {
    case ObservableKind::Autocorr: return "autocorr";
    case ObservableKind::Hamiltonian: return "hamiltonian";
    case ObservableKind::GradSq: return "gradsq";
    case ObservableKind::Overlap: return "overlap";
    case ObservableKind::Quadratic: return "quadratic";
    case ObservableKind::Tensor: return "tensor";
    }
    return "?";
}

inline ObservableKind parse_observable_kind(const std::string& s) {
    for (auto k : {ObservableKind::Autocorr, ObservableKind::Hamiltonian, ObservableKind::GradSq,
                   ObservableKind::Overlap, ObservableKind::Quadratic, ObservableKind::Tensor})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown observable kind '" + s + "'");
}

/// One scalar functional of a trajectory.
///  autocorr:    C_N(times[0], times[1])
///  hamiltonian: H(X_t)/N,            gradsq: |grad H|^2 / N at times[0]
///  overlap:     (1/N) sum X_i(t) X_i(0)
///  quadratic:   (1/N) sum a_i Y_i(times[0]) Y'_i(times[1]), blocks = {{Y, Y'}}
///  tensor:      arity rows of blocks, one per time
/// `weights` is a number (constant fill) or a CSV path.
struct ObservableDef {
    std::string name;
    ObservableKind kind = ObservableKind::Autocorr;
    std::vector<double> times;
    std::vector<std::vector<BuildingBlock>> blocks;
    std::string weights = "1";

    friend bool operator==(const ObservableDef&, const ObservableDef&) = default;
};

struct ExperimentParams {
    std::vector<int> ns{32, 64, 128, 256};
    int replicas = 2000;
    std::vector<double> aging_s{2, 4, 8};
    std::vector<double> aging_lambda{1, 2};
    std::vector<double> tail_lambda{0.05, 0.1, 0.2, 0.4};
    double rayleigh_horizon = 20.0;
    double rayleigh_record = 0.1;
    int taylor_order = 8;
    double taylor_t = 0.2;
    int taylor_n = 3;
    int moment_samples = 1'000'000;
    int max_moment = 12;

    friend bool operator==(const ExperimentParams&, const ExperimentParams&) = default;
};

struct ExperimentConfig {
    EntryDistribution dist{DistKind::Gaussian};
    EntryDistribution dist_alt{DistKind::Rademacher};
    std::string profile = "offdiag";
    bool symmetric = true;
    std::uint64_t seed = 1;
    InitialSettings initial;
    SystemTemplate system;
    IntegratorSettings integrator;
    ExperimentParams params;
    std::vector<ObservableDef> observables;
    int threads = 1;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Stream id of replica r at dimension n; distinct for every (n, r).
inline std::uint64_t replica_stream(int n, std::size_t r) {
    return (static_cast<std::uint64_t>(n) << 32) | static_cast<std::uint64_t>(r);
}

/// Coupling stream: keyed by the entry law so identical laws give identical J
/// and different laws give independent J for the same replica.
inline RngStream coupling_stream(std::uint64_t seed, std::uint64_t stream, const EntryDistribution& d) {
    return RngStream(seed, stream, Purpose::Coupling, static_cast<std::uint64_t>(d.kind) + 1);
}

// ---------------------------------------------------------------- observables

namespace detail {

inline Vector weight_vector(const std::string& source, int n) {
    char* end = nullptr;
    double v = std::strtod(source.c_str(), &end);
    if (end && *end == '\0' && end != source.c_str()) return Vector::Constant(n, v);
    Matrix m = load_matrix_csv(source);
    if (m.size() != n) throw InvalidArgument("weights '" + source + "' do not have N entries");
    return Eigen::Map<const Vector>(m.data(), n);
}

inline TensorWeights tensor_weights(const std::string& source, int n, int arity) {
    char* end = nullptr;
    double v = std::strtod(source.c_str(), &end);
    if (end && *end == '\0' && end != source.c_str()) return v;
    if (arity == 1) return weight_vector(source, n);
    if (arity == 2) {
        Matrix m = load_matrix_csv(source);
        if (m.rows() != n || m.cols() != n) throw InvalidArgument("weights '" + source + "' are not N x N");
        return m;
    }
    throw InvalidArgument("CSV tensor weights are supported for arity 1 and 2");
}

} // namespace detail

inline double evaluate_observable(const ObservableDef& o, const Trajectory& tr) {
    auto time = [&](std::size_t k) {
        if (k >= o.times.size()) throw InvalidArgument("observable '" + o.name + "' needs more times");
        return o.times[k];
    };
    switch (o.kind) {
    case ObservableKind::Autocorr: return autocorrelation(tr, time(0), o.times.size() > 1 ? o.times[1] : time(0));
    case ObservableKind::Hamiltonian: return hamiltonian_density(tr, time(0));
    case ObservableKind::GradSq: return grad_sq_density(tr, time(0));
    case ObservableKind::Overlap: return autocorrelation(tr, time(0), 0.0);
    case ObservableKind::Quadratic: {
        if (o.blocks.size() != 1 || o.blocks[0].size() != 2)
            throw InvalidArgument("quadratic observable '" + o.name + "' needs two blocks");
        auto q = QuadraticObservable::make(detail::weight_vector(o.weights, tr.n()), o.blocks[0][0],
                                           o.blocks[0][1], time(0), o.times.size() > 1 ? o.times[1] : time(0));
        return eval_quadratic(tr, q);
    }
    case ObservableKind::Tensor: {
        TensorObservable t;
        t.arity = static_cast<int>(o.blocks.size());
        t.blocks = o.blocks;
        t.times = o.times;
        t.a = detail::tensor_weights(o.weights, tr.n(), t.arity);
        return eval_tensor(tr, t);
    }
    }
    return 0.0;
}

/// C_N(T,T) and H(X_T)/N.
inline std::vector<ObservableDef> default_observables(double horizon) {
    return {{"autocorr_T", ObservableKind::Autocorr, {horizon, horizon}, {}, "1"},
            {"hamiltonian_T", ObservableKind::Hamiltonian, {horizon}, {}, "1"}};
}

/// C_N(T,T), H/N, |grad H|^2/N and the memory overlap (1/N) sum X_i(T) X_i(0).
inline std::vector<ObservableDef> hopfield_observables(double horizon) {
    return {{"autocorr_T", ObservableKind::Autocorr, {horizon, horizon}, {}, "1"},
            {"hamiltonian_T", ObservableKind::Hamiltonian, {horizon}, {}, "1"},
            {"gradsq_T", ObservableKind::GradSq, {horizon}, {}, "1"},
            {"overlap_T", ObservableKind::Overlap, {horizon}, {}, "1"}};
}

/// Uniform snapshot grid plus every time an observable refers to.
inline IntegratorConfig integrator_for(const IntegratorSettings& s, const std::vector<ObservableDef>& obs) {
    std::vector<double> grid;
    for (int k = 0; k < s.grid_points; ++k)
        grid.push_back(s.grid_points == 1 ? s.horizon : s.horizon * k / (s.grid_points - 1));
    grid.push_back(0.0);
    for (const auto& o : obs)
        for (double t : o.times) grid.push_back(t);
    return IntegratorConfig::make(s.dt, s.horizon, std::move(grid));
}

// ---------------------------------------------------------------- statistics

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

/// Mean and standard error, accumulated in index order.
inline MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    if (v.empty()) return r;
    if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
        r.mean = v.front();
        return r;
    }
    double s = 0.0;
    for (double x : v) s += x;
    r.mean = s / v.size();
    if (v.size() < 2) return r;
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (v.size() - 1) / v.size());
    return r;
}

struct SlopeFit {
    std::string observable;
    bool available = false;
    double slope = 0.0;
    double stderr_ = 0.0;
    double lo = 0.0;  // slope - 2 stderr
    double hi = 0.0;  // slope + 2 stderr
};

/// Least squares of log y on log x with a +-2 stderr band. Needs >= 3 points, all y > 0.
inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    SlopeFit f;
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n) return f;
    for (double v : y)
        if (!(v > 0.0)) return f;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y[i]) - my);
    }
    if (sxx == 0.0) return f;
    f.slope = sxy / sxx;
    double icpt = my - f.slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = std::log(y[i]) - icpt - f.slope * std::log(x[i]);
        rss += r * r;
    }
    f.stderr_ = std::sqrt(rss / (n - 2) / sxx);
    f.lo = f.slope - 2 * f.stderr_;
    f.hi = f.slope + 2 * f.stderr_;
    f.available = true;
    return f;
}

// ---------------------------------------------------------------- universality

struct UniversalityRow {
    int n = 0;
    std::string observable;
    double mean_arm1 = 0.0;
    double mean_arm2 = 0.0;
    double delta = 0.0;  // mean over replicas of F_arm1 - F_arm2
    double se = 0.0;     // standard error of delta
    int replicas = 0;
};

struct UniversalityReport {
    std::vector<UniversalityRow> rows;
    std::vector<SlopeFit> slopes;
    /// Per-replica differences, [n index][observable][replica].
    std::vector<std::vector<std::vector<double>>> differences;
};

/// Paired estimate of E F(arm1) - E F(arm2). Each replica shares its X_0 and
/// Brownian streams across the arms and draws J from the arm's own stream.
inline UniversalityReport run_universality(const ExperimentConfig& cfg) {
    if (cfg.params.replicas < 2) throw InvalidArgument("universality needs at least 2 replicas");
    const auto obs = cfg.observables.empty() ? default_observables(cfg.integrator.horizon) : cfg.observables;
    const IntegratorConfig icfg = integrator_for(cfg.integrator, obs);
    const std::size_t reps = static_cast<std::size_t>(cfg.params.replicas);
    UniversalityReport rep;
    for (int n : cfg.params.ns) {
        const VarianceProfile profile = make_profile(cfg.profile, n);
        const InitialLaw law = cfg.initial.law(n);
        std::vector<std::vector<double>> f1(obs.size(), std::vector<double>(reps));
        auto f2 = f1;
        parallel_for(reps, cfg.threads, [&](std::size_t r) {
            const std::uint64_t sid = replica_stream(n, r);
            RngStream init_rng(cfg.seed, sid, Purpose::Initial);
            const Vector x0 = sample_initial(law, init_rng);
            for (int arm = 0; arm < 2; ++arm) {
                const EntryDistribution& d = arm == 0 ? cfg.dist : cfg.dist_alt;
                RngStream jrng = coupling_stream(cfg.seed, sid, d);
                CouplingMatrix c = sample_matrix(d, profile, cfg.symmetric, jrng);
                auto params = std::make_shared<const SystemParams>(instantiate(cfg.system, c.j));
                RngStream noise(cfg.seed, sid, Purpose::Noise);
                Trajectory tr = simulate(params, x0, icfg, noise);
                auto& out = arm == 0 ? f1 : f2;
                for (std::size_t o = 0; o < obs.size(); ++o) out[o][r] = evaluate_observable(obs[o], tr);
            }
        });
        std::vector<std::vector<double>> diffs(obs.size(), std::vector<double>(reps));
        for (std::size_t o = 0; o < obs.size(); ++o) {
            for (std::size_t r = 0; r < reps; ++r) diffs[o][r] = f1[o][r] - f2[o][r];
            MeanSe d = mean_se(diffs[o]);
            rep.rows.push_back({n, obs[o].name, mean_se(f1[o]).mean, mean_se(f2[o]).mean, d.mean, d.se,
                                static_cast<int>(reps)});
        }
        rep.differences.push_back(std::move(diffs));
    }
    for (const auto& o : obs) {
        std::vector<double> xs, ys;
        for (const auto& row : rep.rows)
            if (row.observable == o.name) {
                xs.push_back(row.n);
                ys.push_back(std::max(std::abs(row.delta), row.se));
            }
        SlopeFit f = fit_loglog(xs, ys);
        f.observable = o.name;
        rep.slopes.push_back(f);
    }
    return rep;
}

/// Thresholded Langevin/gradient flow with the Hopfield observable suite.
inline UniversalityReport run_hopfield(ExperimentConfig cfg) {
    if (cfg.system.kind != TemplateKind::Langevin)
        throw InvalidArgument("hopfield requires the langevin system template");
    cfg.observables = hopfield_observables(cfg.integrator.horizon);
    return run_universality(cfg);
}

inline CsvTable universality_table(const UniversalityReport& r) {
    CsvTable t({"n", "observable", "mean_arm1", "mean_arm2", "delta", "se", "replicas"});
    for (const auto& row : r.rows)
        t.row().add(row.n).add(row.observable).add(row.mean_arm1).add(row.mean_arm2).add(row.delta).add(row.se).add(
            row.replicas);
    return t;
}

// ---------------------------------------------------------------- concentration

struct ConcentrationRow {
    int n = 0;
    std::string functional;
    double replica_std = 0.0;  // RMS over replicas of sup_grid |F_r - mean|
    std::vector<std::pair<double, double>> tails;  // (lambda, fraction of replicas above)
};

struct ConcentrationReport {
    std::vector<ConcentrationRow> rows;
    const ConcentrationRow* find(int n, const std::string& functional) const {
        for (const auto& r : rows)
            if (r.n == n && r.functional == functional) return &r;
        return nullptr;
    }
};

/// Functionals swept over the snapshot grid: C_N(t,t), C_N(s,t), H(X_t)/N, |grad H|^2/N.
inline const std::vector<std::string>& concentration_functionals() {
    static const std::vector<std::string> names{"autocorr_diag", "autocorr", "hamiltonian", "gradsq"};
    return names;
}

/// Fully independent replicas of (J, X_0, B) from the first arm's law.
inline ConcentrationReport run_concentration(const ExperimentConfig& cfg) {
    if (!cfg.system.constant_diffusion())
        throw InvalidArgument("concentration requires a constant-diffusion system template");
    if (cfg.params.replicas < 2) throw InvalidArgument("concentration needs at least 2 replicas");
    const IntegratorConfig icfg = integrator_for(cfg.integrator, {});
    const std::size_t reps = static_cast<std::size_t>(cfg.params.replicas);
    const auto& names = concentration_functionals();
    ConcentrationReport rep;
    for (int n : cfg.params.ns) {
        const VarianceProfile profile = make_profile(cfg.profile, n);
        const InitialLaw law = cfg.initial.law(n);
        const std::size_t g = icfg.grid_steps.size();
        // values[f][r] = F over the functional's time index set
        std::vector<std::vector<std::vector<double>>> values(names.size(), std::vector<std::vector<double>>(reps));
        parallel_for(reps, cfg.threads, [&](std::size_t r) {
            const std::uint64_t sid = replica_stream(n, r);
            RngStream init_rng(cfg.seed, sid, Purpose::Initial);
            const Vector x0 = sample_initial(law, init_rng);
            RngStream jrng = coupling_stream(cfg.seed, sid, cfg.dist);
            CouplingMatrix c = sample_matrix(cfg.dist, profile, cfg.symmetric, jrng);
            auto params = std::make_shared<const SystemParams>(instantiate(cfg.system, c.j));
            RngStream noise(cfg.seed, sid, Purpose::Noise);
            Trajectory tr = simulate(params, x0, icfg, noise);
            Matrix gram = tr.x.transpose() * tr.x / static_cast<double>(n);
            Matrix jx = params->j().transpose() * tr.x;
            for (std::size_t k = 0; k < g; ++k) {
                values[0][r].push_back(gram(k, k));
                values[2][r].push_back(tr.x.col(k).dot(params->j() * tr.x.col(k)) / n);
                values[3][r].push_back(jx.col(k).squaredNorm() / n);
            }
            for (std::size_t a = 0; a < g; ++a)
                for (std::size_t b = 0; b < g; ++b) values[1][r].push_back(gram(a, b));
        });
        for (std::size_t f = 0; f < names.size(); ++f) {
            const std::size_t m = values[f][0].size();
            std::vector<double> mean(m);
            for (std::size_t k = 0; k < m; ++k) {
                std::vector<double> col(reps);
                for (std::size_t r = 0; r < reps; ++r) col[r] = values[f][r][k];
                mean[k] = mean_se(col).mean;
            }
            std::vector<double> sup(reps, 0.0);
            double ss = 0.0;
            for (std::size_t r = 0; r < reps; ++r) {
                for (std::size_t k = 0; k < m; ++k) sup[r] = std::max(sup[r], std::abs(values[f][r][k] - mean[k]));
                ss += sup[r] * sup[r];
            }
            ConcentrationRow row{n, names[f], std::sqrt(ss / static_cast<double>(reps)), {}};
            for (double lam : cfg.params.tail_lambda) {
                std::size_t above = 0;
                for (double s : sup) above += s > lam;
                row.tails.emplace_back(lam, static_cast<double>(above) / static_cast<double>(reps));
            }
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

inline CsvTable concentration_table(const ConcentrationReport& r) {
    CsvTable t({"n", "functional", "replica_std", "lambda", "tail_fraction"});
    for (const auto& row : r.rows)
        for (const auto& [lam, frac] : row.tails)
            t.row().add(row.n).add(row.functional).add(row.replica_std).add(lam).add(frac);
    return t;
}

// ---------------------------------------------------------------- aging

/// Exact gradient flow x_t = e^{(2J - K) t} x0 for symmetric J through its
/// eigendecomposition; returns C(s,t) = (1/N) sum_k w_k^2 e^{(2 l_k - K)(s + t)}.
class EigenFlow {
public:
    EigenFlow(const Matrix& j, const Vector& x0, double confinement) : k_(confinement) {
        if (j.rows() != j.cols() || j != j.transpose()) throw InvalidArgument("EigenFlow requires symmetric J");
        Eigen::SelfAdjointEigenSolver<Matrix> es(j);
        if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
        eig_ = es.eigenvalues();
        vecs_ = es.eigenvectors();
        w2_ = (vecs_.transpose() * x0).array().square();
        n_ = static_cast<double>(j.rows());
    }

    void set_confinement(double k) { k_ = k; }
    double confinement() const { return k_; }

    double top_eigenvalue() const { return eig_(eig_.size() - 1); }
    double spectral_norm() const { return std::max(std::abs(eig_(0)), std::abs(top_eigenvalue())); }
    const Vector& eigenvalues() const { return eig_; }
    const Matrix& eigenvectors() const { return vecs_; }

    double correlation(double s, double t) const {
        double u = s + t, acc = 0.0;
        for (Eigen::Index k = 0; k < eig_.size(); ++k) acc += w2_(k) * std::exp((2.0 * eig_(k) - k_) * u);
        return acc / n_;
    }

    /// C(s,t) / sqrt(C(s,s) C(t,t)), computed with the exponent shifted by the top mode
    /// so long times do not underflow.
    double normalized(double s, double t) const {
        const double top = 2.0 * top_eigenvalue() - k_;
        auto c = [&](double u) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < eig_.size(); ++k) acc += w2_(k) * std::exp((2.0 * eig_(k) - k_ - top) * u);
            return acc;
        };
        if (s == t) return 1.0;
        double v = c(s + t) / std::sqrt(c(2 * s) * c(2 * t));
        return std::min(v, 1.0);
    }

private:
    double k_;
    double n_ = 0;
    Vector eig_;
    Matrix vecs_;
    Vector w2_;
};

struct AgingRow {
    int n = 0;
    double s = 0.0;
    double lambda = 0.0;
    MeanSe arm1, arm2;
    double gap = 0.0;  // |mean arm1 - mean arm2|
    int kept1 = 0, kept2 = 0;
    int dropped1 = 0, dropped2 = 0;
};

struct AgingReport {
    std::vector<AgingRow> rows;
};

/// Normalized autocorrelation C(s, lambda s)/sqrt(C(s,s) C(lambda s, lambda s)) of the
/// zero-temperature spherical flow, both arms on shared initial conditions.
inline AgingReport run_aging(const ExperimentConfig& cfg) {
    if (cfg.system.kind != TemplateKind::Langevin || !std::isinf(cfg.system.beta))
        throw InvalidArgument("aging requires the langevin template with beta = inf");
    if (!cfg.symmetric) throw InvalidArgument("aging requires a symmetric ensemble");
    const std::size_t reps = static_cast<std::size_t>(cfg.params.replicas);
    if (reps < 2) throw InvalidArgument("aging needs at least 2 replicas");
    const auto& ss = cfg.params.aging_s;
    const auto& ls = cfg.params.aging_lambda;
    for (double l : ls)
        if (l < 1.0) throw InvalidArgument("aging lambda must be >= 1");
    AgingReport rep;
    for (int n : cfg.params.ns) {
        const VarianceProfile profile = make_profile(cfg.profile, n);
        const InitialLaw law = cfg.initial.law(n);
        const std::size_t cells = ss.size() * ls.size();
        // ratio[arm][r][cell], NaN when the replica is dropped
        std::vector<std::vector<std::vector<double>>> ratio(2, std::vector<std::vector<double>>(reps));
        parallel_for(reps, cfg.threads, [&](std::size_t r) {
            const std::uint64_t sid = replica_stream(n, r);
            RngStream init_rng(cfg.seed, sid, Purpose::Initial);
            const Vector x0 = sample_initial(law, init_rng);
            for (int arm = 0; arm < 2; ++arm) {
                const EntryDistribution& d = arm == 0 ? cfg.dist : cfg.dist_alt;
                RngStream jrng = coupling_stream(cfg.seed, sid, d);
                CouplingMatrix c = sample_matrix(d, profile, true, jrng);
                EigenFlow flow(c.j, x0, 0.0);
                const double norm2j = 2.0 * flow.spectral_norm();
                const double k = cfg.system.confinement_auto ? norm2j + cfg.system.margin : cfg.system.confinement;
                auto& out = ratio[arm][r];
                if (!(k > norm2j)) {
                    out.assign(cells, std::numeric_limits<double>::quiet_NaN());
                    continue;
                }
                flow.set_confinement(k);
                for (double s : ss)
                    for (double l : ls) out.push_back(flow.normalized(s, l * s));
            }
        });
        std::size_t cell = 0;
        for (double s : ss)
            for (double l : ls) {
                AgingRow row;
                row.n = n;
                row.s = s;
                row.lambda = l;
                for (int arm = 0; arm < 2; ++arm) {
                    std::vector<double> v;
                    int dropped = 0;
                    for (std::size_t r = 0; r < reps; ++r) {
                        double x = ratio[arm][r][cell];
                        if (std::isnan(x))
                            ++dropped;
                        else
                            v.push_back(x);
                    }
                    (arm == 0 ? row.arm1 : row.arm2) = mean_se(v);
                    (arm == 0 ? row.kept1 : row.kept2) = static_cast<int>(v.size());
                    (arm == 0 ? row.dropped1 : row.dropped2) = dropped;
                }
                row.gap = std::abs(row.arm1.mean - row.arm2.mean);
                rep.rows.push_back(row);
                ++cell;
            }
    }
    return rep;
}

inline CsvTable aging_table(const AgingReport& r) {
    CsvTable t({"n", "s", "lambda", "ratio_arm1", "se_arm1", "ratio_arm2", "se_arm2", "gap", "kept_arm1",
                "kept_arm2", "dropped_arm1", "dropped_arm2"});
    for (const auto& row : r.rows)
        t.row()
            .add(row.n)
            .add(row.s)
            .add(row.lambda)
            .add(row.arm1.mean)
            .add(row.arm1.se)
            .add(row.arm2.mean)
            .add(row.arm2.se)
            .add(row.gap)
            .add(row.kept1)
            .add(row.kept2)
            .add(row.dropped1)
            .add(row.dropped2);
    return t;
}

// ---------------------------------------------------------------- Rayleigh

struct RayleighPath {
    std::vector<double> times;
    std::vector<double> quotient;
    double top_eigenvalue = 0.0;
    bool monotone = true;
};

/// <x, J x> / |x|^2 along the gradient ascent x' = (2J - K) x, Euler steps of size
/// dt, recorded every `record` time units. K is ||2J|| + 1 and only rescales x.
inline RayleighPath rayleigh_path(const Matrix& j, const Vector& x0, double dt, double horizon, double record) {
    if (j != j.transpose()) throw InvalidArgument("rayleigh flow requires symmetric J");
    const int n = static_cast<int>(j.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(j, Eigen::EigenvaluesOnly);
    RayleighPath p;
    p.top_eigenvalue = es.eigenvalues()(n - 1);
    const double norm = std::max(std::abs(es.eigenvalues()(0)), std::abs(p.top_eigenvalue));
    Matrix sigma = Matrix::Zero(n + 1, n);
    auto params = std::make_shared<const SystemParams>(SystemParams::make(
        j, -(2.0 * norm + 1.0) * Matrix::Identity(n, n), Vector::Zero(n), std::move(sigma), 2.0));
    const int points = static_cast<int>(std::lround(horizon / record)) + 1;
    IntegratorConfig icfg = IntegratorConfig::uniform(dt, horizon, points);
    RngStream unused(0, 0);
    Trajectory tr = simulate(params, x0, icfg, unused);
    for (int k = 0; k < tr.grid_size(); ++k) {
        const auto x = tr.x.col(k);
        double q = x.dot(j * x) / x.squaredNorm();
        if (!p.quotient.empty() && q < p.quotient.back() - 1e-12 * std::max(1.0, std::abs(q))) p.monotone = false;
        p.times.push_back(tr.times[k]);
        p.quotient.push_back(q);
    }
    return p;
}

struct RayleighRow {
    int n = 0;
    int arm = 0;
    int replica = 0;
    RayleighPath path;
    double final_gap = 0.0;  // |quotient(T) - top eigenvalue|
};

struct RayleighReport {
    std::vector<RayleighRow> rows;
    double max_final_gap = 0.0;
    bool all_monotone = true;
    /// max over n, t of |mean quotient arm1 - mean quotient arm2|
    double max_arm_difference = 0.0;
};

inline RayleighReport run_rayleigh(const ExperimentConfig& cfg) {
    if (!cfg.symmetric) throw InvalidArgument("rayleigh requires a symmetric ensemble");
    const std::size_t reps = static_cast<std::size_t>(std::max(cfg.params.replicas, 1));
    RayleighReport rep;
    for (int n : cfg.params.ns) {
        const VarianceProfile profile = make_profile(cfg.profile, n);
        const InitialLaw law = cfg.initial.law(n);
        std::vector<RayleighRow> rows(2 * reps);
        parallel_for(2 * reps, cfg.threads, [&](std::size_t idx) {
            const std::size_t r = idx / 2;
            const int arm = static_cast<int>(idx % 2);
            const std::uint64_t sid = replica_stream(n, r);
            RngStream init_rng(cfg.seed, sid, Purpose::Initial);
            const Vector x0 = sample_initial(law, init_rng);
            const EntryDistribution& d = arm == 0 ? cfg.dist : cfg.dist_alt;
            RngStream jrng = coupling_stream(cfg.seed, sid, d);
            CouplingMatrix c = sample_matrix(d, profile, true, jrng);
            RayleighRow row{n, arm + 1, static_cast<int>(r),
                            rayleigh_path(c.j, x0, cfg.integrator.dt, cfg.params.rayleigh_horizon,
                                          cfg.params.rayleigh_record),
                            0.0};
            row.final_gap = std::abs(row.path.quotient.back() - row.path.top_eigenvalue);
            rows[idx] = std::move(row);
        });
        const std::size_t g = rows[0].path.quotient.size();
        for (std::size_t k = 0; k < g; ++k) {
            double m1 = 0, m2 = 0;
            for (std::size_t r = 0; r < reps; ++r) {
                m1 += rows[2 * r].path.quotient[k];
                m2 += rows[2 * r + 1].path.quotient[k];
            }
            rep.max_arm_difference = std::max(rep.max_arm_difference, std::abs(m1 - m2) / reps);
        }
        for (auto& row : rows) {
            rep.max_final_gap = std::max(rep.max_final_gap, row.final_gap);
            rep.all_monotone = rep.all_monotone && row.path.monotone;
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

inline CsvTable rayleigh_table(const RayleighReport& r) {
    CsvTable t({"n", "arm", "replica", "time", "quotient", "top_eigenvalue"});
    for (const auto& row : r.rows)
        for (std::size_t k = 0; k < row.path.times.size(); ++k)
            t.row()
                .add(row.n)
                .add(row.arm)
                .add(row.replica)
                .add(row.path.times[k])
                .add(row.path.quotient[k])
                .add(row.path.top_eigenvalue);
    return t;
}

// ---------------------------------------------------------------- series vs Monte Carlo

/// E[prod_k f_k(X_{t_k})] for polynomial factors at increasing times.
struct SeriesCase {
    std::string name;
    std::vector<Polynomial> factors;
    std::vector<double> times;
};

inline std::vector<SeriesCase> default_series_cases(int n, double t) {
    std::vector<SeriesCase> cases;
    cases.push_back({"x1", {Polynomial::from(Monomial::x({1}))}, {t}});
    if (n >= 2) cases.push_back({"x1x2", {Polynomial::from(Monomial::x({1, 2}))}, {t}});
    cases.push_back({"x1^2", {Polynomial::from(Monomial::x({1, 1}))}, {t}});
    cases.push_back({"x1(t/2)x1(t)",
                     {Polynomial::from(Monomial::x({1})), Polynomial::from(Monomial::x({1}))},
                     {0.5 * t, t}});
    return cases;
}

struct SeriesRow {
    std::string name;
    TaylorResult series;
    MeanSe mc;
    double z = 0.0;
};

struct SeriesReport {
    std::vector<SeriesRow> rows;
    bool any_diverging = false;
};

/// Symbolic expectation (J random, moments exact) against Monte Carlo over (J, X_0, B).
inline SeriesReport run_taylor_vs_mc(const ExperimentConfig& cfg, std::vector<SeriesCase> cases = {}) {
    const int n = cfg.params.taylor_n;
    const double t = cfg.params.taylor_t;
    if (n < 1 || n > 4) throw InvalidArgument("taylor-check requires 1 <= N <= 4");
    if (t < 0.0 || t > 0.5) throw InvalidArgument("taylor-check requires 0 <= t <= 0.5");
    if (cfg.system.kind == TemplateKind::Langevin && cfg.system.confinement_auto)
        throw InvalidArgument("taylor-check needs a fixed confinement");
    if (cases.empty()) cases = default_series_cases(n, t);
    const VarianceProfile profile = make_profile(cfg.profile, n);
    const InitialLaw law = cfg.initial.law(n);
    const SystemParams symbolic = instantiate(cfg.system, Matrix::Zero(n, n));
    const MomentOracle oracle = MomentOracle::make(cfg.dist, profile, cfg.symmetric, law);

    SeriesReport rep;
    std::vector<double> grid{0.0};
    for (const auto& c : cases) {
        grid.insert(grid.end(), c.times.begin(), c.times.end());
        SeriesRow row;
        row.name = c.name;
        if (c.factors.size() == 1 && c.times.size() == 1)
            row.series = taylor_mean(c.factors[0], symbolic, oracle, c.times[0], cfg.params.taylor_order);
        else
            row.series = taylor_mean_multitime(c.factors, c.times, symbolic, oracle, cfg.params.taylor_order);
        rep.any_diverging = rep.any_diverging || row.series.diverging;
        rep.rows.push_back(std::move(row));
    }
    double horizon = *std::max_element(grid.begin(), grid.end());
    const IntegratorConfig icfg = IntegratorConfig::make(cfg.integrator.dt, horizon, grid);
    const std::size_t paths = static_cast<std::size_t>(cfg.params.replicas);
    std::vector<std::vector<double>> samples(cases.size(), std::vector<double>(paths));
    parallel_for(paths, cfg.threads, [&](std::size_t p) {
        const std::uint64_t sid = replica_stream(n, p);
        RngStream init_rng(cfg.seed, sid, Purpose::Initial);
        const Vector x0 = sample_initial(law, init_rng);
        RngStream jrng = coupling_stream(cfg.seed, sid, cfg.dist);
        CouplingMatrix c = sample_matrix(cfg.dist, profile, cfg.symmetric, jrng);
        auto params = std::make_shared<const SystemParams>(symbolic.with_coupling(c.j));
        RngStream noise(cfg.seed, sid, Purpose::Noise);
        Trajectory tr = simulate(params, x0, icfg, noise);
        for (std::size_t k = 0; k < cases.size(); ++k) {
            double v = 1.0;
            for (std::size_t f = 0; f < cases[k].factors.size(); ++f)
                v *= evaluate(cases[k].factors[f], c.j, tr.x.col(tr.index_of(cases[k].times[f])));
            samples[k][p] = v;
        }
    });
    for (std::size_t k = 0; k < cases.size(); ++k) {
        auto& row = rep.rows[k];
        row.mc = mean_se(samples[k]);
        double diff = row.series.value - row.mc.mean;
        row.z = row.mc.se > 0.0 ? diff / row.mc.se : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
    }
    return rep;
}

inline CsvTable series_table(const SeriesReport& r) {
    CsvTable t({"observable", "k", "term", "partial_sum", "mc_mean", "mc_se", "z"});
    for (const auto& row : r.rows)
        for (std::size_t k = 0; k < row.series.terms.size(); ++k)
            t.row()
                .add(row.name)
                .add(static_cast<int>(k))
                .add(row.series.terms[k])
                .add(row.series.partial_sums[k])
                .add(row.mc.mean)
                .add(row.mc.se)
                .add(row.z);
    return t;
}

// ---------------------------------------------------------------- entry moments

struct MomentRow {
    DistKind kind;
    int l = 0;
    double exact = 0.0;
    MeanSe empirical;
    double z = 0.0;
};

/// Empirical raw moments of every entry law against entry_moment.
inline std::vector<MomentRow> run_moments_check(const ExperimentConfig& cfg) {
    const std::size_t samples = static_cast<std::size_t>(cfg.params.moment_samples);
    if (samples < 2) throw InvalidArgument("moments-check needs at least 2 samples");
    const int lmax = cfg.params.max_moment;
    const std::vector<DistKind> kinds{DistKind::Gaussian, DistKind::Rademacher, DistKind::UniformCentered,
                                      DistKind::ExponentialCentered};
    std::vector<std::vector<MomentRow>> per(kinds.size());
    parallel_for(kinds.size(), cfg.threads, [&](std::size_t k) {
        EntryDistribution d{kinds[k]};
        RngStream rng(cfg.seed, k, Purpose::Generic);
        std::vector<double> sum(lmax + 1, 0.0), sumsq(lmax + 1, 0.0);
        for (std::size_t s = 0; s < samples; ++s) {
            double z = d.sample(rng), p = 1.0;
            for (int l = 0; l <= lmax; ++l) {
                sum[l] += p;
                sumsq[l] += p * p;
                p *= z;
            }
        }
        for (int l = 1; l <= lmax; ++l) {
            MomentRow row{kinds[k], l, d.moment(l), {}, 0.0};
            row.empirical.mean = sum[l] / samples;
            double var = std::max(0.0, sumsq[l] / samples - row.empirical.mean * row.empirical.mean);
            row.empirical.se = std::sqrt(var / (samples - 1));
            double diff = row.empirical.mean - row.exact;
            row.z = row.empirical.se > 0 ? diff / row.empirical.se : (std::abs(diff) < 1e-12 ? 0.0 : INFINITY);
            per[k].push_back(row);
        }
    });
    std::vector<MomentRow> out;
    for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
    return out;
}

inline CsvTable moments_table(const std::vector<MomentRow>& rows) {
    CsvTable t({"dist", "l", "exact", "empirical", "se", "z"});
    for (const auto& r : rows)
        t.row()
            .add(std::string(to_string(r.kind)))
            .add(r.l)
            .add(r.exact)
            .add(r.empirical.mean)
            .add(r.empirical.se)
            .add(r.z);
    return t;
}

// ---------------------------------------------------------------- single trajectory

struct SimulationResult {
    Trajectory trajectory;
    LocalizationReport localization;
    double sup_norm = 0.0;
    double growth_bound = 0.0;
};

/// One realization at the first N of the list, first arm, replica 0.
inline SimulationResult run_simulate(const ExperimentConfig& cfg) {
    if (cfg.params.ns.empty()) throw InvalidArgument("n list is empty");
    const int n = cfg.params.ns.front();
    const std::uint64_t sid = replica_stream(n, 0);
    RngStream init_rng(cfg.seed, sid, Purpose::Initial);
    const Vector x0 = sample_initial(cfg.initial.law(n), init_rng);
    RngStream jrng = coupling_stream(cfg.seed, sid, cfg.dist);
    CouplingMatrix c = sample_matrix(cfg.dist, make_profile(cfg.profile, n), cfg.symmetric, jrng);
    auto params = std::make_shared<const SystemParams>(instantiate(cfg.system, c.j));
    RngStream noise(cfg.seed, sid, Purpose::Noise);
    SimulationResult res{simulate(params, x0, integrator_for(cfg.integrator, cfg.observables), noise), {}, 0, 0};
    res.localization = localization_report(res.trajectory);
    res.sup_norm = sup_state_norm(res.trajectory);
    res.growth_bound = gronwall_bound(res.localization.r_effective, params->c_h(), params->c_lambda(),
                                      res.localization.horizon);
    return res;
}

} // namespace rmdiff
