#pragma once

// Dispatch of a RunConfig to its experiment and artifact output:
//   <out>/<experiment>.csv, <out>/summary.txt, <out>/config.resolved.ini
// and <out>/error.txt (key = value) on failure.

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "rmdiff/config.hpp"
#include "rmdiff/experiments.hpp"
#include "rmdiff/io.hpp"

namespace rmdiff {

enum ExitStatus : int { kOk = 0, kUsageError = 2, kRuntimeError = 3 };

/// Ordered key = value lines.
class Summary {
public:
    Summary& set(const std::string& key, const std::string& value) {
        items_.emplace_back(key, value);
        return *this;
    }
    Summary& set(const std::string& key, double v) { return set(key, format_double(v)); }
    Summary& set(const std::string& key, int v) { return set(key, std::to_string(v)); }
    Summary& set(const std::string& key, bool v) { return set(key, std::string(v ? "true" : "false")); }

    std::string render() const {
        std::string out;
        for (const auto& [k, v] : items_) out += k + " = " + v + "\n";
        return out;
    }

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

struct Artifacts {
    CsvTable table{std::vector<std::string>{}};
    Summary summary;
};

inline Artifacts compute_artifacts(const RunConfig& cfg) {
    const auto& e = cfg.exp;
    const std::string& kind = cfg.experiment;
    Artifacts a;
    a.summary.set("experiment", kind);
    a.summary.set("seed", std::to_string(e.seed));
    if (kind == "universality" || kind == "hopfield") {
        UniversalityReport r = kind == "hopfield" ? run_hopfield(e) : run_universality(e);
        a.table = universality_table(r);
        double worst = 0.0;
        for (const auto& row : r.rows) {
            double env = 3.0 * row.se + 5.0 / std::sqrt(static_cast<double>(row.n));
            worst = std::max(worst, std::abs(row.delta) / env);
        }
        a.summary.set("max_delta_over_envelope", worst);
        for (const auto& s : r.slopes) {
            a.summary.set("slope." + s.observable + ".available", s.available);
            if (!s.available) continue;
            a.summary.set("slope." + s.observable, s.slope);
            a.summary.set("slope." + s.observable + ".stderr", s.stderr_);
            a.summary.set("slope." + s.observable + ".lo", s.lo);
            a.summary.set("slope." + s.observable + ".hi", s.hi);
        }
    } else if (kind == "concentration") {
        ConcentrationReport r = run_concentration(e);
        a.table = concentration_table(r);
        for (const auto& row : r.rows)
            a.summary.set("replica_std." + row.functional + ".n" + std::to_string(row.n), row.replica_std);
    } else if (kind == "aging") {
        AgingReport r = run_aging(e);
        a.table = aging_table(r);
        double gap = 0.0;
        int dropped = 0;
        for (const auto& row : r.rows) {
            gap = std::max(gap, row.gap);
            dropped = std::max(dropped, row.dropped1 + row.dropped2);
        }
        a.summary.set("max_gap", gap);
        a.summary.set("dropped_replicas", dropped);
    } else if (kind == "rayleigh") {
        RayleighReport r = run_rayleigh(e);
        a.table = rayleigh_table(r);
        a.summary.set("max_final_gap", r.max_final_gap);
        a.summary.set("all_monotone", r.all_monotone);
        a.summary.set("max_arm_difference", r.max_arm_difference);
    } else if (kind == "taylor-check") {
        SeriesReport r = run_taylor_vs_mc(e);
        a.table = series_table(r);
        a.summary.set("diverging", r.any_diverging);
        for (const auto& row : r.rows) {
            a.summary.set("series." + row.name, row.series.value);
            a.summary.set("tail." + row.name, row.series.tail_bound);
            a.summary.set("z." + row.name, row.z);
        }
    } else if (kind == "moments-check") {
        auto rows = run_moments_check(e);
        a.table = moments_table(rows);
        double worst = 0.0;
        for (const auto& r : rows) worst = std::max(worst, std::abs(r.z));
        a.summary.set("max_abs_z", worst);
    } else if (kind == "simulate") {
        SimulationResult r = run_simulate(e);
        CsvTable t({"time", "coord", "X", "M"});
        for (int k = 0; k < r.trajectory.grid_size(); ++k)
            for (int i = 0; i < r.trajectory.n(); ++i)
                t.row().add(r.trajectory.times[k]).add(i + 1).add(r.trajectory.x(i, k)).add(r.trajectory.m(i, k));
        a.table = std::move(t);
        const auto& l = r.localization;
        a.summary.set("x0_sq", l.x0_sq);
        a.summary.set("coupling_sq", l.coupling_sq);
        a.summary.set("sup_mart_sq", l.sup_mart_sq);
        a.summary.set("r_effective", l.r_effective);
        a.summary.set("mix_norm", l.mix_norm);
        a.summary.set("sup_state_norm", r.sup_norm);
        a.summary.set("growth_bound", r.growth_bound);
        a.summary.set("growth_bound_holds", r.sup_norm <= r.growth_bound);
        a.summary.set("max_decomposition_residual", r.trajectory.max_decomposition_residual);
        for (const auto& o : e.observables)
            a.summary.set("observable." + o.name, evaluate_observable(o, r.trajectory));
    } else {
        throw InvalidArgument("unknown experiment '" + kind + "'");
    }
    return a;
}

inline void write_error_record(const std::filesystem::path& dir, int status, const std::string& kind,
                               const std::string& message) {
    std::string flat = message;
    for (char& ch : flat)
        if (ch == '\n') ch = ' ';
    std::string text = "status = " + std::to_string(status) + "\nerror = " + kind + "\nmessage = " + flat + "\n";
    try {
        write_text_atomic(dir / "error.txt", text);
    } catch (const std::exception&) {
    }
}

/// Run the configured experiment and write its artifacts. Returns the exit status;
/// failures are reported on `err` as a single key = value line and in error.txt.
inline int run(const RunConfig& cfg, std::ostream& err) {
    const std::filesystem::path dir = cfg.out.empty() ? std::filesystem::path(".") : std::filesystem::path(cfg.out);
    auto fail = [&](int status, const std::string& kind, const std::string& message) {
        err << "status=" << status << " error=" << kind << " message=\"" << message << "\"\n";
        write_error_record(dir, status, kind, message);
        return status;
    };
    if (!is_experiment_kind(cfg.experiment))
        return fail(kUsageError, "unknown-experiment", "unknown experiment '" + cfg.experiment + "'");
    try {
        const std::string hash = config_hash(cfg);
        Artifacts a = compute_artifacts(cfg);
        a.summary.set("config_hash", hash);
        write_text_atomic(dir / (cfg.experiment + ".csv"), a.table.render(hash));
        write_text_atomic(dir / "summary.txt", a.summary.render());
        write_text_atomic(dir / "config.resolved.ini", serialize(cfg));
    } catch (const InvalidArgument& e) {
        return fail(kUsageError, "invalid-argument", e.what());
    } catch (const std::exception& e) {
        return fail(kRuntimeError, "runtime", e.what());
    }
    return kOk;
}

} // namespace rmdiff
