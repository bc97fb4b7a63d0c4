#pragma once

// Line-oriented run configuration:
//
//   # comment
//   [section]
//   key = value
//   [observable NAME]
//   kind = autocorr
//
// Parsing is strict: unknown sections or keys, duplicate keys and malformed
// values are errors carrying the offending line number.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rmdiff/ensembles.hpp"
#include "rmdiff/error.hpp"
#include "rmdiff/experiments.hpp"
#include "rmdiff/io.hpp"

namespace rmdiff {

class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& what, int line)
        : InvalidArgument(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
    int line;
};

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"simulate", "universality", "concentration", "aging",
                                                "taylor-check", "moments-check", "hopfield", "rayleigh"};
    return kinds;
}

inline bool is_experiment_kind(const std::string& s) {
    for (const auto& k : experiment_kinds())
        if (k == s) return true;
    return false;
}

struct RunConfig {
    std::string experiment = "universality";
    std::string out = "out";
    ExperimentConfig exp;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Built-in defaults for an experiment kind (universality defaults for unknown kinds).
inline RunConfig default_config(const std::string& kind) {
    RunConfig c;
    c.experiment = kind;
    auto& e = c.exp;
    auto& sys = e.system;
    if (kind == "simulate") {
        e.params.ns = {64};
    } else if (kind == "concentration") {
        e.params.replicas = 500;
    } else if (kind == "aging" || kind == "rayleigh") {
        sys.kind = TemplateKind::Langevin;
        sys.beta = kInfiniteBeta;
        sys.confinement_auto = true;
        if (kind == "aging") {
            e.params.ns = {512};
            e.params.replicas = 200;
        } else {
            e.params.ns = {256};
            e.params.replicas = 2;
        }
    } else if (kind == "hopfield") {
        e.dist_alt = EntryDistribution{DistKind::UniformCentered};
        sys.kind = TemplateKind::Langevin;
        sys.beta = 1.0;
        sys.confinement_auto = true;
        sys.h = 0.2;
        e.params.ns = {32, 64, 128};
        e.params.replicas = 500;
    } else if (kind == "taylor-check") {
        e.profile = "full";
        e.params.replicas = 20000;
        e.integrator.horizon = 0.5;
    }
    return c;
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct Entry {
    std::string value;
    int line = 0;
};

struct Section {
    std::string name;
    std::string arg;
    int line = 0;
    std::map<std::string, Entry> entries;
};

inline std::vector<Section> tokenize(const std::string& text) {
    std::vector<Section> out;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("unterminated section header", line);
            std::string inner = trim(std::string_view(s).substr(1, s.size() - 2));
            if (inner.empty()) throw ConfigError("empty section name", line);
            Section sec;
            sec.line = line;
            auto sp = inner.find_first_of(" \t");
            sec.name = inner.substr(0, sp);
            if (sp != std::string::npos) sec.arg = trim(std::string_view(inner).substr(sp));
            out.push_back(std::move(sec));
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
        if (out.empty()) throw ConfigError("key outside of any section", line);
        std::string key = trim(std::string_view(s).substr(0, eq));
        std::string value = trim(std::string_view(s).substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", line);
        auto& entries = out.back().entries;
        if (auto it = entries.find(key); it != entries.end())
            throw ConfigError("duplicate key '" + key + "' (lines " + std::to_string(it->second.line) + " and " +
                                  std::to_string(line) + ")",
                              line);
        entries.emplace(key, Entry{value, line});
    }
    return out;
}

/// Typed access to one section; every key must be consumed.
class Reader {
public:
    explicit Reader(Section& s) : s_(s) {}

    template <class Fn> void get(const std::string& key, Fn&& fn) {
        auto it = s_.entries.find(key);
        if (it == s_.entries.end()) return;
        used_.insert(key);
        try {
            fn(it->second.value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("[" + s_.name + "] " + key + ": " + e.what(), it->second.line);
        }
    }

    int line_of(const std::string& key) const {
        auto it = s_.entries.find(key);
        return it == s_.entries.end() ? s_.line : it->second.line;
    }

    void finish() const {
        for (const auto& [key, e] : s_.entries)
            if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in [" + s_.name + "]", e.line);
    }

private:
    Section& s_;
    std::set<std::string> used_;
};

inline double parse_double(const std::string& s) {
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InvalidArgument("not a number: '" + s + "'");
    return v;
}

template <class Int> Int parse_int(const std::string& s) {
    Int v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InvalidArgument("not an integer: '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw InvalidArgument("not a boolean: '" + s + "'");
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (const auto& p : split(s, ',')) out.push_back(parse_double(p));
    return out;
}

inline std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    if (trim(s).empty()) return out;
    for (const auto& p : split(s, ',')) out.push_back(parse_int<int>(p));
    return out;
}

/// Rows separated by ';', blocks by ',' or whitespace.
inline std::vector<std::vector<BuildingBlock>> parse_blocks(const std::string& s) {
    std::vector<std::vector<BuildingBlock>> rows;
    for (const auto& row : split(s, ';')) {
        std::vector<BuildingBlock> r;
        std::string tok;
        std::istringstream in(row);
        std::string word;
        while (in >> word)
            for (const auto& part : split(word, ','))
                if (!part.empty()) r.push_back(parse_block(part));
        if (r.empty()) throw InvalidArgument("empty block row");
        rows.push_back(std::move(r));
    }
    return rows;
}

inline bool is_number(const std::string& s) {
    try {
        parse_double(s);
        return true;
    } catch (const InvalidArgument&) {
        return false;
    }
}

inline bool is_preset_profile(const std::string& s) { return s == "offdiag" || s == "full" || s == "block2"; }

template <class T, class Fmt> std::string join(const std::vector<T>& v, Fmt&& fmt, const char* sep = ", ") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + fmt(v[i]);
    return out;
}

inline std::string fmt_num(double v) { return format_double(v); }

} // namespace detail

inline void validate(const RunConfig& c, const std::map<std::string, int>& lines = {}) {
    auto line = [&](const std::string& k) {
        auto it = lines.find(k);
        return it == lines.end() ? 0 : it->second;
    };
    const auto& e = c.exp;
    if (e.threads < 1) throw ConfigError("threads must be >= 1", line("run.threads"));
    if (!(e.integrator.dt > 0.0)) throw ConfigError("dt must be positive", line("integrator.dt"));
    if (!(e.integrator.horizon >= 0.0)) throw ConfigError("horizon must be non-negative", line("integrator.horizon"));
    if (e.integrator.grid_points < 1) throw ConfigError("grid_points must be >= 1", line("integrator.grid_points"));
    if (e.params.ns.empty()) throw ConfigError("n list is empty", line("experiment.n"));
    for (int n : e.params.ns)
        if (n < 1) throw ConfigError("dimensions must be positive", line("experiment.n"));
    if (e.params.replicas < 1) throw ConfigError("replicas must be >= 1", line("experiment.replicas"));
    if (!detail::is_preset_profile(e.profile)) {
        if (!std::filesystem::exists(e.profile))
            throw ConfigError("profile file '" + e.profile + "' does not exist", line("ensemble.profile"));
        VarianceProfile p;
        p.m = load_matrix_csv(e.profile);
        try {
            p.validate();
        } catch (const InvalidArgument& err) {
            throw ConfigError(err.what(), line("ensemble.profile"));
        }
        if (e.symmetric && !p.is_symmetric())
            throw ConfigError("symmetric ensemble with an asymmetric variance profile", line("ensemble.profile"));
    }
    const auto& s = e.system;
    if (!(s.beta > 0.0)) throw ConfigError("beta must be positive", line("system.beta"));
    if (s.confinement < 0.0) throw ConfigError("confinement must be non-negative", line("system.confinement"));
    if (!(s.margin > 0.0)) throw ConfigError("margin must be positive", line("system.margin"));
    for (double l : e.params.aging_lambda)
        if (l < 1.0) throw ConfigError("aging_lambda entries must be >= 1", line("experiment.aging_lambda"));
    for (double v : e.params.aging_s)
        if (v < 0.0) throw ConfigError("aging_s entries must be non-negative", line("experiment.aging_s"));
    if (e.params.taylor_order < 0) throw ConfigError("taylor_order must be >= 0", line("experiment.taylor_order"));
    if (!(e.params.rayleigh_record > 0.0))
        throw ConfigError("rayleigh_record must be positive", line("experiment.rayleigh_record"));
    for (const auto& o : e.observables) {
        const int l = line("observable." + o.name);
        for (double t : o.times)
            if (t < 0.0 || t > e.integrator.horizon + 1e-12)
                throw ConfigError("observable '" + o.name + "' time outside [0, horizon]", l);
        std::size_t need = o.kind == ObservableKind::Autocorr || o.kind == ObservableKind::Quadratic ? 2 : 1;
        if (o.kind == ObservableKind::Tensor) need = o.blocks.empty() ? 1 : o.blocks[0].size();
        if (o.times.size() != need)
            throw ConfigError("observable '" + o.name + "' needs " + std::to_string(need) + " time(s)", l);
        if (o.kind == ObservableKind::Quadratic && (o.blocks.size() != 1 || o.blocks[0].size() != 2))
            throw ConfigError("quadratic observable '" + o.name + "' needs blocks = Y, Y'", l);
        if (o.kind == ObservableKind::Tensor) {
            if (o.blocks.empty()) throw ConfigError("tensor observable '" + o.name + "' needs blocks", l);
            for (const auto& row : o.blocks)
                if (row.size() != o.times.size())
                    throw ConfigError("tensor observable '" + o.name + "' block rows must match times", l);
        }
        if (!detail::is_number(o.weights) && !std::filesystem::exists(o.weights))
            throw ConfigError("weights file '" + o.weights + "' does not exist", l);
    }
}

/// Parse and validate. `forced_kind`, when non-empty, replaces the [run] experiment
/// (the CLI subcommand) and selects the defaults.
inline RunConfig parse_config(const std::string& text, const std::string& forced_kind = "") {
    using namespace detail;
    auto sections = tokenize(text);
    std::string kind = forced_kind;
    int kind_line = 0;
    if (kind.empty()) {
        for (auto& s : sections)
            if (s.name == "run")
                if (auto it = s.entries.find("experiment"); it != s.entries.end()) {
                    kind = it->second.value;
                    kind_line = it->second.line;
                }
        if (kind.empty()) kind = "universality";
    }
    RunConfig c = default_config(kind);
    c.experiment = kind;
    (void)kind_line;
    auto& e = c.exp;
    std::map<std::string, int> lines;
    std::set<std::string> seen;
    std::set<std::string> observable_names;
    for (auto& s : sections) {
        if (s.name != "observable") {
            if (!s.arg.empty()) throw ConfigError("section [" + s.name + "] takes no argument", s.line);
            if (!seen.insert(s.name).second) throw ConfigError("duplicate section [" + s.name + "]", s.line);
        }
        Reader r(s);
        for (const auto& [k, v] : s.entries) lines[s.name + "." + k] = v.line;
        if (s.name == "run") {
            r.get("experiment", [&](const std::string&) {});
            r.get("threads", [&](const std::string& v) { e.threads = parse_int<int>(v); });
            r.get("out", [&](const std::string& v) { c.out = v; });
        } else if (s.name == "ensemble") {
            r.get("dist", [&](const std::string& v) { e.dist = EntryDistribution{parse_dist_kind(v)}; });
            r.get("dist_alt", [&](const std::string& v) { e.dist_alt = EntryDistribution{parse_dist_kind(v)}; });
            r.get("symmetric", [&](const std::string& v) { e.symmetric = parse_bool(v); });
            r.get("profile", [&](const std::string& v) { e.profile = v; });
            r.get("seed", [&](const std::string& v) { e.seed = parse_int<std::uint64_t>(v); });
        } else if (s.name == "initial") {
            r.get("dist", [&](const std::string& v) { e.initial.dist = EntryDistribution{parse_dist_kind(v)}; });
            r.get("loc", [&](const std::string& v) { e.initial.loc = parse_double(v); });
            r.get("scale", [&](const std::string& v) { e.initial.scale = parse_double(v); });
        } else if (s.name == "system") {
            auto& t = e.system;
            r.get("template", [&](const std::string& v) {
                if (v == "linear")
                    t.kind = TemplateKind::Linear;
                else if (v == "langevin")
                    t.kind = TemplateKind::Langevin;
                else
                    throw InvalidArgument("template must be linear or langevin");
            });
            r.get("lambda", [&](const std::string& v) { t.lambda = parse_double(v); });
            r.get("h", [&](const std::string& v) { t.h = parse_double(v); });
            r.get("sigma0", [&](const std::string& v) { t.sigma0 = parse_double(v); });
            r.get("sigma_mult", [&](const std::string& v) { t.sigma_mult = parse_double(v); });
            r.get("beta", [&](const std::string& v) { t.beta = parse_double(v); });
            r.get("confinement", [&](const std::string& v) {
                if (v == "auto") {
                    t.confinement_auto = true;
                } else {
                    t.confinement_auto = false;
                    t.confinement = parse_double(v);
                }
            });
            r.get("margin", [&](const std::string& v) { t.margin = parse_double(v); });
        } else if (s.name == "integrator") {
            r.get("scheme", [&](const std::string& v) {
                if (v != "euler_maruyama") throw InvalidArgument("only euler_maruyama is available");
            });
            r.get("dt", [&](const std::string& v) { e.integrator.dt = parse_double(v); });
            r.get("horizon", [&](const std::string& v) { e.integrator.horizon = parse_double(v); });
            r.get("grid_points", [&](const std::string& v) { e.integrator.grid_points = parse_int<int>(v); });
        } else if (s.name == "experiment") {
            auto& p = e.params;
            r.get("n", [&](const std::string& v) { p.ns = parse_ints(v); });
            r.get("replicas", [&](const std::string& v) { p.replicas = parse_int<int>(v); });
            r.get("aging_s", [&](const std::string& v) { p.aging_s = parse_doubles(v); });
            r.get("aging_lambda", [&](const std::string& v) { p.aging_lambda = parse_doubles(v); });
            r.get("tail_lambda", [&](const std::string& v) { p.tail_lambda = parse_doubles(v); });
            r.get("rayleigh_horizon", [&](const std::string& v) { p.rayleigh_horizon = parse_double(v); });
            r.get("rayleigh_record", [&](const std::string& v) { p.rayleigh_record = parse_double(v); });
            r.get("taylor_order", [&](const std::string& v) { p.taylor_order = parse_int<int>(v); });
            r.get("taylor_t", [&](const std::string& v) { p.taylor_t = parse_double(v); });
            r.get("taylor_n", [&](const std::string& v) { p.taylor_n = parse_int<int>(v); });
            r.get("moment_samples", [&](const std::string& v) { p.moment_samples = parse_int<int>(v); });
            r.get("max_moment", [&](const std::string& v) { p.max_moment = parse_int<int>(v); });
        } else if (s.name == "observable") {
            if (s.arg.empty() || s.arg.find_first_of(" \t,;") != std::string::npos)
                throw ConfigError("[observable NAME] needs a single-word name", s.line);
            if (!observable_names.insert(s.arg).second)
                throw ConfigError("duplicate observable '" + s.arg + "'", s.line);
            lines["observable." + s.arg] = s.line;
            ObservableDef o;
            o.name = s.arg;
            bool has_kind = false;
            r.get("kind", [&](const std::string& v) {
                o.kind = parse_observable_kind(v);
                has_kind = true;
            });
            r.get("times", [&](const std::string& v) { o.times = parse_doubles(v); });
            r.get("blocks", [&](const std::string& v) { o.blocks = parse_blocks(v); });
            r.get("a", [&](const std::string& v) { o.weights = v; });
            if (!has_kind) throw ConfigError("observable '" + o.name + "' has no kind", s.line);
            e.observables.push_back(std::move(o));
        } else {
            throw ConfigError("unknown section [" + s.name + "]", s.line);
        }
        r.finish();
    }
    validate(c, lines);
    return c;
}

/// Full resolved configuration, defaults included. parse_config(serialize(c)) == c.
inline std::string serialize(const RunConfig& c) {
    using detail::fmt_num;
    const auto& e = c.exp;
    std::ostringstream os;
    os << "[run]\n";
    os << "experiment = " << c.experiment << "\n";
    os << "threads = " << e.threads << "\n";
    os << "out = " << c.out << "\n\n";
    os << "[ensemble]\n";
    os << "dist = " << to_string(e.dist.kind) << "\n";
    os << "dist_alt = " << to_string(e.dist_alt.kind) << "\n";
    os << "symmetric = " << (e.symmetric ? "true" : "false") << "\n";
    os << "profile = " << e.profile << "\n";
    os << "seed = " << e.seed << "\n\n";
    os << "[initial]\n";
    os << "dist = " << to_string(e.initial.dist.kind) << "\n";
    os << "loc = " << fmt_num(e.initial.loc) << "\n";
    os << "scale = " << fmt_num(e.initial.scale) << "\n\n";
    const auto& t = e.system;
    os << "[system]\n";
    os << "template = " << (t.kind == TemplateKind::Linear ? "linear" : "langevin") << "\n";
    os << "lambda = " << fmt_num(t.lambda) << "\n";
    os << "h = " << fmt_num(t.h) << "\n";
    os << "sigma0 = " << fmt_num(t.sigma0) << "\n";
    os << "sigma_mult = " << fmt_num(t.sigma_mult) << "\n";
    os << "beta = " << fmt_num(t.beta) << "\n";
    os << "confinement = " << (t.confinement_auto ? std::string("auto") : fmt_num(t.confinement)) << "\n";
    os << "margin = " << fmt_num(t.margin) << "\n\n";
    os << "[integrator]\n";
    os << "scheme = euler_maruyama\n";
    os << "dt = " << fmt_num(e.integrator.dt) << "\n";
    os << "horizon = " << fmt_num(e.integrator.horizon) << "\n";
    os << "grid_points = " << e.integrator.grid_points << "\n\n";
    const auto& p = e.params;
    os << "[experiment]\n";
    os << "n = " << detail::join(p.ns, [](int v) { return std::to_string(v); }) << "\n";
    os << "replicas = " << p.replicas << "\n";
    os << "aging_s = " << detail::join(p.aging_s, fmt_num) << "\n";
    os << "aging_lambda = " << detail::join(p.aging_lambda, fmt_num) << "\n";
    os << "tail_lambda = " << detail::join(p.tail_lambda, fmt_num) << "\n";
    os << "rayleigh_horizon = " << fmt_num(p.rayleigh_horizon) << "\n";
    os << "rayleigh_record = " << fmt_num(p.rayleigh_record) << "\n";
    os << "taylor_order = " << p.taylor_order << "\n";
    os << "taylor_t = " << fmt_num(p.taylor_t) << "\n";
    os << "taylor_n = " << p.taylor_n << "\n";
    os << "moment_samples = " << p.moment_samples << "\n";
    os << "max_moment = " << p.max_moment << "\n";
    for (const auto& o : e.observables) {
        os << "\n[observable " << o.name << "]\n";
        os << "kind = " << to_string(o.kind) << "\n";
        os << "times = " << detail::join(o.times, fmt_num) << "\n";
        if (!o.blocks.empty()) {
            os << "blocks = ";
            for (std::size_t r = 0; r < o.blocks.size(); ++r) {
                os << (r ? "; " : "");
                for (std::size_t k = 0; k < o.blocks[r].size(); ++k) os << (k ? ", " : "") << to_string(o.blocks[r][k]);
            }
            os << "\n";
        }
        os << "a = " << o.weights << "\n";
    }
    return os.str();
}

/// Hash of the resolved configuration; thread count and output directory excluded.
inline std::string config_hash(const RunConfig& c) {
    RunConfig copy = c;
    copy.exp.threads = 1;
    copy.out.clear();
    return hex64(fnv1a(serialize(copy)));
}

} // namespace rmdiff
