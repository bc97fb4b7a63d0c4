#pragma once

// Symbolic expansion of the diffusion generator
//   L = L_J + L_Lambda + L_h + L_Delta
//     = sum_ij g J_ij x_i d_j + sum_ij Lambda_ij x_i d_j + sum_j h_j d_j
//       + sum_j (sum_{i=0..N} sigma_ij x_i)^2 d_j d_j
// acting on monomials in (J_ij) and (x_i), with exact expectations over
// independent (J, X_0) via moment oracles, and truncated semigroup series.
//
// Coordinates are 1-based throughout this header; index 0 stands for the
// constant x_0 = 1 (in x-factors) or the constant diffusion row (in sigma pairs).
// Lambda, h and sigma are deterministic and fold into coefficients when a
// letter is applied; only J-entries stay symbolic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rmdiff/ensembles.hpp"
#include "rmdiff/error.hpp"
#include "rmdiff/sde.hpp"

namespace rmdiff {

using Index = std::uint16_t;

struct IndexPair {
    Index i = 0;
    Index j = 0;

    /// (min, max) when the ensemble is symmetric, unchanged otherwise.
    IndexPair canonical(bool symmetric) const {
        return (symmetric && i > j) ? IndexPair{j, i} : *this;
    }
    friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

enum class Letter { J, Lambda, H, Delta };

inline const char* to_string(Letter l) {
    switch (l) {
    case Letter::J: return "LJ";
    case Letter::Lambda: return "LLambda";
    case Letter::H: return "Lh";
    case Letter::Delta: return "LDelta";
    }
    return "?";
}

/// coeff * prod J_{j_pairs} * prod x_{x_idx}. The Lambda/h/sigma parts only
/// record which parameters were folded into coeff.
struct Monomial {
    double coeff = 1.0;
    std::vector<IndexPair> j_pairs;
    std::vector<IndexPair> lam_pairs;
    std::vector<Index> h_idx;
    std::vector<IndexPair> sig_pairs;
    std::vector<Index> x_idx;

    /// prod_k x_{coords[k]}.
    static Monomial x(std::initializer_list<int> coords, double coeff = 1.0) {
        Monomial m;
        m.coeff = coeff;
        for (int c : coords) m.x_idx.push_back(static_cast<Index>(c));
        std::sort(m.x_idx.begin(), m.x_idx.end());
        return m;
    }

    int degree() const { return static_cast<int>(x_idx.size()); }
    int j_degree() const { return static_cast<int>(j_pairs.size()); }

    void canonicalize(bool symmetric) {
        for (auto& p : j_pairs) p = p.canonical(symmetric);
        std::sort(j_pairs.begin(), j_pairs.end());
        std::sort(lam_pairs.begin(), lam_pairs.end());
        std::sort(h_idx.begin(), h_idx.end());
        std::sort(sig_pairs.begin(), sig_pairs.end());
        std::sort(x_idx.begin(), x_idx.end());
    }

    void drop_audit() {
        lam_pairs.clear();
        h_idx.clear();
        sig_pairs.clear();
    }

    bool same_shape(const Monomial& o) const {
        return j_pairs == o.j_pairs && x_idx == o.x_idx && lam_pairs == o.lam_pairs && h_idx == o.h_idx &&
               sig_pairs == o.sig_pairs;
    }

    /// Largest coordinate index appearing anywhere.
    int max_index() const {
        int best = 0;
        for (auto p : j_pairs) best = std::max<int>({best, p.i, p.j});
        for (auto v : x_idx) best = std::max<int>(best, v);
        return best;
    }
};

struct MonomialShapeHash {
    std::size_t operator()(const Monomial& m) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        auto mix = [&](std::uint64_t v) {
            h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        };
        for (auto p : m.j_pairs) mix((std::uint64_t(p.i) << 16) | p.j);
        mix(0xffff1);
        for (auto v : m.x_idx) mix(v);
        mix(0xffff2);
        for (auto p : m.lam_pairs) mix((std::uint64_t(p.i) << 16) | p.j);
        mix(0xffff3);
        for (auto v : m.h_idx) mix(v);
        mix(0xffff4);
        for (auto p : m.sig_pairs) mix((std::uint64_t(p.i) << 16) | p.j);
        return static_cast<std::size_t>(h);
    }
};

struct MonomialShapeEq {
    bool operator()(const Monomial& a, const Monomial& b) const noexcept { return a.same_shape(b); }
};

/// Sum of monomials with like terms collected by canonical shape.
/// With keep_audit = false the Lambda/h/sigma records are dropped on insertion,
/// so terms differing only in which deterministic parameters produced them merge.
class Polynomial {
public:
    explicit Polynomial(bool symmetric = false, bool keep_audit = false)
        : symmetric_(symmetric), keep_audit_(keep_audit) {}

    static Polynomial from(const Monomial& m, bool symmetric = false, bool keep_audit = false) {
        Polynomial p(symmetric, keep_audit);
        p.add(m);
        return p;
    }

    bool symmetric() const { return symmetric_; }
    bool keep_audit() const { return keep_audit_; }

    void add(Monomial m) {
        if (m.coeff == 0.0) return;
        if (!keep_audit_) m.drop_audit();
        m.canonicalize(symmetric_);
        double c = m.coeff;
        m.coeff = 0.0;
        terms_[std::move(m)] += c;
    }

    void add(const Polynomial& other, double scale = 1.0) {
        for (const auto& [shape, c] : other.terms_) {
            Monomial m = shape;
            m.coeff = c * scale;
            add(std::move(m));
        }
    }

    /// Remove entries whose coefficients cancelled to exactly zero.
    void normalize() {
        for (auto it = terms_.begin(); it != terms_.end();) {
            if (it->second == 0.0)
                it = terms_.erase(it);
            else
                ++it;
        }
    }

    std::size_t size() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }

    /// Monomials with their collected coefficients, in canonical (sorted) order.
    std::vector<Monomial> monomials() const {
        std::vector<Monomial> out;
        out.reserve(terms_.size());
        for (const auto& [shape, c] : terms_) {
            Monomial m = shape;
            m.coeff = c;
            out.push_back(std::move(m));
        }
        std::sort(out.begin(), out.end(), [](const Monomial& a, const Monomial& b) {
            return std::tie(a.j_pairs, a.x_idx, a.lam_pairs, a.h_idx, a.sig_pairs) <
                   std::tie(b.j_pairs, b.x_idx, b.lam_pairs, b.h_idx, b.sig_pairs);
        });
        return out;
    }

    template <class Fn> void for_each(Fn&& fn) const {
        for (const auto& [shape, c] : terms_) fn(shape, c);
    }

private:
    bool symmetric_;
    bool keep_audit_;
    std::unordered_map<Monomial, double, MonomialShapeHash, MonomialShapeEq> terms_;
};

/// Numeric value of a monomial at J (0-based N x N matrix) and x (0-based, N entries).
inline double evaluate(const Monomial& m, const Matrix& j, const Vector& x) {
    double v = m.coeff;
    for (auto p : m.j_pairs) v *= j(p.i - 1, p.j - 1);
    for (auto idx : m.x_idx)
        if (idx != 0) v *= x(idx - 1);
    return v;
}

inline double evaluate(const Polynomial& p, const Matrix& j, const Vector& x) {
    double acc = 0.0;
    p.for_each([&](const Monomial& shape, double c) {
        Monomial m = shape;
        m.coeff = c;
        acc += evaluate(m, j, x);
    });
    return acc;
}

inline Polynomial multiply(const Polynomial& a, const Polynomial& b) {
    Polynomial out(a.symmetric() || b.symmetric(), a.keep_audit() && b.keep_audit());
    a.for_each([&](const Monomial& ma, double ca) {
        b.for_each([&](const Monomial& mb, double cb) {
            Monomial m = ma;
            m.coeff = ca * cb;
            m.j_pairs.insert(m.j_pairs.end(), mb.j_pairs.begin(), mb.j_pairs.end());
            m.lam_pairs.insert(m.lam_pairs.end(), mb.lam_pairs.begin(), mb.lam_pairs.end());
            m.h_idx.insert(m.h_idx.end(), mb.h_idx.begin(), mb.h_idx.end());
            m.sig_pairs.insert(m.sig_pairs.end(), mb.sig_pairs.begin(), mb.sig_pairs.end());
            m.x_idx.insert(m.x_idx.end(), mb.x_idx.begin(), mb.x_idx.end());
            out.add(std::move(m));
        });
    });
    out.normalize();
    return out;
}

/// How L_J treats the coupling: keep J_ij as symbols, or substitute the values of params.j().
enum class CouplingMode { Symbolic, Numeric };

namespace detail {

inline void replace_one(std::vector<Index>& xs, Index from, Index to) {
    auto it = std::find(xs.begin(), xs.end(), from);
    *it = to;
}

} // namespace detail

/// Emit the monomials of `letter` applied to `m`, one per (distinct x-coordinate j,
/// source index) combination, before any like-term collection. Derivatives act
/// per distinct coordinate j of multiplicity c with factors c (first order) and
/// c(c-1) (second order).
template <class Emit>
void for_each_letter_term(const Monomial& m, Letter letter, const SystemParams& params, CouplingMode mode,
                          Emit&& emit) {
    const int n = params.n();
    if (m.max_index() > n) throw InvalidArgument("monomial index exceeds system dimension");
    std::vector<Index> distinct;
    std::vector<int> mult;
    for (Index v : m.x_idx) {
        if (v == 0) continue;
        if (!distinct.empty() && distinct.back() == v)
            ++mult.back();
        else {
            distinct.push_back(v);
            mult.push_back(1);
        }
    }
    // x_idx is sorted, but tolerate unsorted input
    if (!std::is_sorted(m.x_idx.begin(), m.x_idx.end())) {
        Monomial sorted = m;
        std::sort(sorted.x_idx.begin(), sorted.x_idx.end());
        for_each_letter_term(sorted, letter, params, mode, emit);
        return;
    }
    for (std::size_t d = 0; d < distinct.size(); ++d) {
        const Index j = distinct[d];
        const double c = mult[d];
        const int col = j - 1;
        switch (letter) {
        case Letter::H: {
            double hj = params.h()(col);
            if (hj == 0.0) break;
            Monomial t = m;
            t.coeff *= c * hj;
            t.h_idx.push_back(j);
            detail::replace_one(t.x_idx, j, 0);
            emit(std::move(t));
            break;
        }
        case Letter::J: {
            const double g = params.coupling_gain();
            for (int i = 1; i <= n; ++i) {
                double w = c * g;
                if (mode == CouplingMode::Numeric) {
                    w *= params.j()(i - 1, col);
                    if (w == 0.0) continue;
                }
                Monomial t = m;
                t.coeff *= w;
                if (mode == CouplingMode::Symbolic) t.j_pairs.push_back({static_cast<Index>(i), j});
                detail::replace_one(t.x_idx, j, static_cast<Index>(i));
                emit(std::move(t));
            }
            break;
        }
        case Letter::Lambda: {
            for (const auto& e : params.lambda_column(col)) {
                Monomial t = m;
                t.coeff *= c * e.value;
                t.lam_pairs.push_back({static_cast<Index>(e.row + 1), j});
                detail::replace_one(t.x_idx, j, static_cast<Index>(e.row + 1));
                emit(std::move(t));
            }
            break;
        }
        case Letter::Delta: {
            if (c < 2) break;
            const auto& colsig = params.sigma_column(col);
            for (const auto& a : colsig)
                for (const auto& b : colsig) {
                    Monomial t = m;
                    t.coeff *= c * (c - 1) * a.value * b.value;
                    t.sig_pairs.push_back({static_cast<Index>(a.row), j});
                    t.sig_pairs.push_back({static_cast<Index>(b.row), j});
                    detail::replace_one(t.x_idx, j, static_cast<Index>(a.row));
                    detail::replace_one(t.x_idx, j, static_cast<Index>(b.row));
                    emit(std::move(t));
                }
            break;
        }
        }
    }
}

inline Polynomial apply_letter(const Polynomial& p, Letter letter, const SystemParams& params,
                               CouplingMode mode = CouplingMode::Symbolic) {
    Polynomial out(p.symmetric(), p.keep_audit());
    p.for_each([&](const Monomial& shape, double c) {
        Monomial m = shape;
        m.coeff = c;
        for_each_letter_term(m, letter, params, mode, [&](Monomial t) { out.add(std::move(t)); });
    });
    out.normalize();
    return out;
}

/// L p = (L_J + L_Lambda + L_h + L_Delta) p.
inline Polynomial apply_generator(const Polynomial& p, const SystemParams& params,
                                  CouplingMode mode = CouplingMode::Symbolic) {
    Polynomial out(p.symmetric(), p.keep_audit());
    p.for_each([&](const Monomial& shape, double c) {
        Monomial m = shape;
        m.coeff = c;
        for (Letter l : {Letter::J, Letter::Lambda, Letter::H, Letter::Delta})
            for_each_letter_term(m, l, params, mode, [&](Monomial t) { out.add(std::move(t)); });
    });
    out.normalize();
    return out;
}

/// Exact raw moments of the coupling entries and of the initial coordinates.
struct MomentOracle {
    int n = 0;
    bool symmetric = false;
    /// E[A_pair^l] (unscaled A; J = A / sqrt N). 1-based pair.
    std::function<double(IndexPair, int)> entry_moment;
    /// E[X_i(0)^l], 1-based i.
    std::function<double(int, int)> init_moment;

    /// A_ij = sqrt(m_ij) Z with Z ~ dist.
    static MomentOracle make(const EntryDistribution& dist, const VarianceProfile& profile, bool symmetric,
                             const InitialLaw& init) {
        if (profile.size() != init.size()) throw InvalidArgument("profile and initial law dimensions differ");
        MomentOracle o;
        o.n = profile.size();
        o.symmetric = symmetric;
        Matrix m = profile.m;
        o.entry_moment = [dist, m](IndexPair p, int l) {
            if (l == 0) return 1.0;
            double var = m(p.i - 1, p.j - 1);
            if (var == 0.0) return 0.0;
            return std::pow(var, 0.5 * l) * dist.moment(l);
        };
        o.init_moment = [init](int i, int l) { return init.moment(i - 1, l); };
        return o;
    }
};

/// coeff * prod_{distinct pairs} N^{-l/2} E[A^l] * prod_{distinct i>=1} E[X_i(0)^{l_i}].
inline double expected_value(const Monomial& m, const MomentOracle& oracle) {
    if (m.coeff == 0.0) return 0.0;
    double v = m.coeff;
    std::vector<IndexPair> pairs = m.j_pairs;
    for (auto& p : pairs) p = p.canonical(oracle.symmetric);
    std::sort(pairs.begin(), pairs.end());
    const double n = oracle.n;
    for (std::size_t a = 0; a < pairs.size();) {
        std::size_t b = a;
        while (b < pairs.size() && pairs[b] == pairs[a]) ++b;
        const int l = static_cast<int>(b - a);
        v *= std::pow(n, -0.5 * l) * oracle.entry_moment(pairs[a], l);
        if (v == 0.0) return 0.0;
        a = b;
    }
    std::vector<Index> xs = m.x_idx;
    std::sort(xs.begin(), xs.end());
    for (std::size_t a = 0; a < xs.size();) {
        std::size_t b = a;
        while (b < xs.size() && xs[b] == xs[a]) ++b;
        if (xs[a] != 0) v *= oracle.init_moment(xs[a], static_cast<int>(b - a));
        if (v == 0.0) return 0.0;
        a = b;
    }
    return v;
}

inline double expected_value(const Polynomial& p, const MomentOracle& oracle) {
    // Sum in canonical order so the result does not depend on hash-table layout.
    double acc = 0.0;
    for (const auto& m : p.monomials()) acc += expected_value(m, oracle);
    return acc;
}

/// Multiplicity counts of a J-pair sequence alpha and its complement beta in a monomial.
struct MultiplicityProfile {
    int i_alpha = 0;      // distinct pairs in alpha
    int i_alpha_1 = 0;    // pairs appearing exactly once in alpha
    int i_plus = 0;       // i_alpha_1 + [no pair of alpha appears more than twice]
    int i_star = 0;       // distinct pairs of beta not in alpha
    int i_total = 0;      // distinct pairs in alpha + beta
    int k_j = 0;          // |beta|
    int s = 0;            // |alpha|
};

namespace detail {

inline std::map<IndexPair, int> count_pairs(const std::vector<IndexPair>& ps, bool symmetric) {
    std::map<IndexPair, int> out;
    for (auto p : ps) ++out[p.canonical(symmetric)];
    return out;
}

} // namespace detail

inline MultiplicityProfile multiplicity_profile(const Monomial& m, const std::vector<IndexPair>& alpha,
                                                bool symmetric) {
    auto all = detail::count_pairs(m.j_pairs, symmetric);
    auto a = detail::count_pairs(alpha, symmetric);
    MultiplicityProfile prof;
    bool none_above_two = true;
    for (const auto& [pair, c] : a) {
        auto it = all.find(pair);
        if (it == all.end() || it->second < c)
            throw InvalidArgument("alpha is not contained in the monomial's J-pairs");
        if (c == 1) ++prof.i_alpha_1;
        if (c > 2) none_above_two = false;
    }
    prof.i_alpha = static_cast<int>(a.size());
    prof.i_plus = prof.i_alpha_1 + (none_above_two ? 1 : 0);
    prof.i_total = static_cast<int>(all.size());
    prof.i_star = prof.i_total - prof.i_alpha;
    prof.s = static_cast<int>(alpha.size());
    prof.k_j = static_cast<int>(m.j_pairs.size()) - prof.s;
    return prof;
}

/// TRUE when the expectation of `m` is the same under any two mean-zero ensembles
/// with matching variance profile: some pair appears exactly once (both zero) or
/// every pair appears exactly twice (only variances enter).
inline bool difference_vanishes(const Monomial& m, const std::vector<IndexPair>& alpha, bool symmetric) {
    (void)multiplicity_profile(m, alpha, symmetric); // containment check
    auto all = detail::count_pairs(m.j_pairs, symmetric);
    bool all_at_least_two = true, some_above_two = false;
    for (const auto& [pair, c] : all) {
        if (c < 2) all_at_least_two = false;
        if (c > 2) some_above_two = true;
    }
    return !(all_at_least_two && some_above_two);
}

struct TaylorOptions {
    int max_order = 16;                 // cap on K
    std::size_t max_terms = 4'000'000;  // polynomial size guard
    bool throw_on_growth = false;       // turn the growth warning into an error
    std::size_t max_symbolic_dim = 8;
};

/// Truncated series sum_{k<=K} t^k/k! a_k with a heuristic tail estimate.
struct TaylorResult {
    double value = 0.0;
    double tail_bound = 0.0;            // heuristic, from the last two term pairs
    bool diverging = false;             // last term pair not smaller than the previous pair
    std::vector<double> terms;          // t^k/k! * a_k
    std::vector<double> partial_sums;
};

namespace detail {

inline void check_order(int order, const TaylorOptions& opt) {
    if (order < 0) throw InvalidArgument("truncation order must be non-negative");
    if (order > opt.max_order)
        throw InvalidArgument("truncation order " + std::to_string(order) + " exceeds cap " +
                              std::to_string(opt.max_order));
}

inline void check_size(const Polynomial& p, const TaylorOptions& opt) {
    if (p.size() > opt.max_terms)
        throw NumericalError("polynomial expansion exceeded " + std::to_string(opt.max_terms) + " terms");
}

/// Fill value, tail estimate and divergence flag from the term list. Terms are
/// grouped in consecutive pairs so that parity-vanishing orders do not trip the check.
inline void finish(TaylorResult& r, const TaylorOptions& opt) {
    double acc = 0.0;
    r.partial_sums.clear();
    for (double t : r.terms) {
        acc += t;
        r.partial_sums.push_back(acc);
    }
    r.value = acc;
    const std::size_t k = r.terms.size();
    if (k >= 4) {
        double last = std::abs(r.terms[k - 1]) + std::abs(r.terms[k - 2]);
        double prev = std::abs(r.terms[k - 3]) + std::abs(r.terms[k - 4]);
        if (last == 0.0) {
            r.tail_bound = 0.0;
        } else if (prev > 0.0 && last < prev) {
            double q = last / prev;
            r.tail_bound = last * q / (1.0 - q);
        } else {
            r.diverging = true;
            r.tail_bound = std::numeric_limits<double>::infinity();
        }
    } else if (k >= 1) {
        r.tail_bound = std::abs(r.terms.back());
    }
    if (r.diverging && opt.throw_on_growth)
        throw NumericalError("series terms are not decreasing at the truncation order");
}

} // namespace detail

/// sum_{k<=K} t^k/k! E[L^k f (X_0)] with J symbolic and expectations from `oracle`.
inline TaylorResult taylor_mean(const Polynomial& f, const SystemParams& params, const MomentOracle& oracle,
                                double t, int order, const TaylorOptions& opt = {}) {
    detail::check_order(order, opt);
    if (static_cast<std::size_t>(params.n()) > opt.max_symbolic_dim)
        throw InvalidArgument("symbolic expansion is restricted to small N");
    if (oracle.n != params.n()) throw InvalidArgument("oracle and system dimensions differ");
    TaylorResult r;
    Polynomial cur(oracle.symmetric, false);
    cur.add(f);
    double weight = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) {
            cur = apply_generator(cur, params, CouplingMode::Symbolic);
            detail::check_size(cur, opt);
            weight *= t / k;
        }
        r.terms.push_back(k == 0 || weight != 0.0 ? weight * expected_value(cur, oracle) : 0.0);
    }
    detail::finish(r, opt);
    return r;
}

/// sum_{k<=K} t^k/k! (L^k f)(x) with the numeric J of `params` folded in:
/// the truncated E_B[f(X_t) | X_0 = x] for fixed J.
inline TaylorResult taylor_mean_numeric(const Polynomial& f, const SystemParams& params, const Vector& x,
                                        double t, int order, TaylorOptions opt = {}) {
    if (opt.max_order == TaylorOptions{}.max_order) opt.max_order = 64;
    detail::check_order(order, opt);
    if (x.size() != params.n()) throw InvalidArgument("state dimension mismatch");
    TaylorResult r;
    Polynomial cur(false, false);
    cur.add(f);
    double weight = 1.0;
    const Matrix& jm = params.j();
    for (int k = 0; k <= order; ++k) {
        if (k > 0) {
            cur = apply_generator(cur, params, CouplingMode::Numeric);
            detail::check_size(cur, opt);
            weight *= t / k;
        }
        r.terms.push_back(weight * evaluate(cur, jm, x));
    }
    detail::finish(r, opt);
    return r;
}

/// E[f1(X_{t1}) f2(X_{t2}) ... fl(X_{tl})] through the nested semigroup product
///   P_{t1}( f1 P_{t2-t1}( f2 ... P_{tl - t(l-1)} fl ) )
/// truncated to total order sum k_i <= K; terms[n] collects total order n.
inline TaylorResult taylor_mean_multitime(const std::vector<Polynomial>& fs, const std::vector<double>& ts,
                                          const SystemParams& params, const MomentOracle& oracle, int order,
                                          const TaylorOptions& opt = {}) {
    detail::check_order(order, opt);
    if (fs.empty() || fs.size() != ts.size()) throw InvalidArgument("need one time per observable factor");
    if (ts.front() < 0.0 || !std::is_sorted(ts.begin(), ts.end()))
        throw InvalidArgument("times must be non-negative and sorted");
    if (static_cast<std::size_t>(params.n()) > opt.max_symbolic_dim)
        throw InvalidArgument("symbolic expansion is restricted to small N");
    const bool sym = oracle.symmetric;
    const std::size_t levels = fs.size();

    // inner[n] = order-n contribution of the nested expansion from the current level inward
    std::vector<Polynomial> inner(static_cast<std::size_t>(order) + 1, Polynomial(sym, false));
    inner[0].add(Polynomial::from(Monomial{}, sym));
    for (std::size_t lvl = levels; lvl-- > 0;) {
        const double gap = ts[lvl] - (lvl == 0 ? 0.0 : ts[lvl - 1]);
        Polynomial fl(sym, false);
        fl.add(fs[lvl]);
        std::vector<Polynomial> next(static_cast<std::size_t>(order) + 1, Polynomial(sym, false));
        for (int n0 = 0; n0 <= order; ++n0) {
            if (inner[n0].empty()) continue;
            Polynomial cur = multiply(fl, inner[n0]);
            double weight = 1.0;
            for (int k = 0; n0 + k <= order; ++k) {
                if (k > 0) {
                    weight *= gap / k;
                    if (weight == 0.0) break;
                    cur = apply_generator(cur, params, CouplingMode::Symbolic);
                    detail::check_size(cur, opt);
                }
                next[n0 + k].add(cur, weight);
            }
        }
        for (auto& p : next) p.normalize();
        inner = std::move(next);
    }
    TaylorResult r;
    for (int k = 0; k <= order; ++k) r.terms.push_back(expected_value(inner[k], oracle));
    detail::finish(r, opt);
    return r;
}

/// Term count of a word applied to f0, without like-term collection, against the
/// per-letter product bound r^k N^{k_J} N_Lambda^{k_Lambda} N_sigma^{2 k_Delta}.
struct CountCheck {
    std::size_t actual = 0;
    long double bound = 0;
    bool holds() const { return static_cast<long double>(actual) <= bound; }
};

/// N_sigma here counts non-zero sigma_ij over i = 0..N so that constant diffusion
/// coefficients are included in the enumeration of (i, i') pairs.
inline CountCheck count_bound_check(const std::vector<Letter>& word, const Monomial& f0,
                                    const SystemParams& params, std::size_t max_terms = 50'000'000) {
    std::vector<Monomial> cur{f0};
    const long double r = f0.degree();
    long double bound = 1;
    for (Letter l : word) {
        std::vector<Monomial> next;
        for (const auto& m : cur) {
            for_each_letter_term(m, l, params, CouplingMode::Symbolic, [&](Monomial t) {
                if (t.coeff != 0.0) next.push_back(std::move(t));
            });
            if (next.size() > max_terms) throw NumericalError("count_bound_check: expansion too large");
        }
        cur = std::move(next);
        switch (l) {
        case Letter::H: bound *= r; break;
        case Letter::J: bound *= r * params.n(); break;
        case Letter::Lambda: bound *= r * params.n_lambda(); break;
        case Letter::Delta: {
            long double ns = params.n_sigma_with_constant();
            bound *= r * ns * ns;
            break;
        }
        }
    }
    return CountCheck{cur.size(), bound};
}

} // namespace rmdiff
