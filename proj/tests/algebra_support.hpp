// Shared fixtures for the generator-algebra tests and the acceptance binary.
#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "rmdiff/generator_algebra.hpp"

namespace rmdiff::testing {

/// Small system with every letter active: dense Lambda, non-zero h, constant
/// and multiplicative diffusion.
inline SystemParams small_system(int n, std::uint64_t seed, double j_scale = 0.4) {
    RngStream rng(seed, 0, Purpose::Generic);
    Matrix j(n, n), lam(n, n), sigma = Matrix::Zero(n + 1, n);
    Vector h(n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            j(a, b) = j_scale * rng.normal();
            lam(a, b) = (a == b ? -1.0 : 0.0) + 0.2 * rng.normal();
        }
        h(a) = 0.3 * rng.normal();
        sigma(0, a) = 0.5 + 0.1 * rng.uniform();
        sigma(1 + (a + 1) % n, a) = 0.2 * rng.normal();
    }
    return SystemParams::make(j, lam, h, sigma);
}

inline std::vector<std::vector<Letter>> all_words(int max_len) {
    const Letter letters[] = {Letter::J, Letter::Lambda, Letter::H, Letter::Delta};
    std::vector<std::vector<Letter>> out{{}}, frontier{{}};
    for (int len = 1; len <= max_len; ++len) {
        std::vector<std::vector<Letter>> next;
        for (const auto& w : frontier)
            for (Letter l : letters) {
                auto v = w;
                v.push_back(l);
                next.push_back(v);
            }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

/// Every monomial appearing in L_w f for f in fs and every word w of length <= max_len.
/// Letters are applied one at a time so each prefix's polynomial is reused.
inline std::vector<Monomial> reachable_monomials(const std::vector<Monomial>& fs, const SystemParams& params,
                                                 int max_len, bool symmetric) {
    const Letter letters[] = {Letter::J, Letter::Lambda, Letter::H, Letter::Delta};
    std::vector<Monomial> out;
    for (const auto& f : fs) {
        std::vector<Polynomial> frontier{Polynomial::from(f, symmetric)};
        for (int len = 0; len <= max_len; ++len) {
            std::vector<Polynomial> next;
            for (const auto& p : frontier) {
                auto ms = p.monomials();
                out.insert(out.end(), ms.begin(), ms.end());
                if (len < max_len)
                    for (Letter l : letters) next.push_back(apply_letter(p, l, params));
            }
            frontier = std::move(next);
        }
    }
    return out;
}

/// Random monomial with up to `max_pairs` J-pairs and `max_x` coordinates in 1..n.
inline Monomial random_monomial(int n, RngStream& rng, int max_pairs = 4, int max_x = 3) {
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.uniform() * (hi - lo + 1)) % (hi - lo + 1); };
    Monomial m;
    m.coeff = 0.5 + rng.uniform();
    const int pairs = pick(0, max_pairs);
    // draw from a small pool so that pairs repeat often enough to give non-zero moments
    std::vector<IndexPair> pool;
    for (int k = 0; k < 2; ++k) pool.push_back({static_cast<Index>(pick(1, n)), static_cast<Index>(pick(1, n))});
    for (int k = 0; k < pairs; ++k) m.j_pairs.push_back(pool[static_cast<std::size_t>(pick(0, 1))]);
    const int xs = pick(0, max_x);
    for (int k = 0; k < xs; ++k) m.x_idx.push_back(static_cast<Index>(pick(1, n)));
    m.canonicalize(false);
    return m;
}

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Brute-force E[m] by sampling A and X_0 directly: J = sqrt(m_ij) Z_ij / sqrt(N),
/// Z_ji = Z_ij when symmetric, X_0 iid from `init`.
inline McEstimate sample_expectation(const Monomial& mono, DistKind kind, const Matrix& profile, bool symmetric,
                                     const InitialLaw& init, long samples, std::uint64_t seed) {
    const int n = static_cast<int>(profile.rows());
    RngStream rng(seed, 7, Purpose::Generic);
    auto draw = [&](DistKind k) {
        switch (k) {
        case DistKind::Gaussian: return rng.normal();
        case DistKind::Rademacher: return rng.bit() ? 1.0 : -1.0;
        case DistKind::UniformCentered: return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
        case DistKind::ExponentialCentered: return -std::log1p(-rng.uniform()) - 1.0;
        }
        return 0.0;
    };
    // only the pairs and coordinates the monomial touches need sampling
    std::map<IndexPair, double> jv;
    std::map<int, double> xv;
    for (auto p : mono.j_pairs) jv[p.canonical(symmetric)] = 0.0;
    for (auto i : mono.x_idx)
        if (i) xv[i] = 0.0;
    double sum = 0.0, sq = 0.0;
    for (long s = 0; s < samples; ++s) {
        for (auto& [p, v] : jv) v = std::sqrt(profile(p.i - 1, p.j - 1) / n) * draw(kind);
        for (auto& [i, v] : xv) {
            const auto& c = init.coords[static_cast<std::size_t>(i - 1)];
            v = c.loc + c.scale * draw(c.dist.kind);
        }
        double val = mono.coeff;
        for (auto p : mono.j_pairs) val *= jv[p.canonical(symmetric)];
        for (auto i : mono.x_idx)
            if (i) val *= xv[i];
        sum += val;
        sq += val * val;
    }
    McEstimate e;
    e.mean = sum / samples;
    e.se = std::sqrt(std::max(0.0, sq / samples - e.mean * e.mean) / (samples - 1));
    return e;
}

} // namespace rmdiff::testing
