#include <catch_amalgamated.hpp>

#include <cmath>

#include "algebra_support.hpp"
#include "rmdiff/sde.hpp"

using namespace rmdiff;
using namespace rmdiff::testing;
using Catch::Approx;

namespace {

SystemParams linear_system(int n, std::uint64_t seed, double j_scale = 0.3) {
    RngStream rng(seed, 0, Purpose::Generic);
    Matrix j(n, n), lam(n, n), sigma = Matrix::Zero(n + 1, n);
    Vector h(n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            j(a, b) = j_scale * rng.normal();
            lam(a, b) = (a == b ? -0.8 : 0.1 * rng.normal());
        }
        h(a) = 0.5 * rng.normal();
        sigma(0, a) = 0.4;
    }
    return SystemParams::make(j, lam, h, sigma);
}

SystemParams scalar_system(double lambda, double h, double s) {
    Matrix sigma(2, 1);
    sigma << s, 0.0;
    return SystemParams::make(Matrix::Zero(1, 1), Matrix::Constant(1, 1, lambda), Vector::Constant(1, h), sigma);
}

Monomial with_pairs(std::vector<IndexPair> pairs, std::initializer_list<int> xs, double coeff = 1.0) {
    Monomial m = Monomial::x(xs, coeff);
    m.j_pairs = std::move(pairs);
    return m;
}

/// Independent generator: b . grad f + sum_j a_j^2 d_jj f by central differences,
/// b = g J^T x + Lambda^T x + h, a_j = sigma_0j + sum_i sigma_ij x_i.
double generator_by_differences(const Polynomial& f, const SystemParams& p, const Vector& x) {
    const int n = p.n();
    const double eps = 1e-3;
    double out = 0.0;
    for (int j = 0; j < n; ++j) {
        double b = p.h()(j), a = p.sigma()(0, j);
        for (int i = 0; i < n; ++i) {
            b += p.coupling_gain() * p.j()(i, j) * x(i) + p.lambda()(i, j) * x(i);
            a += p.sigma()(i + 1, j) * x(i);
        }
        Vector up = x, dn = x;
        up(j) += eps;
        dn(j) -= eps;
        const double fu = evaluate(f, p.j(), up), fd = evaluate(f, p.j(), dn), f0 = evaluate(f, p.j(), x);
        out += b * (fu - fd) / (2 * eps) + a * a * (fu - 2 * f0 + fd) / (eps * eps);
    }
    return out;
}

} // namespace

TEST_CASE("letter examples") {
    Matrix sigma0 = Matrix::Zero(3, 2);
    SystemParams hp = SystemParams::make(Matrix::Zero(2, 2), Matrix::Zero(2, 2), Vector{{0.3, -0.7}}, sigma0);
    auto lh = apply_letter(Polynomial::from(Monomial::x({1, 2})), Letter::H, hp).monomials();
    REQUIRE(lh.size() == 2);
    CHECK(lh[0].x_idx == std::vector<Index>{0, 1});
    CHECK(lh[0].coeff == -0.7);
    CHECK(lh[1].x_idx == std::vector<Index>{0, 2});
    CHECK(lh[1].coeff == 0.3);

    auto lj = apply_letter(Polynomial::from(Monomial::x({1})), Letter::J, hp).monomials();
    REQUIRE(lj.size() == 2);
    CHECK(lj[0].j_pairs == std::vector<IndexPair>{{1, 1}});
    CHECK(lj[0].x_idx == std::vector<Index>{1});
    CHECK(lj[1].j_pairs == std::vector<IndexPair>{{2, 1}});
    CHECK(lj[1].x_idx == std::vector<Index>{2});
    CHECK(lj[0].coeff == 1.0);

    const double s = 0.6;
    auto ld = apply_letter(Polynomial::from(Monomial::x({1, 1})), Letter::Delta, scalar_system(0, 0, s)).monomials();
    REQUIRE(ld.size() == 1);
    CHECK(ld[0].x_idx == std::vector<Index>{0, 0});
    CHECK(ld[0].coeff == Approx(2 * s * s).epsilon(1e-15));
    CHECK(apply_letter(Polynomial::from(Monomial::x({1})), Letter::Delta, scalar_system(0, 0, s)).empty());
}

TEST_CASE("generator examples") {
    auto p = small_system(3, 5);
    CHECK(apply_generator(Polynomial::from(Monomial::x({0})), p).empty());
    CHECK(apply_generator(Polynomial::from(Monomial{}), p).empty());

    const double jv = 0.9, lambda = -1.3, c = 0.4, s = 0.5;
    Matrix sigma(2, 1);
    sigma << s, 0.0;
    SystemParams one =
        SystemParams::make(Matrix::Constant(1, 1, jv), Matrix::Constant(1, 1, lambda), Vector::Constant(1, c), sigma);
    auto l = apply_generator(Polynomial::from(Monomial::x({1})), one);
    CHECK(l.size() == 3);
    for (double x : {-1.5, 0.0, 2.0})
        CHECK(evaluate(l, one.j(), Vector::Constant(1, x)) == Approx(jv * x + lambda * x + c).margin(1e-14));

    CHECK_THROWS_AS(apply_generator(Polynomial::from(Monomial::x({4})), p), InvalidArgument);
}

TEST_CASE("generator agrees with a finite-difference oracle") {
    auto p = small_system(3, 6);
    RngStream rng(6, 1);
    for (auto f : {Monomial::x({1}), Monomial::x({1, 2}), Monomial::x({2, 2, 3}), Monomial::x({1, 1, 1, 3})}) {
        auto poly = Polynomial::from(f);
        auto sym = apply_generator(poly, p, CouplingMode::Symbolic);
        auto num = apply_generator(poly, p, CouplingMode::Numeric);
        for (int trial = 0; trial < 5; ++trial) {
            Vector x(3);
            for (int i = 0; i < 3; ++i) x(i) = rng.normal();
            double oracle = generator_by_differences(poly, p, x);
            CHECK(evaluate(sym, p.j(), x) == Approx(oracle).margin(1e-5));
            CHECK(evaluate(num, Matrix::Zero(3, 3), x) == Approx(evaluate(sym, p.j(), x)).margin(1e-12));
        }
    }
}

TEST_CASE("degree is preserved by every letter") {
    auto p = small_system(3, 7);
    for (const auto& m : reachable_monomials({Monomial::x({1}), Monomial::x({1, 2})}, p, 3, false))
        CHECK((m.degree() == 1 || m.degree() == 2));
}

TEST_CASE("count bounds") {
    Matrix sigma0 = Matrix::Zero(3, 2);
    SystemParams hp = SystemParams::make(Matrix::Zero(2, 2), Matrix::Zero(2, 2), Vector{{0.3, -0.7}}, sigma0);
    auto h = count_bound_check({Letter::H}, Monomial::x({1, 2}), hp);
    CHECK(h.actual == 2);
    CHECK(h.bound == 2);
    CHECK(h.holds());

    auto p5 = small_system(5, 8);
    auto j = count_bound_check({Letter::J}, Monomial::x({3}), p5);
    CHECK(j.actual == 5);
    CHECK(j.bound == 5);

    auto p = small_system(3, 9);
    RngStream rng(9, 2);
    const Letter letters[] = {Letter::J, Letter::Lambda, Letter::H, Letter::Delta};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Letter> word(1 + rng.uniform() * 5);
        for (auto& l : word) l = letters[static_cast<int>(rng.uniform() * 4) % 4];
        Monomial f0 = trial % 2 ? Monomial::x({1, 2}) : Monomial::x({3, 3, 1});
        auto c = count_bound_check(word, f0, p);
        CHECK(c.holds());
    }
}

TEST_CASE("like-term collection preserves values") {
    for (bool symmetric : {false, true}) {
        RngStream rng(11, symmetric);
        Polynomial poly(symmetric, false);
        std::vector<Monomial> raw;
        for (int k = 0; k < 200; ++k) {
            Monomial m = random_monomial(3, rng, 4, 3);
            if (rng.bit())
                for (auto& pr : m.j_pairs) std::swap(pr.i, pr.j);
            if (!symmetric && k % 3 == 0 && !raw.empty()) m = raw.back();
            raw.push_back(m);
            poly.add(m);
        }
        for (int trial = 0; trial < 5; ++trial) {
            Matrix j(3, 3);
            Vector x(3);
            for (int a = 0; a < 3; ++a) {
                x(a) = rng.normal();
                for (int b = 0; b < 3; ++b) j(a, b) = rng.normal();
            }
            if (symmetric) j = ((j + j.transpose()) / 2).eval();
            double direct = 0.0, mag = 0.0;
            for (const auto& m : raw) {
                double v = m.coeff;
                for (auto pr : m.j_pairs) v *= j(pr.i - 1, pr.j - 1);
                for (auto i : m.x_idx)
                    if (i) v *= x(i - 1);
                direct += v;
                mag += std::abs(v);
            }
            CHECK(evaluate(poly, j, x) == Approx(direct).margin(1e-12 * std::max(1.0, mag)));
        }
        CHECK(poly.size() < raw.size());
        for (const auto& m : poly.monomials()) CHECK(m.coeff != 0.0);
    }
}

TEST_CASE("multiplicity profile examples") {
    auto a = multiplicity_profile(with_pairs({{1, 2}}, {1}), {{1, 2}}, false);
    CHECK(a.i_alpha == 1);
    CHECK(a.i_alpha_1 == 1);
    CHECK(a.i_plus == 2);
    CHECK(a.i_star == 0);

    auto b = multiplicity_profile(with_pairs({{1, 2}, {1, 2}, {1, 2}}, {1}), {{1, 2}, {1, 2}, {1, 2}}, false);
    CHECK(b.i_alpha == 1);
    CHECK(b.i_alpha_1 == 0);
    CHECK(b.i_plus == 0);
    CHECK(b.i_star == 0);

    auto c = multiplicity_profile(with_pairs({{1, 2}, {2, 1}}, {}), {{1, 2}, {2, 1}}, true);
    CHECK(c.i_alpha == 1);
    CHECK(c.i_alpha_1 == 0);
    CHECK(c.i_plus == 1);
    auto c2 = multiplicity_profile(with_pairs({{1, 2}, {2, 1}}, {}), {{1, 2}, {2, 1}}, false);
    CHECK(c2.i_alpha == 2);
    CHECK(c2.i_alpha_1 == 2);

    auto d = multiplicity_profile(with_pairs({{1, 2}, {2, 3}, {2, 3}, {1, 1}}, {}), {{1, 2}}, false);
    CHECK(d.i_star == 2);
    CHECK(d.i_total == 3);
    CHECK(d.k_j == 3);
    CHECK(d.s == 1);

    CHECK_THROWS_AS(multiplicity_profile(with_pairs({{1, 2}}, {}), {{1, 2}, {1, 2}}, false), InvalidArgument);
    CHECK_THROWS_AS(multiplicity_profile(with_pairs({{1, 2}}, {}), {{2, 1}}, false), InvalidArgument);
}

TEST_CASE("difference_vanishes examples") {
    CHECK(difference_vanishes(with_pairs({{1, 2}, {1, 2}}, {1}), {}, false));
    CHECK_FALSE(difference_vanishes(with_pairs({{1, 2}, {1, 2}, {1, 2}}, {1}), {}, false));
    CHECK(difference_vanishes(with_pairs({{1, 3}, {1, 2}, {1, 2}}, {1}), {}, false));
    CHECK_FALSE(difference_vanishes(with_pairs({{1, 2}, {2, 1}, {1, 2}, {3, 3}, {3, 3}}, {}), {}, true));
    CHECK(difference_vanishes(with_pairs({{1, 2}, {2, 1}, {1, 2}, {3, 3}, {3, 3}}, {}), {}, false));
}

TEST_CASE("expected_value examples") {
    auto centred = MomentOracle::make(EntryDistribution{}, VarianceProfile::full(2), false,
                                      InitialLaw::iid(2, EntryDistribution{}));
    CHECK(expected_value(with_pairs({{1, 2}}, {1}), centred) == 0.0);
    CHECK(expected_value(with_pairs({{1, 2}, {1, 2}}, {1}), centred) == 0.0);
    auto shifted = MomentOracle::make(EntryDistribution{}, VarianceProfile::full(2), false,
                                      InitialLaw::iid(2, EntryDistribution{}, 0.7));
    CHECK(expected_value(with_pairs({{1, 2}, {1, 2}}, {1}), shifted) == Approx(0.7 / 2).epsilon(1e-15));
    // x_0 factors contribute 1
    CHECK(expected_value(Monomial::x({0, 0}, 2.5), shifted) == 2.5);
    CHECK(centred.entry_moment({1, 2}, 0) == 1.0);
    CHECK(centred.entry_moment({1, 2}, 1) == 0.0);
    CHECK(centred.entry_moment({1, 2}, 2) == 1.0);
}

TEST_CASE("expected_value against brute-force sampling") {
    RngStream rng(12, 0);
    auto init = InitialLaw::iid(3, EntryDistribution{DistKind::Rademacher}, 0.4, 1.0);
    auto profile = VarianceProfile::two_block(3);
    int nonzero = 0;
    for (int k = 0; k < 20; ++k) {
        const bool symmetric = k % 2 == 0;
        Monomial m = random_monomial(3, rng);
        auto oracle = MomentOracle::make(EntryDistribution{DistKind::Rademacher}, profile, symmetric, init);
        double exact = expected_value(m, oracle);
        auto mc = sample_expectation(m, DistKind::Rademacher, profile.m, symmetric, init, 200000, 100 + k);
        CHECK(std::abs(exact - mc.mean) <= 4 * mc.se + 1e-12);
        nonzero += exact != 0.0;
    }
    CHECK(nonzero >= 5);
}

TEST_CASE("variance-matched ensembles agree on vanishing monomials") {
    auto p = small_system(3, 13);
    auto init = InitialLaw::iid(3, EntryDistribution{}, 0.3, 0.8);
    for (bool symmetric : {false, true}) {
        auto g = MomentOracle::make(EntryDistribution{DistKind::Gaussian}, VarianceProfile::full(3), symmetric, init);
        auto r = MomentOracle::make(EntryDistribution{DistKind::Rademacher}, VarianceProfile::full(3), symmetric, init);
        int vanishing = 0, differing = 0;
        for (const auto& m : reachable_monomials({Monomial::x({1}), Monomial::x({1, 2})}, p, 4, symmetric)) {
            double diff = std::abs(expected_value(m, g) - expected_value(m, r));
            if (difference_vanishes(m, {}, symmetric)) {
                ++vanishing;
                CHECK(diff <= 1e-12);
            } else if (diff > 1e-12) {
                ++differing;
            }
        }
        CHECK(vanishing > 100);
        CHECK(differing > 0);
    }
}

TEST_CASE("pure-J expectations scale as N^{-d/2}") {
    auto at = [](int n, const Monomial& m) {
        auto o = MomentOracle::make(EntryDistribution{}, VarianceProfile::full(n), false,
                                    InitialLaw::point_mass(n, 1.0));
        return expected_value(m, o);
    };
    Monomial d4 = with_pairs({{1, 2}, {1, 2}, {1, 3}, {1, 3}}, {});
    Monomial d6 = with_pairs({{1, 2}, {1, 2}, {2, 3}, {2, 3}, {2, 3}, {2, 3}}, {1});
    CHECK(at(3, d4) / at(5, d4) == Approx(std::pow(5.0 / 3.0, 2)).epsilon(1e-14));
    CHECK(at(3, d6) / at(7, d6) == Approx(std::pow(7.0 / 3.0, 3)).epsilon(1e-14));
    CHECK(at(3, d6) == Approx(3.0 / 27.0).epsilon(1e-14));
}

TEST_CASE("retained monomials satisfy the J-degree inequality") {
    auto p = small_system(3, 14);
    int retained = 0;
    for (const auto& m : reachable_monomials({Monomial::x({1}), Monomial::x({1, 2})}, p, 4, true)) {
        if (difference_vanishes(m, {}, true)) continue;
        ++retained;
        // every sub-multiset prefix and suffix of the sorted pair list as alpha
        for (std::size_t s = 0; s <= m.j_pairs.size(); ++s) {
            std::vector<IndexPair> pre(m.j_pairs.begin(), m.j_pairs.begin() + s);
            std::vector<IndexPair> suf(m.j_pairs.end() - s, m.j_pairs.end());
            for (const auto& alpha : {pre, suf}) {
                auto prof = multiplicity_profile(m, alpha, true);
                CHECK(prof.k_j >= 2 * prof.i_star + prof.i_plus);
                CHECK((prof.i_plus == prof.i_alpha_1 || prof.i_plus == prof.i_alpha_1 + 1));
            }
        }
    }
    CHECK(retained > 0);
}

TEST_CASE("taylor_mean") {
    auto init = InitialLaw::iid(1, EntryDistribution{}, 1.0, 0.5);
    auto oracle = MomentOracle::make(EntryDistribution{}, VarianceProfile::full(1), true, init);
    auto ou = scalar_system(-1.0, 0.0, 0.5);
    auto f = Polynomial::from(Monomial::x({1}));
    CHECK(taylor_mean(f, ou, oracle, 0.0, 6).value == 1.0);

    const double t = 0.2;
    auto r = taylor_mean(f, ou, oracle, t, 12);
    CHECK_FALSE(r.diverging);
    // E[X_0] E[exp((J - 1) t)] with J standard normal
    CHECK(r.value == Approx(std::exp(-t + t * t / 2)).epsilon(1e-10));
    CHECK(r.tail_bound < 1e-8);
    CHECK(r.partial_sums.size() == 13);

    RngStream jr(15, 0, Purpose::Coupling), xr(15, 0, Purpose::Initial), br(15, 0, Purpose::Noise);
    const int paths = 10000;
    double sum = 0, sq = 0;
    for (int k = 0; k < paths; ++k) {
        Matrix j = Matrix::Constant(1, 1, jr.normal());
        SystemParams p = SystemParams::make(j, ou.lambda(), ou.h(), ou.sigma());
        Vector x0 = sample_initial(init, xr);
        double v = simulate(p, x0, IntegratorConfig::make(1e-3, t, {t}), br).x(0, 0);
        sum += v;
        sq += v * v;
    }
    double mean = sum / paths, se = std::sqrt((sq / paths - mean * mean) / (paths - 1));
    CHECK(std::abs(r.value - mean) <= 3 * se);

    auto flat = scalar_system(0.0, 0.0, 0.7);
    auto init2 = InitialLaw::iid(1, EntryDistribution{}, 0.3, 1.0);
    auto no_j = MomentOracle::make(EntryDistribution{}, VarianceProfile::off_diagonal(1), true, init2);
    for (int k = 1; k <= 5; ++k)
        CHECK(taylor_mean(Polynomial::from(Monomial::x({1, 1})), flat, no_j, 0.8, k).value ==
              Approx(1.09 + 2 * 0.49 * 0.8).epsilon(1e-14));
}

TEST_CASE("taylor_mean_numeric") {
    auto p = linear_system(4, 16);
    RngStream rng(16, 1);
    Vector x(4);
    for (int i = 0; i < 4; ++i) x(i) = rng.normal();
    CHECK(taylor_mean_numeric(Polynomial::from(Monomial::x({1, 2})), p, x, 0.0, 5).value == x(0) * x(1));

    for (double t : {0.25, 0.5, 1.0}) {
        Vector exact = exact_mean_linear(p, x, t);
        for (int j = 1; j <= 4; ++j) {
            auto f = Polynomial::from(Monomial::x({j}));
            CHECK(std::abs(taylor_mean_numeric(f, p, x, t, 20).value - exact(j - 1)) <= 1e-8);
            if (t <= 0.5)
                for (int k = 0; k + 2 <= 20; ++k) {
                    double ek = std::abs(taylor_mean_numeric(f, p, x, t, k).value - exact(j - 1));
                    double ek2 = std::abs(taylor_mean_numeric(f, p, x, t, k + 2).value - exact(j - 1));
                    CHECK(ek2 <= std::max(ek, 1e-14));
                }
        }
    }

    // product observable with multiplicative noise against sampling over B
    auto q = small_system(2, 17);
    Vector x2{{0.8, -0.5}};
    const double t = 0.3, dt = 2e-4;
    auto series = taylor_mean_numeric(Polynomial::from(Monomial::x({1, 2})), q, x2, t, 20);
    auto params = std::make_shared<const SystemParams>(q);
    RngStream br(17, 0, Purpose::Noise);
    const int paths = 20000;
    double sum = 0, sq = 0;
    for (int k = 0; k < paths; ++k) {
        auto tr = simulate(params, x2, IntegratorConfig::make(dt, t, {t}), br);
        double v = tr.x(0, 0) * tr.x(1, 0);
        sum += v;
        sq += v * v;
    }
    double mean = sum / paths, se = std::sqrt((sq / paths - mean * mean) / (paths - 1));
    CHECK(std::abs(series.value - mean) <= 3 * se + 10 * dt);
}

TEST_CASE("taylor_mean_multitime") {
    auto p = small_system(2, 18);
    auto init = InitialLaw::iid(2, EntryDistribution{}, 0.5, 1.0);
    auto oracle = MomentOracle::make(EntryDistribution{DistKind::Rademacher}, VarianceProfile::full(2), true, init);
    auto x12 = Polynomial::from(Monomial::x({1, 2}), true);
    auto single = taylor_mean_multitime({x12}, {0.3}, p, oracle, 6);
    CHECK(single.value == Approx(taylor_mean(x12, p, oracle, 0.3, 6).value).epsilon(1e-12));

    auto pair = taylor_mean_multitime({Polynomial::from(Monomial::x({1}), true), Polynomial::from(Monomial::x({2}), true)},
                                      {0.3, 0.3}, p, oracle, 6);
    CHECK(pair.value == Approx(taylor_mean(x12, p, oracle, 0.3, 6).value).epsilon(1e-12));

    // OU covariance across two times, sampled over (J, X_0, B)
    auto init1 = InitialLaw::iid(1, EntryDistribution{}, 1.0, 0.5);
    auto o1 = MomentOracle::make(EntryDistribution{}, VarianceProfile::full(1), true, init1);
    auto ou = scalar_system(-1.0, 0.0, 0.5);
    auto x1 = Polynomial::from(Monomial::x({1}), true);
    const double t1 = 0.2, t2 = 0.4;
    auto series = taylor_mean_multitime({x1, x1}, {t1, t2}, ou, o1, 14);
    CHECK_FALSE(series.diverging);
    RngStream jr(19, 0, Purpose::Coupling), xr(19, 0, Purpose::Initial), br(19, 0, Purpose::Noise);
    const int paths = 20000;
    double sum = 0, sq = 0;
    for (int k = 0; k < paths; ++k) {
        SystemParams q = SystemParams::make(Matrix::Constant(1, 1, jr.normal()), ou.lambda(), ou.h(), ou.sigma());
        auto tr = simulate(q, sample_initial(init1, xr), IntegratorConfig::make(1e-3, t2, {t1, t2}), br);
        double v = tr.x(0, 0) * tr.x(0, 1);
        sum += v;
        sq += v * v;
    }
    double mean = sum / paths, se = std::sqrt((sq / paths - mean * mean) / (paths - 1));
    CHECK(std::abs(series.value - mean) <= 3 * se);

    CHECK_THROWS_AS(taylor_mean_multitime({x1, x1}, {0.4, 0.2}, ou, o1, 4), InvalidArgument);
    CHECK_THROWS_AS(taylor_mean_multitime({x1}, {0.4, 0.2}, ou, o1, 4), InvalidArgument);
}

TEST_CASE("series guards") {
    auto ou = scalar_system(-1.0, 0.0, 0.5);
    auto oracle = MomentOracle::make(EntryDistribution{}, VarianceProfile::full(1), true,
                                     InitialLaw::iid(1, EntryDistribution{}, 1.0));
    auto f = Polynomial::from(Monomial::x({1}));
    CHECK_THROWS_AS(taylor_mean(f, ou, oracle, 0.1, 17), InvalidArgument);
    CHECK_THROWS_AS(taylor_mean_numeric(f, ou, Vector::Ones(1), 0.1, 65), InvalidArgument);
    CHECK_NOTHROW(taylor_mean_numeric(f, ou, Vector::Ones(1), 0.1, 40));

    auto big = small_system(9, 20);
    auto o9 = MomentOracle::make(EntryDistribution{}, VarianceProfile::full(9), true,
                                 InitialLaw::iid(9, EntryDistribution{}));
    CHECK_THROWS_AS(taylor_mean(f, big, o9, 0.1, 2), InvalidArgument);

    TaylorOptions strict;
    strict.throw_on_growth = true;
    CHECK(taylor_mean(f, ou, oracle, 50.0, 6).diverging);
    CHECK_THROWS_AS(taylor_mean(f, ou, oracle, 50.0, 6, strict), NumericalError);
    TaylorOptions tiny;
    tiny.max_terms = 3;
    CHECK_THROWS_AS(taylor_mean(Polynomial::from(Monomial::x({1, 2})), small_system(3, 21),
                                MomentOracle::make(EntryDistribution{}, VarianceProfile::full(3), true,
                                                   InitialLaw::iid(3, EntryDistribution{})),
                                0.1, 3, tiny),
                    NumericalError);
}
