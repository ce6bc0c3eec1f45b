#include <doctest.h>

#include <random>

#include "heatsym/jetlab.hpp"

using namespace heatsym;

namespace {
constexpr int I = 1, J = 2, K = 3, L = 4, P = 5, Q = 6;
}

TEST_CASE("flat jet has zero curvature") {
    CurvatureData d = evaluate_curvature(flat_jet(3, 4), 2);
    for (const Rat& v : d.riemann[0].v) CHECK(v == 0);
    for (const Rat& v : d.scal[2].v) CHECK(v == 0);
}

TEST_CASE("sphere-like jet reproduces constant curvature data") {
    // regression pinned by the normal-coordinate Taylor expansion
    Rat Kc(2, 3);
    int n = 3;
    CurvatureData d = evaluate_curvature(sphere_like_jet(n, Kc), 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    Rat expect = Kc * (Rat((i == k) && (j == l)) - Rat((i == l) && (j == k)));
                    CHECK(d.riemann[0].at({i, j, k, l}) == expect);
                }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            CHECK(d.ricci[0].at({i, j}) == (i == j ? Rat(n - 1) * Kc : Rat(0)));
    CHECK(d.scal[0].at({}) == Rat(n) * Rat(n - 1) * Kc);
}

TEST_CASE("unit 2-sphere normalization: positive curvature, S = n(n-1)") {
    // The curvature sign convention makes the round sphere positively curved:
    // the K=1 jet in two dimensions has sectional curvature R_1212 = +1 and
    // scalar curvature 2 = n(n-1).
    CurvatureData d = evaluate_curvature(sphere_like_jet(2, Rat(1)), 2);
    CHECK(d.riemann[0].at({0, 1, 0, 1}) == 1);
    CHECK(d.scal[0].at({}) == 2);
    CHECK(d.scal[0].at({}) > 0);
}

TEST_CASE("random jets are deterministic per seed") {
    MetricJet a = random_metric_jet(3, 4, 42);
    MetricJet b = random_metric_jet(3, 4, 42);
    MetricJet c = random_metric_jet(3, 4, 43);
    CHECK(a.g.size() == b.g.size());
    bool equal = true, differs = false;
    for (std::size_t i = 0; i < a.g.size(); ++i) {
        if (!(a.g[i].c == b.g[i].c)) equal = false;
        if (!(a.g[i].c == c.g[i].c)) differs = true;
    }
    CHECK(equal);
    CHECK(differs);
}

TEST_CASE("curvature identities hold exactly on random jets") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        CurvatureData d = evaluate_curvature(random_metric_jet(3, 5, seed), 2);
        int n = d.n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        Rat r = d.riemann[0].at({i, j, k, l});
                        CHECK(r == -d.riemann[0].at({j, i, k, l}));
                        CHECK(r == -d.riemann[0].at({i, j, l, k}));
                        CHECK(r == d.riemann[0].at({k, l, i, j}));
                        // first Bianchi
                        CHECK(r + d.riemann[0].at({i, k, l, j}) + d.riemann[0].at({i, l, j, k}) == 0);
                        // second Bianchi
                        for (int m = 0; m < n; ++m) {
                            Rat b = d.riemann[1].at({m, i, j, k, l}) +
                                    d.riemann[1].at({k, i, j, l, m}) +
                                    d.riemann[1].at({l, i, j, m, k});
                            CHECK(b == 0);
                        }
                    }
    }
}

TEST_CASE("numeric_eval contracts tensor polynomials") {
    CurvatureData d = evaluate_curvature(sphere_like_jet(3, rat(1, 2)), 2);
    // g^{ij} g_{ij} = n
    TensorPolynomial gg = poly_mul(poly_mono(Monomial{1, {metric(up(I), up(J))}, {}}),
                                   poly_mono(Monomial{1, {metric(dn(I), dn(J))}, {}}));
    CHECK(numeric_eval(gg, d) == GaussRat(Rat(3)));
    // S
    TensorPolynomial s = poly_mono(Monomial{1, {scalar_S()}, {}});
    CHECK(numeric_eval(s, d) == GaussRat(Rat(3)));  // n(n-1)K = 6 * 1/2
    // |Ric|^2 on the sphere jet = n (n-1)^2 K^2
    TensorPolynomial ric2 = poly_mono(Monomial{1, {ricci(dn(I), dn(J)), ricci(up(I), up(J))}, {}});
    CHECK(numeric_eval(ric2, d) == GaussRat(Rat(3)));  // 3 * (2 * 1/2)^2
}

TEST_CASE("contracted second Bianchi and the Ricci pair identity, numerically") {
    for (std::uint64_t seed : {11ull, 12ull}) {
        CurvatureData d = evaluate_curvature(random_metric_jet(3, 5, seed), 2);
        // nabla^i nabla^j Ric_ij = -1/2 Delta S; in (-i nabla) units both sides
        // carry the same (-i)^2, so the coefficient stays +1/2
        TensorPolynomial lhs = poly_mono(
            Monomial{1, {with_prefix(ricci(dn(I), dn(J)), {up(I), up(J)})}, {}});
        TensorPolynomial rhs = poly_mono(
            Monomial{rat(1, 2), {with_prefix(scalar_S(), {up(P), dn(P)})}, {}});
        CHECK(numeric_eval(poly_sub(lhs, rhs), d).is_zero());
        // R_ijkl R^ikjl = 1/2 |R|^2
        TensorPolynomial cross = poly_mono(Monomial{
            1, {riemann(dn(I), dn(J), dn(K), dn(L)), riemann(up(I), up(K), up(J), up(L))}, {}});
        TensorPolynomial norm = poly_mono(Monomial{
            rat(1, 2),
            {riemann(dn(I), dn(J), dn(K), dn(L)), riemann(up(I), up(J), up(K), up(L))},
            {}});
        CHECK(numeric_eval(poly_sub(cross, norm), d).is_zero());
    }
}

TEST_CASE("commutator convention: [nabla_a, nabla_b] omega_c = -R^q_cab omega_q") {
    MetricJet jet = random_metric_jet(3, 5, 99);
    JetGeometry geo = jet_geometry(jet);
    int n = jet.n;
    // random polynomial covector field
    PField w = PField::make(n, 1, jet.degree);
    std::mt19937_64 rng(5);
    for (int i = 0; i < n; ++i) {
        Poly p = Poly::constant(n, jet.degree, rat((long)(rng() % 5) - 2, 3));
        for (int a = 0; a < n; ++a)
            p = p + rat((long)(rng() % 7) - 3, 4) * Poly::variable(n, jet.degree, a);
        w.at({i}) = p;
    }
    PField dw = cov_deriv(geo, w);
    PField ddw = cov_deriv(geo, dw);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c) {
                Rat lhs = ddw.at({a, b, c}).at_origin() - ddw.at({b, a, c}).at_origin();
                Rat rhs = 0;
                for (int q = 0; q < n; ++q)
                    rhs -= geo.riemann.at({q, c, a, b}).at_origin() * w.at({q}).at_origin();
                CHECK(lhs == rhs);
            }
}

TEST_CASE("bundle curvature convention: [nabla_a, nabla_b] u = Rcal_ab u, trace free") {
    MetricJet jet = random_metric_jet(3, 4, 7);
    BundleJet bun = random_bundle_jet(3, 2, 4, 7);
    JetGeometry geo = jet_geometry(jet);
    int n = jet.n, d = bun.d;
    // random section as a rank-0 EField acting like a column: use matrix section
    EField u = EField::make(n, 0, d, jet.degree);
    std::mt19937_64 rng(21);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Poly p = Poly::constant(n, jet.degree, rat((long)(rng() % 5) - 2, 2));
            for (int a = 0; a < n; ++a)
                p = p + rat((long)(rng() % 5) - 2, 3) * Poly::variable(n, jet.degree, a);
            u.comp[0].at(i, j) = p;
        }
    // For matrix-valued sections the covariant derivative acts by ad(omega);
    // the commutator is then ad(Rcal): [nabla_a,nabla_b]u = Rcal_ab u - u Rcal_ab.
    EField du = cov_deriv(geo, bun.omega, u);
    EField ddu = cov_deriv(geo, bun.omega, du);
    CurvatureData data = evaluate_curvature(jet, bun, 2);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    Rat lhs = ddu.at({a, b}).at(i, j).at_origin() -
                              ddu.at({b, a}).at(i, j).at_origin();
                    Rat rhs = 0;
                    for (int k = 0; k < d; ++k) {
                        rhs += data.rcal[0].at({a, b}, i, k) * u.comp[0].at(k, j).at_origin();
                        rhs -= u.comp[0].at(i, k).at_origin() * data.rcal[0].at({a, b}, k, j);
                    }
                    CHECK(lhs == rhs);
                }
    // trace-free bundle curvature
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            Rat tr = 0;
            for (int i = 0; i < d; ++i) tr += data.rcal[0].at({a, b}, i, i);
            CHECK(tr == 0);
        }
}

TEST_CASE("scalar invariants are frame independent") {
    MetricJet jet = random_metric_jet(3, 5, 31);
    std::vector<std::vector<Rat>> M = {{Rat(1), rat(1, 2), Rat(0)},
                                       {Rat(0), Rat(1), rat(-1, 3)},
                                       {rat(1, 4), Rat(0), Rat(1)}};
    MetricJet changed = linear_frame_change(jet, M);
    CurvatureData a = evaluate_curvature(jet, 2);
    CurvatureData b = evaluate_curvature(changed, 2);
    CHECK(!b.delta_gauge);
    TensorPolynomial s = poly_mono(Monomial{1, {scalar_S()}, {}});
    TensorPolynomial r2 = poly_mono(Monomial{
        1, {riemann(dn(I), dn(J), dn(K), dn(L)), riemann(up(I), up(J), up(K), up(L))}, {}});
    TensorPolynomial ds = poly_mono(Monomial{1, {with_prefix(scalar_S(), {up(P), dn(P)})}, {}});
    CHECK(numeric_eval(s, a) == numeric_eval(s, b));
    CHECK(numeric_eval(r2, a) == numeric_eval(r2, b));
    CHECK(numeric_eval(ds, a) == numeric_eval(ds, b));
}
