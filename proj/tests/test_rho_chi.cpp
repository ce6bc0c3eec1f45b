#include <doctest.h>

#include "heatsym/rho_chi.hpp"

#include "heatsym/calculus.hpp"

using namespace heatsym;

namespace {

constexpr int I = 1, J = 2, K = 3, L = 4, M_ = 5, P = 21, Q = 22, R2 = 23, S2 = 24;

TensorPolynomial mono1(Rat c, std::vector<Atom> scalars, std::vector<Atom> endo = {}) {
    Monomial m;
    m.coeff = std::move(c);
    m.scalars = std::move(scalars);
    m.endo = std::move(endo);
    if (m.endo.empty()) m.endo.push_back(identity_endo());
    return poly_mono(std::move(m));
}

TensorPolynomial sym(TensorPolynomial p, std::vector<int> labels) {
    return symmetrize(p, labels);
}

// The published formulas are one representative of each coefficient; the
// engine may land on another one equal modulo the curvature identities, so
// both sides go through the identity normalizer before comparison.
bool same_modulo_identities(const TensorPolynomial& a, const TensorPolynomial& b) {
    return simplify_identities(a) == simplify_identities(b);
}

}  // namespace

TEST_CASE("rho: unit and vanishing entries (A.5)") {
    CHECK(compute_rho({}, {}) == poly_identity());
    CHECK(compute_rho({I}, {}).is_zero());
    CHECK(compute_rho({}, {I}).is_zero());
    CHECK(compute_rho({I, J, K}, {}).is_zero());
    CHECK(compute_rho({}, {I, J}).is_zero());
}

TEST_CASE("rho_{<j>,<k>} = -1/2 Rcal_{jk}  (A.6)") {
    CHECK(compute_rho({J}, {K}) ==
          poly_mono(Monomial{rat(-1, 2), {}, {bundle_curv(dn(J), dn(K))}}));
}

TEST_CASE("rho_{<j>,<kl>}  (A.7)") {
    // -1/3 (R^p_klj + R^p_lkj) xi_p I - 1/6 (D_k Rcal_jl + D_l Rcal_jk)
    // written as the sym over (k,l) of twice each basic term
    TensorPolynomial e =
        sym(poly_add(mono1(rat(-2, 3), {riemann(up(P), dn(K), dn(L), dn(J)), xi(dn(P))}),
                     poly_mono(Monomial{
                         rat(-1, 3), {}, {with_prefix(bundle_curv(dn(J), dn(L)), {dn(K)})}})),
            {K, L});
    CHECK(compute_rho({J}, {K, L}) == e);
}

TEST_CASE("rho_{<jk>,<l>}  (A.8)") {
    TensorPolynomial e =
        sym(poly_add(mono1(rat(-1, 3), {riemann(up(P), dn(J), dn(L), dn(K)), xi(dn(P))}),
                     poly_mono(Monomial{
                         rat(-2, 3), {}, {with_prefix(bundle_curv(dn(K), dn(L)), {dn(J)})}})),
            {J, K});
    CHECK(compute_rho({J, K}, {L}) == e);
}

TEST_CASE("rho_{<j>,<klm>}  (A.9)") {
    TensorPolynomial body = poly_add(
        mono1(2, {with_prefix(riemann(up(P), dn(L), dn(J), dn(M_)), {dn(K)}), xi(dn(P))}),
        poly_add(
            poly_mono(Monomial{
                -1, {}, {with_prefix(bundle_curv(dn(J), dn(M_)), {dn(K), dn(L)})}}),
            poly_mono(Monomial{1,
                               {riemann(up(P), dn(K), dn(L), dn(J))},
                               {bundle_curv(dn(M_), dn(P))}})));
    CHECK(compute_rho({J}, {K, L, M_}) == poly_scale(sym(body, {K, L, M_}), rat(1, 4)));
}

TEST_CASE("rho_{<jkl>,<m>}  (A.10)") {
    TensorPolynomial body = poly_add(
        mono1(2, {with_prefix(riemann(up(P), dn(K), dn(L), dn(M_)), {dn(J)}), xi(dn(P))}),
        poly_add(
            poly_mono(Monomial{
                -3, {}, {with_prefix(bundle_curv(dn(L), dn(M_)), {dn(J), dn(K)})}}),
            poly_mono(Monomial{-1,
                               {riemann(up(P), dn(J), dn(K), dn(M_))},
                               {bundle_curv(dn(L), dn(P))}})));
    CHECK(compute_rho({J, K, L}, {M_}) == poly_scale(sym(body, {J, K, L}), rat(1, 4)));
}

TEST_CASE("rho_{<jk>,<lm>}  (A.11)") {
    TensorPolynomial body = poly_add(
        poly_add(
            mono1(5, {with_prefix(riemann(up(P), dn(L), dn(K), dn(M_)), {dn(J)}), xi(dn(P))}),
            mono1(1, {with_prefix(riemann(up(P), dn(J), dn(K), dn(M_)), {dn(L)}), xi(dn(P))})),
        poly_add(
            poly_add(poly_mono(Monomial{
                         -3, {}, {with_prefix(bundle_curv(dn(K), dn(M_)), {dn(J), dn(L)})}}),
                     poly_mono(Monomial{2,
                                        {riemann(up(P), dn(L), dn(M_), dn(J))},
                                        {bundle_curv(dn(K), dn(P))}})),
            poly_add(poly_mono(Monomial{1,
                                        {riemann(up(P), dn(J), dn(K), dn(L))},
                                        {bundle_curv(dn(P), dn(M_))}}),
                     poly_mono(Monomial{
                         3, {}, {bundle_curv(dn(J), dn(L)), bundle_curv(dn(K), dn(M_))}}))));
    TensorPolynomial expect = poly_scale(sym(sym(body, {J, K}), {L, M_}), rat(1, 6));
    CHECK(same_modulo_identities(compute_rho({J, K}, {L, M_}), expect));
}

TEST_CASE("scalar-mode rho equals the general rho with the bundle dropped") {
    for (auto [p, q] : std::vector<std::pair<int, int>>{{1, 2}, {2, 2}, {3, 1}}) {
        std::vector<int> a, b;
        for (int i = 0; i < p; ++i) a.push_back(30 + i);
        for (int j = 0; j < q; ++j) b.push_back(40 + j);
        CHECK(compute_rho(a, b, true) == drop_bundle_curv(compute_rho(a, b, false)));
    }
}

TEST_CASE("degree bound (A.4) and homogeneity of rho") {
    for (auto [p, q] : std::vector<std::pair<int, int>>{{1, 1}, {1, 2}, {2, 1}, {2, 2},
                                                        {3, 1}, {1, 3}, {3, 2}, {4, 1}}) {
        std::vector<int> a, b;
        for (int i = 0; i < p; ++i) a.push_back(30 + i);
        for (int j = 0; j < q; ++j) b.push_back(40 + j);
        TensorPolynomial rho = compute_rho(a, b);
        int bound = std::min({p, q, (p + q) / 3});
        for (const Monomial& m : rho.terms) {
            CHECK(xi_degree(m) <= bound);
            CHECK(xi_degree(m) + curvature_degree(m) == p + q);
        }
    }
}

TEST_CASE("Mobius inversion: rho reconstructs the composition") {
    for (auto [p, q] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {2, 2}, {1, 3}}) {
        std::vector<int> a, b;
        for (int i = 0; i < p; ++i) a.push_back(30 + i);
        for (int j = 0; j < q; ++j) b.push_back(40 + j);
        CHECK(reconstruct_compose_from_rho(a, b) == compose_poly(a, b));
    }
}

TEST_CASE("Djepko scalar entries (A.12, A.13)") {
    // rho_{<ijk>,<lm>} with Rcal = 0; nabla_ij = -D_i D_j flips those signs
    TensorPolynomial body = poly_zero();
    auto add = [&](Rat c, Atom a) {
        body = poly_add(body, mono1(std::move(c), {std::move(a), xi(dn(P))}));
    };
    add(rat(-27, 1), with_prefix(riemann(up(P), dn(L), dn(K), dn(M_)), {dn(I), dn(J)}));
    add(rat(-7, 1), with_prefix(riemann(up(P), dn(J), dn(K), dn(M_)), {dn(I), dn(L)}));
    add(rat(-2, 1), with_prefix(riemann(up(P), dn(J), dn(K), dn(M_)), {dn(L), dn(I)}));
    body = poly_add(body, mono1(-4, {riemann(up(Q), dn(I), dn(J), dn(L)),
                                     riemann(up(P), dn(Q), dn(K), dn(M_)), xi(dn(P))}));
    body = poly_add(body, mono1(-12, {riemann(up(Q), dn(I), dn(J), dn(L)),
                                      riemann(up(P), dn(M_), dn(K), dn(Q)), xi(dn(P))}));
    body = poly_add(body, mono1(-16, {riemann(up(Q), dn(L), dn(I), dn(M_)),
                                      riemann(up(P), dn(J), dn(K), dn(Q)), xi(dn(P))}));
    TensorPolynomial a12 = poly_scale(sym(sym(body, {I, J, K}), {L, M_}), rat(-1, 30));
    CHECK(same_modulo_identities(compute_rho({I, J, K}, {L, M_}, true), a12));
    // the general-case entry agrees modulo terms linear in the bundle curvature (A.14)
    CHECK(same_modulo_identities(drop_linear_bundle_curv(compute_rho({I, J, K}, {L, M_})), a12));

    TensorPolynomial body13 = poly_add(
        mono1(9, {with_prefix(riemann(up(P), dn(K), dn(L), dn(M_)), {dn(I), dn(J)}), xi(dn(P))}),
        mono1(7, {riemann(up(Q), dn(I), dn(J), dn(M_)), riemann(up(P), dn(K), dn(L), dn(Q)),
                  xi(dn(P))}));
    TensorPolynomial a13 = poly_scale(sym(body13, {I, J, K, L}), rat(1, 15));
    CHECK(same_modulo_identities(compute_rho({I, J, K, L}, {M_}, true), a13));
    CHECK(same_modulo_identities(drop_linear_bundle_curv(compute_rho({I, J, K, L}, {M_})), a13));  // A.15
}

TEST_CASE("Skokan xi^2 entry (A.16)") {
    TensorPolynomial body =
        mono1(1, {riemann(up(R2), dn(I), dn(J), dn(P)), riemann(up(S2), dn(K), dn(L), dn(Q)),
                  xi(dn(R2)), xi(dn(S2))});
    TensorPolynomial a16 =
        poly_scale(sym(sym(body, {I, J, K, L}), {P, Q}), rat(2, 3));
    TensorPolynomial rho = compute_rho({I, J, K, L}, {P, Q}, true);
    auto parts = split_by_xi_degree(rho);
    CHECK(parts[2] == a16);
    // general case modulo linear bundle-curvature terms
    auto parts_gen = split_by_xi_degree(drop_linear_bundle_curv(compute_rho({I, J, K, L}, {P, Q})));
    CHECK(parts_gen[2] == a16);
}

TEST_CASE("chi at order zero and one (A.17, A.18)") {
    ChiTriple c0 = compute_chi({});
    CHECK(c0.chi0.is_zero());
    CHECK(c0.chi1.is_zero());
    CHECK(c0.chi2.is_zero());

    ChiTriple c1 = compute_chi({I});
    CHECK(drop_linear_bundle_curv(c1.chi0).is_zero());
    TensorPolynomial chi1 =
        poly_add(mono1(rat(2, 3), {ricci(dn(I), dn(P)), xi(up(P))}),
                 poly_mono(Monomial{-1, {xi(up(P))}, {bundle_curv(dn(I), dn(P))}}));
    CHECK(c1.chi1 == chi1);
    CHECK(c1.chi2.is_zero());
}

TEST_CASE("chi at order two (A.19)") {
    ChiTriple c2 = compute_chi({I, J});
    TensorPolynomial chi0 =
        poly_add(poly_mono(Monomial{rat(1, 4),
                                    {metric(up(P), up(Q))},
                                    {bundle_curv(dn(I), dn(P)), bundle_curv(dn(J), dn(Q))}}),
                 poly_mono(Monomial{rat(1, 4),
                                    {metric(up(P), up(Q))},
                                    {bundle_curv(dn(J), dn(P)), bundle_curv(dn(I), dn(Q))}}));
    CHECK(drop_linear_bundle_curv(c2.chi0) == chi0);
    TensorPolynomial chi2 =
        mono1(rat(-2, 3), {riemann(dn(I), dn(P), dn(J), dn(Q)), xi(up(P)), xi(up(Q))});
    CHECK(c2.chi2 == chi2);
}

TEST_CASE("chi at order three (A.20)") {
    TensorPolynomial body = poly_zero();
    auto addI = [&](Rat c, std::vector<Atom> sc) {
        sc.push_back(xi(up(P)));
        body = poly_add(body, mono1(std::move(c), std::move(sc)));
    };
    addI(-27, {with_prefix(ricci(dn(K), dn(P)), {dn(I), dn(J)})});
    addI(-7, {with_prefix(riemann(dn(P), dn(J), dn(K), dn(Q)), {dn(I), up(Q)})});
    addI(-2, {with_prefix(riemann(dn(P), dn(J), dn(K), dn(Q)), {up(Q), dn(I)})});
    addI(-4, {riemann(up(Q), dn(I), dn(J), up(R2)), riemann(dn(P), dn(Q), dn(K), dn(R2))});
    addI(-12, {riemann(up(Q), dn(I), dn(J), up(R2)), riemann(dn(P), dn(R2), dn(K), dn(Q))});
    addI(-16, {ricci(up(Q), dn(I)), riemann(dn(P), dn(J), dn(K), dn(Q))});
    TensorPolynomial a20 = poly_scale(sym(body, {I, J, K}), rat(-1, 30));
    ChiTriple c3 = compute_chi({I, J, K});
    CHECK(drop_linear_bundle_curv(c3.chi1) == a20);
    CHECK(compute_chi({I, J, K}, true).chi1 == a20);
}

TEST_CASE("chi at order four (A.21)") {
    TensorPolynomial body = poly_add(
        mono1(-3, {with_prefix(riemann(dn(K), dn(P), dn(L), dn(Q)), {dn(I), dn(J)}), xi(up(P)),
                   xi(up(Q))}),
        mono1(4, {riemann(dn(P), dn(I), dn(J), dn(R2)), riemann(up(R2), dn(K), dn(L), dn(Q)),
                  xi(up(P)), xi(up(Q))}));
    TensorPolynomial a21 = poly_scale(sym(body, {I, J, K, L}), rat(2, 5));
    ChiTriple c4 = compute_chi({I, J, K, L});
    CHECK(drop_linear_bundle_curv(c4.chi2) == a21);
    CHECK(compute_chi({I, J, K, L}, true).chi2 == a21);
}
