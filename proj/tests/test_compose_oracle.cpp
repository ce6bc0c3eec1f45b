#include <doctest.h>

#include <algorithm>
#include <random>

#include "heatsym/calculus.hpp"
#include "heatsym/jetlab.hpp"

// End-to-end oracle for the symmetrized-derivative composition: both sides of
//   (-i nabla)^alpha (-i nabla)^beta u = sum_gamma coeff_gamma . (-i nabla)^gamma u
// are evaluated on a random section over a random metric+bundle jet at the
// center point, for every assignment of the alpha/beta labels.

using namespace heatsym;

namespace {

using GMat = std::vector<GaussRat>;  // d x d

GMat gzero(int d) { return GMat((std::size_t)d * d); }

void gadd(GMat& a, const GMat& b, const GaussRat& w) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += w * b[i];
}

struct SectionJets {
    int n, d;
    // iterated plain covariant derivatives of u at 0; level k has rank k
    std::vector<NumETensor> levels;
};

SectionJets section_jets(const MetricJet& jet, const BundleJet& bundle, int depth,
                         std::uint64_t seed) {
    JetGeometry geo = jet_geometry(jet);
    int n = jet.n, d = bundle.d;
    EField u = EField::make(n, 0, d, jet.degree);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Poly p = Poly::constant(n, jet.degree, rat((long)(rng() % 9) - 4, 3));
            for (int deg = 1; deg <= jet.degree; ++deg)
                for (int a = 0; a < n; ++a) {
                    Poly v = Poly::constant(n, jet.degree, rat((long)(rng() % 7) - 3, 2 + (long)(rng() % 5)));
                    for (int k = 0; k < deg; ++k) v = v * Poly::variable(n, jet.degree, a);
                    p = p + v;
                }
            u.comp[0].at(i, j) = p;
        }
    SectionJets out{n, d, {}};
    EField cur = u;
    for (int k = 0; k <= depth; ++k) {
        NumETensor t;
        t.n = n;
        t.rank = cur.rank;
        t.d = d;
        for (const MatP& m : cur.comp)
            for (const Poly& p : m.e) t.v.push_back(p.at_origin());
        out.levels.push_back(std::move(t));
        if (k < depth) cur = cov_deriv_left(geo, bundle.omega, cur);
    }
    return out;
}

// (-i nabla)_{s1} ... (-i nabla)_{sk} u at 0 for concrete coordinates
GMat plain_string_value(const SectionJets& sj, const std::vector<int>& coords) {
    int d = sj.d;
    const NumETensor& lvl = sj.levels[coords.size()];
    GMat out = gzero(d);
    GaussRat phase = minus_i_pow((unsigned)coords.size());
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out[i * d + j] = phase * GaussRat(lvl.at(coords, i, j));
    return out;
}

// symmetrized string: average over orderings
GMat sym_string_value(const SectionJets& sj, std::vector<int> coords) {
    int d = sj.d;
    std::sort(coords.begin(), coords.end());
    GMat acc = gzero(d);
    long cnt = 0;
    do {
        gadd(acc, plain_string_value(sj, coords), GaussRat(Rat(1)));
        ++cnt;
    } while (std::next_permutation(coords.begin(), coords.end()));
    for (auto& v : acc) v *= GaussRat(rat(1, cnt));
    return acc;
}

GMat gmul(const GMat& a, const GMat& b, int d) {
    GMat r = gzero(d);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k)
            for (int j = 0; j < d; ++j) r[i * d + j] += a[i * d + k] * b[k * d + j];
    return r;
}

bool check_compose(const std::vector<int>& alpha, const std::vector<int>& beta,
                   const MetricJet& jet, const BundleJet& bundle, std::uint64_t seed) {
    int m = (int)(alpha.size() + beta.size());
    CurvatureData data = evaluate_curvature(jet, bundle, m);
    SectionJets sj = section_jets(jet, bundle, m, seed);
    TensorPolynomial comp = compose_poly(alpha, beta);
    int n = jet.n, d = bundle.d;

    std::vector<int> all = alpha;
    all.insert(all.end(), beta.begin(), beta.end());
    std::vector<int> cursor(all.size(), 0);
    while (true) {
        FreeAssign outer;
        for (std::size_t i = 0; i < all.size(); ++i) outer[all[i]] = cursor[i];

        // left side: avg over orderings of alpha and of beta separately
        GMat lhs = gzero(d);
        {
            std::vector<int> ac, bc;
            for (int l : alpha) ac.push_back(outer[l]);
            for (int l : beta) bc.push_back(outer[l]);
            std::sort(ac.begin(), ac.end());
            std::sort(bc.begin(), bc.end());
            long cnt = 0;
            do {
                std::vector<int> bc2 = bc;
                std::sort(bc2.begin(), bc2.end());
                do {
                    std::vector<int> s = ac;
                    s.insert(s.end(), bc2.begin(), bc2.end());
                    gadd(lhs, plain_string_value(sj, s), GaussRat(Rat(1)));
                    ++cnt;
                } while (std::next_permutation(bc2.begin(), bc2.end()));
            } while (std::next_permutation(ac.begin(), ac.end()));
            for (auto& v : lhs) v *= GaussRat(rat(1, cnt));
        }

        // right side: per term, sum the link labels, multiply the coefficient
        // matrix by the symmetrized derivative of u
        GMat rhs = gzero(d);
        for (const Monomial& term : comp.terms) {
            Monomial work = freshen_dummies(term);  // xi pair labels become positive
            std::vector<int> gamma;
            Monomial cmono;
            cmono.coeff = work.coeff;
            cmono.endo = work.endo;
            for (const Atom& at : work.scalars) {
                if (at.kind == AtomKind::Xi)
                    gamma.push_back(at.slots[0].label);
                else
                    cmono.scalars.push_back(at);
            }
            std::vector<int> links;
            for (int g : gamma)
                if (!outer.count(g)) links.push_back(g);
            std::vector<int> lcur(links.size(), 0);
            while (true) {
                FreeAssign assign = outer;
                for (std::size_t i = 0; i < links.size(); ++i) assign[links[i]] = lcur[i];
                TensorPolynomial cp;
                cp.terms.push_back(cmono);
                GMat cval = numeric_eval_endo(cp, data, assign);
                std::vector<int> coords;
                for (int g : gamma) coords.push_back(assign.at(g));
                GMat du = sym_string_value(sj, coords);
                gadd(rhs, gmul(cval, du, d), GaussRat(Rat(1)));
                int i = (int)links.size() - 1;
                while (i >= 0 && ++lcur[i] == n) lcur[i--] = 0;
                if (i < 0) break;
            }
        }

        for (std::size_t i = 0; i < lhs.size(); ++i)
            if (lhs[i] != rhs[i]) return false;

        int i = (int)all.size() - 1;
        while (i >= 0 && ++cursor[i] == n) cursor[i--] = 0;
        if (i < 0) break;
    }
    return true;
}

}  // namespace

TEST_CASE("compose_poly matches iterated covariant derivatives on a jet") {
    MetricJet jet = random_metric_jet(2, 6, 77);
    BundleJet bundle = random_bundle_jet(2, 2, 6, 78);
    CHECK(check_compose({1}, {2}, jet, bundle, 5));
    CHECK(check_compose({1, 2}, {3}, jet, bundle, 6));
    CHECK(check_compose({1}, {2, 3}, jet, bundle, 7));
    CHECK(check_compose({1, 2}, {3, 4}, jet, bundle, 8));
}

TEST_CASE("compose_poly matches the jet oracle at order five") {
    MetricJet jet = random_metric_jet(2, 7, 79);
    BundleJet bundle = random_bundle_jet(2, 2, 7, 80);
    CHECK(check_compose({1, 2, 3}, {4, 5}, jet, bundle, 9));
}
