#include "heatsym/calculus.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace heatsym {

// ---------------------------------------------------------------------------
// covariant derivative
// ---------------------------------------------------------------------------

TensorPolynomial covariant_derivative(const TensorPolynomial& p, Index i) {
    std::vector<Monomial> out;
    for (const Monomial& m0 : p.terms) {
        Monomial m = freshen_dummies(m0);
        for (std::size_t a = 0; a < m.scalars.size(); ++a) {
            const Atom& at = m.scalars[a];
            if (at.kind == AtomKind::Trace) {
                for (std::size_t c = 0; c < at.chain.size(); ++c) {
                    if (!is_differentiable(at.chain[c].kind)) continue;
                    Monomial t = m;
                    t.scalars[a].chain[c].prefix.insert(t.scalars[a].chain[c].prefix.begin(), i);
                    out.push_back(std::move(t));
                }
            } else if (is_differentiable(at.kind)) {
                Monomial t = m;
                t.scalars[a].prefix.insert(t.scalars[a].prefix.begin(), i);
                out.push_back(std::move(t));
            }
        }
        for (std::size_t a = 0; a < m.endo.size(); ++a) {
            if (!is_differentiable(m.endo[a].kind)) continue;
            Monomial t = m;
            t.endo[a].prefix.insert(t.endo[a].prefix.begin(), i);
            out.push_back(std::move(t));
        }
    }
    return make_poly(std::move(out));
}

// ---------------------------------------------------------------------------
// plain-string templates
//
// template(m) expands the plain derivative string D_{x1}...D_{xm} u into
// sum of coeff * D_gamma u, rendered as a polynomial where a xi atom with
// label c stands for the slot (-i nabla)_c.  Template labels x1..xm are the
// reserved labels 101..100+m.  Commutators emit, in (-i nabla)^2 units,
//   [D_a, D_b] = -Rcal_ab   on the bundle slot,
//   [D_a, D_b] : c -> +R^q_cab  on every open lower slot.
// ---------------------------------------------------------------------------

namespace {

constexpr int kTemplateBase = 100;  // x_i = kTemplateBase + i

int g_compose_bound = 6;

struct TemplateKey {
    int m;
    bool scalar;
    int cap;  // -1 = full
    bool operator<(const TemplateKey& o) const {
        return std::tie(m, scalar, cap) < std::tie(o.m, o.scalar, o.cap);
    }
};

TensorPolynomial template_poly(int m, bool scalar_mode, int cap);

// Instantiate a template of size `have` on the labels `targets`; link labels
// (fresh dummies bridging curvature atoms and slots) are freshened by
// poly_mul later, and target relabeling happens here.
TensorPolynomial instantiate(const TensorPolynomial& tmpl, const std::vector<int>& targets) {
    std::map<int, int> map;
    for (std::size_t i = 0; i < targets.size(); ++i) map[kTemplateBase + 1 + (int)i] = targets[i];
    return relabel(tmpl, map);
}

// one commutator insertion: prefix `pre`, commutator pair (a, b), suffix `suf`
constexpr int kCommPreBase = 820;  // canonical prefix labels
constexpr int kCommA = 850, kCommB = 851;
constexpr int kCommSufBase = 860;

TensorPolynomial commutator_terms_canonical(int np, int ns, bool scalar_mode, int cap) {
    std::vector<int> pre, suf;
    for (int i = 0; i < np; ++i) pre.push_back(kCommPreBase + 1 + i);
    for (int j = 0; j < ns; ++j) suf.push_back(kCommSufBase + 1 + j);
    const int a = kCommA, b = kCommB;

    TensorPolynomial total;
    for (std::size_t mask = 0; mask < (std::size_t(1) << np); ++mask) {
        std::vector<Index> devs;  // derivatives hitting the curvature factor
        std::vector<int> rest;    // remaining plain string
        for (int i = 0; i < np; ++i) {
            if (mask & (std::size_t(1) << i))
                devs.push_back(dn(pre[i]));
            else
                rest.push_back(pre[i]);
        }
        std::size_t rest_prefix = rest.size();
        rest.insert(rest.end(), suf.begin(), suf.end());

        // bundle action: -Rcal_ab
        if (!scalar_mode) {
            TensorPolynomial sub =
                instantiate(template_poly((int)rest.size(), scalar_mode, -1), rest);
            Monomial rc;
            rc.coeff = -1;
            rc.endo.push_back(with_prefix(bundle_curv(dn(a), dn(b)), devs));
            total = poly_add(total, poly_mul(poly_mono(rc), sub));
        }

        // slot action on each suffix index: +R^q_{c a b}
        for (int r = 0; r < ns; ++r) {
            int q = fresh_label();
            std::vector<int> rest2 = rest;
            rest2[rest_prefix + r] = q;
            TensorPolynomial sub =
                instantiate(template_poly((int)rest2.size(), scalar_mode, -1), rest2);
            Monomial rm;
            rm.coeff = 1;
            rm.scalars.push_back(with_prefix(riemann(up(q), dn(suf[r]), dn(a), dn(b)), devs));
            total = poly_add(total, poly_mul(poly_mono(rm), sub));
        }
    }
    return total;
}

TensorPolynomial commutator_terms(const std::vector<int>& pre, int a, int b,
                                  const std::vector<int>& suf, bool scalar_mode, int cap) {
    static std::map<std::tuple<int, int, bool, int>, TensorPolynomial> cache;
    static std::mutex mu;
    std::tuple<int, int, bool, int> key{(int)pre.size(), (int)suf.size(), scalar_mode, cap};
    const TensorPolynomial* canon = nullptr;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) canon = &it->second;
    }
    if (!canon) {
        TensorPolynomial val =
            commutator_terms_canonical((int)pre.size(), (int)suf.size(), scalar_mode, cap);
        std::lock_guard<std::mutex> lock(mu);
        canon = &cache.emplace(key, std::move(val)).first->second;
    }
    std::map<int, int> map;
    for (std::size_t i = 0; i < pre.size(); ++i) map[kCommPreBase + 1 + (int)i] = pre[i];
    map[kCommA] = a;
    map[kCommB] = b;
    for (std::size_t j = 0; j < suf.size(); ++j) map[kCommSufBase + 1 + (int)j] = suf[j];
    return relabel(*canon, map);
}

// transform `from` into `to` by adjacent swaps, emitting the commutator of
// every swapped pair: plain(from) - plain(to) = sum of emitted terms
TensorPolynomial bubble_path_comms(std::vector<int> walk, const std::vector<int>& target,
                                   bool scalar_mode, int cap) {
    TensorPolynomial contrib;
    int m = (int)walk.size();
    for (int pos = 0; pos < m; ++pos) {
        int want = target[pos];
        int at = pos;
        while (walk[at] != want) ++at;
        for (int j = at; j > pos; --j) {
            std::vector<int> pre(walk.begin(), walk.begin() + (j - 1));
            std::vector<int> suf(walk.begin() + j + 1, walk.end());
            contrib =
                poly_add(contrib, commutator_terms(pre, walk[j - 1], walk[j], suf, scalar_mode, cap));
            std::swap(walk[j - 1], walk[j]);
        }
    }
    return contrib;
}

// D_a o D_gamma expressed through symmetrized derivatives:
//   D_a o D_gamma = D_{a u gamma} - (1/m) sum_{c in gamma} Delta_c,
//   Delta_c = D_c o D_{(gamma\c) u a} - D_a o D_gamma
// and every Delta_c expands into commutator corrections of strictly lower
// order.  This avoids enumerating all m! orderings.
constexpr int kScA = 900;
constexpr int kScGBase = 910;

TensorPolynomial single_compose_canonical(int g, bool scalar_mode, int cap) {
    const int a = kScA;
    std::vector<int> gamma;
    for (int i = 0; i < g; ++i) gamma.push_back(kScGBase + 1 + i);
    int m = g + 1;
    TensorPolynomial acc;
    {
        Monomial head;
        head.scalars.push_back(xi(dn(a)));
        for (int l : gamma) head.scalars.push_back(xi(dn(l)));
        acc = poly_mono(std::move(head));
    }
    for (int ci = 0; ci < g; ++ci) {
        int c = gamma[ci];
        std::vector<int> rest;
        for (int j = 0; j < g; ++j)
            if (j != ci) rest.push_back(gamma[j]);
        TensorPolynomial delta;
        for (int t = 0; t < g; ++t) {
            // s1 = (c, rest[0..t), a, rest[t..)); s2 swaps positions 0 and t+1
            std::vector<int> s1;
            s1.push_back(c);
            for (int j = 0; j < t; ++j) s1.push_back(rest[j]);
            s1.push_back(a);
            for (int j = t; j < g - 1; ++j) s1.push_back(rest[j]);
            std::vector<int> s2 = s1;
            std::swap(s2[0], s2[t + 1]);
            delta = poly_add(delta, bubble_path_comms(s1, s2, scalar_mode, -1));
        }
        delta = symmetrize(delta, rest);
        acc = poly_add(acc, poly_scale(delta, rat(-1, (long)m * g)));
    }
    return acc;
}

const TensorPolynomial& single_compose_cached(int g, bool scalar_mode, int cap) {
    static std::map<std::tuple<int, bool, int>, TensorPolynomial> cache;
    static std::mutex mu;
    std::tuple<int, bool, int> key{g, scalar_mode, cap};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    TensorPolynomial val = single_compose_canonical(g, scalar_mode, cap);
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, std::move(val)).first->second;
}

TensorPolynomial template_poly_uncached(int m, bool scalar_mode, int cap) {
    if (m == 0) return poly_one();
    if (m == 1) return poly_mono(Monomial{1, {xi(dn(kTemplateBase + 1))}, {}});
    std::vector<int> tail;
    for (int i = 2; i <= m; ++i) tail.push_back(kTemplateBase + i);
    TensorPolynomial sub = instantiate(template_poly(m - 1, scalar_mode, -1), tail);
    const int x1 = kTemplateBase + 1;

    // D_{x1} o (C . D_delta) = (D_{x1} C) . D_delta + C . (D_{x1} o D_delta)
    TensorPolynomial acc = covariant_derivative(sub, dn(x1));
    for (const Monomial& term : sub.terms) {
        // split the xi atoms off; relabel their pair labels to fresh frees so
        // the link between the coefficient and the slot survives the product
        Monomial work = term;
        std::map<int, int> tofresh;
        for (const Atom& at : work.scalars)
            if (at.kind == AtomKind::Xi && at.slots[0].label < 0)
                tofresh.emplace(at.slots[0].label, fresh_label());
        if (!tofresh.empty()) work = relabel(work, tofresh);
        std::vector<int> delta;
        Monomial coeff;
        coeff.coeff = work.coeff;
        coeff.endo = work.endo;
        for (const Atom& at : work.scalars) {
            if (at.kind == AtomKind::Xi)
                delta.push_back(at.slots[0].label);
            else
                coeff.scalars.push_back(at);
        }
        const TensorPolynomial& sc = single_compose_cached((int)delta.size(), scalar_mode, -1);
        std::map<int, int> map;
        map[kScA] = x1;
        for (std::size_t i = 0; i < delta.size(); ++i) map[kScGBase + 1 + (int)i] = delta[i];
        TensorPolynomial sci = relabel(sc, map);
        TensorPolynomial cpoly;
        cpoly.terms.push_back(std::move(coeff));
        acc = poly_add(acc, poly_mul(cpoly, sci));
    }
    return acc;
}

TensorPolynomial template_poly(int m, bool scalar_mode, int cap) {
    static std::map<TemplateKey, TensorPolynomial> cache;
    static std::mutex mu;
    TemplateKey key{m, scalar_mode, -1};
    const TensorPolynomial* full = nullptr;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) full = &it->second;
    }
    if (!full) {
        TensorPolynomial val = template_poly_uncached(m, scalar_mode, -1);
        std::lock_guard<std::mutex> lock(mu);
        full = &cache.emplace(key, std::move(val)).first->second;
    }
    if (cap < 0 || cap >= m) return *full;
    return poly_filter(*full, [&](const Monomial& mm) { return xi_degree(mm) <= cap; });
}

}  // namespace

int compose_order_bound() { return g_compose_bound; }
void set_compose_order_bound(int bound) { g_compose_bound = bound; }

TensorPolynomial ensure_identity_chain(const TensorPolynomial& p) {
    std::vector<Monomial> ms;
    for (Monomial m : p.terms) {
        if (m.endo.empty()) m.endo.push_back(identity_endo());
        ms.push_back(std::move(m));
    }
    return make_poly(std::move(ms));
}

namespace {

constexpr int kComposeABase = 760;  // canonical alpha labels for the memo
constexpr int kComposeBBase = 790;

TensorPolynomial compose_canonical(int p, int q, bool scalar_mode, int cap) {
    std::vector<int> alpha, beta, targets;
    for (int i = 0; i < p; ++i) alpha.push_back(kComposeABase + 1 + i);
    for (int j = 0; j < q; ++j) beta.push_back(kComposeBBase + 1 + j);
    targets = alpha;
    targets.insert(targets.end(), beta.begin(), beta.end());
    TensorPolynomial res = instantiate(template_poly(p + q, scalar_mode, cap), targets);
    res = symmetrize(res, alpha);
    res = symmetrize(res, beta);
    if (cap >= 0)
        res = poly_filter(res, [&](const Monomial& mm) { return xi_degree(mm) <= cap; });
    return ensure_identity_chain(res);
}

}  // namespace

TensorPolynomial compose_poly(const std::vector<int>& alpha, const std::vector<int>& beta,
                              bool scalar_mode, int xi_cap) {
    int m = (int)(alpha.size() + beta.size());
    if (m > g_compose_bound)
        throw CapacityError("compose order " + std::to_string(m) + " exceeds bound " +
                            std::to_string(g_compose_bound));
    if (xi_cap >= m) xi_cap = -1;
    static std::map<std::tuple<int, int, bool, int>, TensorPolynomial> cache;
    static std::mutex mu;
    int p = (int)alpha.size(), q = (int)beta.size();
    std::tuple<int, int, bool, int> key{p, q, scalar_mode, xi_cap};
    const TensorPolynomial* canon = nullptr;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) canon = &it->second;
    }
    if (!canon) {
        TensorPolynomial val = compose_canonical(p, q, scalar_mode, xi_cap);
        std::lock_guard<std::mutex> lock(mu);
        canon = &cache.emplace(key, std::move(val)).first->second;
    }
    std::map<int, int> map;
    for (int i = 0; i < p; ++i) map[kComposeABase + 1 + i] = alpha[i];
    for (int j = 0; j < q; ++j) map[kComposeBBase + 1 + j] = beta[j];
    return relabel(*canon, map);
}

OperatorPolynomial compose_sym_derivs(const std::vector<int>& alpha, const std::vector<int>& beta,
                                      bool scalar_mode) {
    TensorPolynomial p = compose_poly(alpha, beta, scalar_mode);
    // group terms by the label set of their xi atoms
    std::map<std::vector<int>, std::vector<Monomial>> groups;
    for (Monomial m : p.terms) {
        std::vector<int> gamma;
        std::vector<Atom> keep;
        for (const Atom& a : m.scalars) {
            if (a.kind == AtomKind::Xi)
                gamma.push_back(a.slots[0].label);
            else
                keep.push_back(a);
        }
        std::sort(gamma.begin(), gamma.end());
        m.scalars = keep;
        groups[gamma].push_back(std::move(m));
    }
    OperatorPolynomial out;
    for (auto& [gamma, ms] : groups) {
        DerivOpTerm t;
        t.sym_deriv = gamma;
        t.coeff_poly = make_poly(std::move(ms));
        out.terms.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// identity simplifier
// ---------------------------------------------------------------------------

namespace {

// does the innermost (last) prefix index of atom `a` contract one of its own slots?
int own_slot_of_prefix(const Atom& a, std::size_t prefix_pos) {
    for (std::size_t s = 0; s < a.slots.size(); ++s)
        if (a.slots[s].label == a.prefix[prefix_pos].label) return (int)s;
    return -1;
}

// innermost divergence pair (prefix index against own slot), else -1
int divergence_prefix(const Atom& a) {
    if (a.kind != AtomKind::Riemann && a.kind != AtomKind::Ricci) return -1;
    for (int p = (int)a.prefix.size() - 1; p >= 0; --p)
        if (own_slot_of_prefix(a, (std::size_t)p) >= 0) return p;
    return -1;
}

// Location of an atom inside a monomial: scalars, endo chain, or trace chain.
struct AtomLoc {
    int where;  // 0 scalars, 1 endo, 2 chain of a trace atom in scalars
    int ai;
    int ci;
};

const Atom& loc_atom(const Monomial& m, const AtomLoc& loc) {
    if (loc.where == 0) return m.scalars[loc.ai];
    if (loc.where == 1) return m.endo[loc.ai];
    return m.scalars[loc.ai].chain[loc.ci];
}

Atom& loc_atom(Monomial& m, const AtomLoc& loc) {
    if (loc.where == 0) return m.scalars[loc.ai];
    if (loc.where == 1) return m.endo[loc.ai];
    return m.scalars[loc.ai].chain[loc.ci];
}

// Swap the adjacent prefix derivatives (t, t+1) of the atom at loc:
//   D_.. D_a D_b D_deeper X = D_.. D_b D_a D_deeper X + D_.. [D_a, D_b] D_deeper X
// with [D_a,D_b] acting through +R^q_{cab} on every open lower slot (the
// deeper prefix indices and the atom's own slots) and through the adjoint of
// -Rcal_ab on the bundle when X is an endomorphism.
TensorPolynomial commute_prefix_at(const Monomial& m, const AtomLoc& loc, int t) {
    const Atom& a = loc_atom(m, loc);
    Index ia = a.prefix[t], ib = a.prefix[t + 1];
    std::vector<Index> outer(a.prefix.begin(), a.prefix.begin() + t);
    std::vector<Index> deeper(a.prefix.begin() + t + 2, a.prefix.end());

    TensorPolynomial out;
    Monomial swapped = m;
    std::swap(loc_atom(swapped, loc).prefix[t], loc_atom(swapped, loc).prefix[t + 1]);
    out = poly_add(out, poly_mono(std::move(swapped)));

    std::size_t np = outer.size();
    for (std::size_t mask = 0; mask < (std::size_t(1) << np); ++mask) {
        std::vector<Index> devs, rest;
        for (std::size_t i = 0; i < np; ++i) {
            if (mask & (std::size_t(1) << i))
                devs.push_back(outer[i]);
            else
                rest.push_back(outer[i]);
        }
        auto base_prefix = [&](const Monomial&, const Atom& x) {
            std::vector<Index> newpref = rest;
            newpref.insert(newpref.end(), deeper.begin(), deeper.end());
            (void)x;
            return newpref;
        };
        // slot action on the deeper prefix indices and on the atom's own slots
        auto emit_slot = [&](bool on_prefix, std::size_t pos) {
            Monomial tmono = m;
            Atom& x = loc_atom(tmono, loc);
            int q = fresh_label();
            Index c = on_prefix ? deeper[pos] : x.slots[pos];
            std::vector<Index> newpref = base_prefix(tmono, x);
            if (on_prefix) newpref[rest.size() + pos] = dn(q);
            x.prefix = newpref;
            if (!on_prefix) x.slots[pos] = dn(q);
            tmono.scalars.push_back(with_prefix(riemann(up(q), c, ia, ib), devs));
            out = poly_add(out, poly_mono(std::move(tmono)));
        };
        for (std::size_t r = 0; r < deeper.size(); ++r) emit_slot(true, r);
        for (std::size_t s = 0; s < a.slots.size(); ++s) emit_slot(false, s);

        // bundle action for endomorphism-valued atoms: ad(-Rcal_ab)
        if (is_endo_kind(a.kind)) {
            for (int side = 0; side < 2; ++side) {
                Monomial tmono = m;
                Atom& x = loc_atom(tmono, loc);
                x.prefix = base_prefix(tmono, x);
                Atom rc = with_prefix(bundle_curv(ia, ib), devs);
                std::vector<Atom>* chain =
                    loc.where == 1 ? &tmono.endo : &tmono.scalars[loc.ai].chain;
                int pos = loc.where == 1 ? loc.ai : loc.ci;
                chain->insert(chain->begin() + pos + side, std::move(rc));
                tmono.coeff *= (side == 0) ? Rat(-1) : Rat(1);
                out = poly_add(out, poly_mono(std::move(tmono)));
            }
        }
    }
    return out;
}

// canonical order for derivative prefixes: free labels first by value, then
// canonical dummies by their numbering
inline std::pair<int, int> prefix_rank(const Index& i) {
    if (i.label >= 0) return {0, i.label};
    return {1, -i.label};
}

// Rewrites of one monomial into a polynomial; returns false when no rule fired.
bool rewrite_monomial(const Monomial& m, TensorPolynomial& out) {
    // S1 / S2 / S3: divergence handling on scalar atoms
    for (std::size_t ai = 0; ai < m.scalars.size(); ++ai) {
        const Atom& a = m.scalars[ai];
        int p = divergence_prefix(a);
        if (p < 0) continue;
        int last = (int)a.prefix.size() - 1;
        if (p == last) {
            int s = own_slot_of_prefix(a, p);
            if (a.kind == AtomKind::Ricci) {
                // D^p Ric_{jp} -> 1/2 D_j S
                Monomial t = m;
                Atom& at = t.scalars[ai];
                Index other = at.slots[1 - s];
                at.kind = AtomKind::Scalar;
                at.slots.clear();
                at.prefix[p] = other;
                t.coeff *= rat(1, 2);
                out = poly_add(out, poly_mono(std::move(t)));
                return true;
            }
            // Riemann: move the contracted slot to position 3 (sign tracked), then
            //   D^d R_{abcd} = D_b Ric_{ac} - D_a Ric_{bc}
            Monomial base = m;
            Atom& at = base.scalars[ai];
            Rat sign = 1;
            if (s == 0 || s == 1) {  // pair-swap to put it in the second pair
                std::swap(at.slots[0], at.slots[2]);
                std::swap(at.slots[1], at.slots[3]);
                s += 2;
            }
            if (s == 2) {
                std::swap(at.slots[2], at.slots[3]);
                sign = -sign;
                s = 3;
            }
            Index A = at.slots[0], B = at.slots[1], C = at.slots[2];
            std::vector<Index> outer(at.prefix.begin(), at.prefix.end() - 1);

            Monomial t1 = base;
            Atom& x1 = t1.scalars[ai];
            x1.kind = AtomKind::Ricci;
            x1.slots = {A, C};
            x1.prefix = outer;
            x1.prefix.push_back(B);
            t1.coeff *= sign;
            Monomial t2 = base;
            Atom& x2 = t2.scalars[ai];
            x2.kind = AtomKind::Ricci;
            x2.slots = {B, C};
            x2.prefix = outer;
            x2.prefix.push_back(A);
            t2.coeff *= -sign;
            out = poly_add(out, make_poly({t1, t2}));
            return true;
        }
        // S3: commute the divergence prefix one step inward
        out = poly_add(out, commute_prefix_at(m, AtomLoc{0, (int)ai, -1}, p));
        return true;
    }

    // S6: sort derivative prefixes into a canonical order, commuting with
    // curvature corrections; fires only when no divergence is pending
    {
        std::vector<AtomLoc> locs;
        for (std::size_t ai = 0; ai < m.scalars.size(); ++ai) {
            if (m.scalars[ai].kind == AtomKind::Trace) {
                for (std::size_t ci = 0; ci < m.scalars[ai].chain.size(); ++ci)
                    locs.push_back(AtomLoc{2, (int)ai, (int)ci});
            } else {
                locs.push_back(AtomLoc{0, (int)ai, -1});
            }
        }
        for (std::size_t ai = 0; ai < m.endo.size(); ++ai) locs.push_back(AtomLoc{1, (int)ai, -1});
        for (const AtomLoc& loc : locs) {
            const Atom& a = loc_atom(m, loc);
            for (int t = 0; t + 1 < (int)a.prefix.size(); ++t) {
                if (prefix_rank(a.prefix[t]) > prefix_rank(a.prefix[t + 1])) {
                    out = poly_add(out, commute_prefix_at(m, loc, t));
                    return true;
                }
            }
        }
    }

    // B1: first-Bianchi normal form of a single Riemann atom: the highest
    // ranked slot must not be paired (within the atom's antisymmetric pairs)
    // with the lowest ranked one; R_{wxyz} = -R_{wyzx} - R_{wzxy} otherwise
    for (std::size_t ai = 0; ai < m.scalars.size(); ++ai) {
        const Atom& a = m.scalars[ai];
        if (a.kind != AtomKind::Riemann) continue;
        std::array<std::pair<int, int>, 4> rk;
        bool distinct = true;
        for (int s = 0; s < 4; ++s) rk[s] = prefix_rank(a.slots[s]);
        for (int s = 0; s < 4 && distinct; ++s)
            for (int t = s + 1; t < 4; ++t)
                if (rk[s] == rk[t]) distinct = false;
        if (!distinct) continue;
        int pmax = 0, pmin = 0;
        for (int s = 1; s < 4; ++s) {
            if (rk[s] > rk[pmax]) pmax = s;
            if (rk[s] < rk[pmin]) pmin = s;
        }
        int partner = pmax ^ 1;
        if (partner != pmin) continue;
        // arrange (w = max, x = its partner) into the first pair
        Monomial base = m;
        Atom& at = base.scalars[ai];
        Rat sign = 1;
        if (pmax >= 2) {
            std::swap(at.slots[0], at.slots[2]);
            std::swap(at.slots[1], at.slots[3]);
            pmax -= 2;
        }
        if (pmax == 1) {
            std::swap(at.slots[0], at.slots[1]);
            sign = -sign;
        }
        Index w = at.slots[0], xx = at.slots[1], y = at.slots[2], z = at.slots[3];
        Monomial t1 = base;
        t1.scalars[ai].slots = {w, y, z, xx};
        t1.coeff *= -sign;
        Monomial t2 = base;
        t2.scalars[ai].slots = {w, z, xx, y};
        t2.coeff *= -sign;
        out = poly_add(out, make_poly({t1, t2}));
        return true;
    }

    // S4 / S5: first-Bianchi reduction of quadratic Riemann contractions
    for (std::size_t x = 0; x < m.scalars.size(); ++x) {
        if (m.scalars[x].kind != AtomKind::Riemann || !m.scalars[x].prefix.empty()) continue;
        for (std::size_t y = x + 1; y < m.scalars.size(); ++y) {
            if (m.scalars[y].kind != AtomKind::Riemann || !m.scalars[y].prefix.empty()) continue;
            const Atom &X = m.scalars[x], &Y = m.scalars[y];
            // mutual pairing: X slot -> Y slot
            std::map<int, int> pair;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    if (X.slots[i].label == Y.slots[j].label) pair[i] = j;
            if (pair.size() < 3) continue;

            // Try all symmetry variants of both atoms and look for the
            // crossed patterns; rewrite them onto the aligned pattern.
            struct V {
                Atom atom;
                int sign;
            };
            auto variants = [](const Atom& at) {
                std::vector<V> vs;
                for (int s1 = 0; s1 < 2; ++s1)
                    for (int s2 = 0; s2 < 2; ++s2)
                        for (int ps = 0; ps < 2; ++ps) {
                            Atom b = at;
                            if (s1) std::swap(b.slots[0], b.slots[1]);
                            if (s2) std::swap(b.slots[2], b.slots[3]);
                            if (ps) {
                                std::swap(b.slots[0], b.slots[2]);
                                std::swap(b.slots[1], b.slots[3]);
                            }
                            vs.push_back({b, ((s1 + s2) % 2) ? -1 : 1});
                        }
                return vs;
            };

            auto pattern_of = [](const Atom& A, const Atom& B) {
                // returns the pairing j(i) for contracted slots, -1 for free
                std::array<int, 4> pat{-1, -1, -1, -1};
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j)
                        if (A.slots[i].label == B.slots[j].label) pat[i] = j;
                return pat;
            };

            if (pair.size() == 4) {
                // fully contracted: aligned = |R|^2; crossed = R_ijkl R^ikjl
                bool is_aligned = false;
                for (const V& vx : variants(X))
                    for (const V& vy : variants(Y)) {
                        auto pat = pattern_of(vx.atom, vy.atom);
                        if (pat == std::array<int, 4>{0, 1, 2, 3}) is_aligned = true;
                    }
                if (is_aligned) continue;
                // crossed: rewrite via R_ijkl R^ikjl = 1/2 R_ijkl R^ijkl
                for (const V& vx : variants(X))
                    for (const V& vy : variants(Y)) {
                        auto pat = pattern_of(vx.atom, vy.atom);
                        if (pat == std::array<int, 4>{0, 2, 1, 3}) {
                            Monomial t = m;
                            t.coeff *= rat(vx.sign * vy.sign, 2);
                            Atom ny = vy.atom;
                            // rearrange Y to align with X
                            for (int i = 0; i < 4; ++i) ny.slots[i] = flip(vx.atom.slots[i]);
                            t.scalars[x] = vx.atom;
                            t.scalars[y] = ny;
                            out = poly_add(out, poly_mono(std::move(t)));
                            return true;
                        }
                    }
                continue;
            }

            // three mutual pairs, one free slot on each atom: normalize the
            // frees to position 0; classify the residual bijection on {1,2,3}
            for (const V& vx : variants(X))
                for (const V& vy : variants(Y)) {
                    auto pat = pattern_of(vx.atom, vy.atom);
                    if (pat[0] != -1) continue;
                    // X1 pattern: {., 1, 2, 3} -> basis, keep
                    // X2 pattern: {., 2, 1, 3} -> 1/2 X1
                    // X3 pattern: {., 2, 3, 1} -> -1/2 X1
                    Rat factor;
                    if (pat == std::array<int, 4>{-1, 2, 1, 3})
                        factor = rat(1, 2);
                    else if (pat == std::array<int, 4>{-1, 2, 3, 1})
                        factor = rat(-1, 2);
                    else
                        continue;
                    Monomial t = m;
                    t.coeff *= factor * Rat(vx.sign * vy.sign);
                    Atom ny = vy.atom;
                    ny.slots[0] = vy.atom.slots[0];
                    for (int i = 1; i < 4; ++i) ny.slots[i] = flip(vx.atom.slots[i]);
                    t.scalars[x] = vx.atom;
                    t.scalars[y] = ny;
                    out = poly_add(out, poly_mono(std::move(t)));
                    return true;
                }
        }
    }
    return false;
}

}  // namespace

TensorPolynomial simplify_identities(const TensorPolynomial& p) {
    TensorPolynomial cur = p;
    bool changed = true;
    int guard = 0;
    while (changed) {
        if (++guard > 10000) throw CapacityError("simplify_identities did not terminate");
        changed = false;
        for (std::size_t i = 0; i < cur.terms.size(); ++i) {
            TensorPolynomial repl;
            if (rewrite_monomial(cur.terms[i], repl)) {
                TensorPolynomial rest;
                for (std::size_t j = 0; j < cur.terms.size(); ++j)
                    if (j != i) rest.terms.push_back(cur.terms[j]);
                cur = poly_add(rest, repl);
                changed = true;
                break;
            }
        }
    }
    return cur;
}

}  // namespace heatsym
