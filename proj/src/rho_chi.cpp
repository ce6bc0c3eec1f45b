#include "heatsym/rho_chi.hpp"

#include <map>
#include <mutex>
#include <tuple>

namespace heatsym {

namespace {

constexpr int kAlphaBase = 700;  // canonical alpha labels 701..
constexpr int kBetaBase = 730;   // canonical beta labels 731..

// enumerate subsets of a label list
template <typename F>
void for_subsets(const std::vector<int>& labels, F&& f) {
    std::size_t n = labels.size();
    for (std::size_t mask = 0; mask < (std::size_t(1) << n); ++mask) {
        std::vector<int> in, out;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t(1) << i))
                in.push_back(labels[i]);
            else
                out.push_back(labels[i]);
        }
        f(in, out);
    }
}

TensorPolynomial rho_canonical(int p, int q, bool scalar_mode, int cap) {
    std::vector<int> alpha, beta;
    for (int i = 0; i < p; ++i) alpha.push_back(kAlphaBase + 1 + i);
    for (int j = 0; j < q; ++j) beta.push_back(kBetaBase + 1 + j);
    Rat outer_sign = (p + q) % 2 == 0 ? 1 : -1;
    TensorPolynomial total;
    for_subsets(alpha, [&](const std::vector<int>& L, const std::vector<int>& restA) {
        for_subsets(beta, [&](const std::vector<int>& M, const std::vector<int>& restB) {
            int nxi = (int)(restA.size() + restB.size());
            int budget = cap < 0 ? -1 : cap - nxi;
            if (cap >= 0 && budget < 0) return;
            Monomial pre;
            pre.coeff = outer_sign * Rat((L.size() + M.size()) % 2 == 0 ? 1 : -1);
            for (int l : restA) pre.scalars.push_back(xi(dn(l)));
            for (int mlabel : restB) pre.scalars.push_back(xi(dn(mlabel)));
            TensorPolynomial rterm = compose_poly(L, M, scalar_mode, budget);
            total = poly_add(total, poly_mul(poly_mono(std::move(pre)), rterm));
        });
    });
    return ensure_identity_chain(total);
}

struct RhoKey {
    int p, q, cap;
    bool scalar;
    bool operator<(const RhoKey& o) const {
        return std::tie(p, q, cap, scalar) < std::tie(o.p, o.q, o.cap, o.scalar);
    }
};

const TensorPolynomial& rho_cached(int p, int q, bool scalar_mode, int cap) {
    static std::map<RhoKey, TensorPolynomial> cache;
    static std::mutex mu;
    RhoKey key{p, q, cap, scalar_mode};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    TensorPolynomial val = rho_canonical(p, q, scalar_mode, cap);
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, std::move(val)).first->second;
}

}  // namespace

TensorPolynomial compute_rho(const std::vector<int>& alpha, const std::vector<int>& beta,
                             bool scalar_mode) {
    int p = (int)alpha.size(), q = (int)beta.size();
    if (p + q > compose_order_bound())
        throw CapacityError("rho order " + std::to_string(p + q) + " exceeds bound " +
                            std::to_string(compose_order_bound()));
    // for |beta| <= 2 the xi-degree is bounded by |beta| (deg estimate), so the
    // heavy templates only ever need their low-degree part
    int cap = (p + q >= 7) ? 2 : -1;
    const TensorPolynomial& canon = rho_cached(p, q, scalar_mode, cap);
    std::map<int, int> map;
    for (int i = 0; i < p; ++i) map[kAlphaBase + 1 + i] = alpha[i];
    for (int j = 0; j < q; ++j) map[kBetaBase + 1 + j] = beta[j];
    return relabel(canon, map);
}

ChiTriple compute_chi(const std::vector<int>& alpha, bool scalar_mode) {
    struct ChiKey {
        int p;
        bool scalar;
        bool operator<(const ChiKey& o) const {
            return std::tie(p, scalar) < std::tie(o.p, o.scalar);
        }
    };
    static std::map<ChiKey, std::array<TensorPolynomial, 3>> cache;
    static std::mutex mu;

    int p = (int)alpha.size();
    ChiKey key{p, scalar_mode};
    std::array<TensorPolynomial, 3> canon;
    bool have = false;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) {
            canon = it->second;
            have = true;
        }
    }
    if (!have) {
        std::vector<int> ac;
        for (int i = 0; i < p; ++i) ac.push_back(kAlphaBase + 1 + i);
        int a = fresh_label(), b = fresh_label();
        TensorPolynomial rho2 = compute_rho(ac, {a, b}, scalar_mode);
        TensorPolynomial rho1 = compute_rho(ac, {a}, scalar_mode);
        TensorPolynomial chi = poly_add(
            poly_mul(poly_mono(Monomial{1, {metric(up(a), up(b))}, {}}), rho2),
            poly_scale(poly_mul(poly_mono(Monomial{1, {xi(up(a))}, {}}), rho1), Rat(2)));
        auto parts = split_by_xi_degree(chi);
        for (auto& [deg, poly] : parts) {
            if (deg > 2)
                throw StructuralError("chi has xi-degree above two");
            canon[deg] = make_poly(std::move(poly.terms));
        }
        std::lock_guard<std::mutex> lock(mu);
        cache.emplace(key, canon);
    }
    std::map<int, int> map;
    for (int i = 0; i < p; ++i) map[kAlphaBase + 1 + i] = alpha[i];
    ChiTriple out;
    out.chi0 = relabel(canon[0], map);
    out.chi1 = relabel(canon[1], map);
    out.chi2 = relabel(canon[2], map);
    return out;
}

TensorPolynomial drop_linear_bundle_curv(const TensorPolynomial& p) {
    return poly_filter(p, [](const Monomial& m) {
        return !(bundle_curv_count(m) == 1 && !mono_contains_kind(m, AtomKind::EndoA));
    });
}

TensorPolynomial reconstruct_compose_from_rho(const std::vector<int>& alpha,
                                              const std::vector<int>& beta, bool scalar_mode) {
    TensorPolynomial total;
    for_subsets(alpha, [&](const std::vector<int>& L, const std::vector<int>& restA) {
        for_subsets(beta, [&](const std::vector<int>& M, const std::vector<int>& restB) {
            Monomial pre;
            for (int l : restA) pre.scalars.push_back(xi(dn(l)));
            for (int mlabel : restB) pre.scalars.push_back(xi(dn(mlabel)));
            total = poly_add(total,
                             poly_mul(poly_mono(std::move(pre)), compute_rho(L, M, scalar_mode)));
        });
    });
    return ensure_identity_chain(total);
}

}  // namespace heatsym
