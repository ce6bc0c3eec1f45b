#include "heatsym/jetlab.hpp"

#include <algorithm>
#include <cassert>
#include <random>

namespace heatsym {

// ---------------------------------------------------------------------------
// Poly
// ---------------------------------------------------------------------------

static int vec_deg(const std::vector<std::uint8_t>& e) {
    int d = 0;
    for (auto x : e) d += x;
    return d;
}

Poly Poly::constant(int n, int maxdeg, const Rat& v) {
    Poly p{n, maxdeg, {}};
    if (v != 0) p.c.emplace(std::vector<std::uint8_t>(n, 0), v);
    return p;
}

Poly Poly::variable(int n, int maxdeg, int i) {
    Poly p{n, maxdeg, {}};
    std::vector<std::uint8_t> e(n, 0);
    e[i] = 1;
    if (maxdeg >= 1) p.c.emplace(std::move(e), Rat(1));
    return p;
}

Rat Poly::at_origin() const {
    auto it = c.find(std::vector<std::uint8_t>(n, 0));
    return it == c.end() ? Rat(0) : it->second;
}

Poly operator+(const Poly& a, const Poly& b) {
    Poly r = a;
    r.maxdeg = std::min(a.maxdeg, b.maxdeg);
    for (const auto& [e, v] : b.c) {
        auto [it, fresh] = r.c.emplace(e, v);
        if (!fresh) {
            it->second += v;
            if (it->second == 0) r.c.erase(it);
        }
    }
    return r;
}

Poly operator-(const Poly& a, const Poly& b) { return a + Rat(-1) * b; }

Poly operator*(const Rat& s, const Poly& a) {
    if (s == 0) return Poly::zero(a.n, a.maxdeg);
    Poly r = a;
    for (auto& [e, v] : r.c) v *= s;
    return r;
}

Poly operator*(const Poly& a, const Poly& b) {
    Poly r = Poly::zero(a.n, std::min(a.maxdeg, b.maxdeg));
    for (const auto& [ea, va] : a.c)
        for (const auto& [eb, vb] : b.c) {
            int d = vec_deg(ea) + vec_deg(eb);
            if (d > r.maxdeg) continue;
            std::vector<std::uint8_t> e(ea);
            for (int i = 0; i < r.n; ++i) e[i] += eb[i];
            auto [it, fresh] = r.c.emplace(std::move(e), va * vb);
            if (!fresh) {
                it->second += va * vb;
                if (it->second == 0) r.c.erase(it);
            }
        }
    return r;
}

Poly diff(const Poly& a, int i) {
    Poly r = Poly::zero(a.n, a.maxdeg);
    for (const auto& [e, v] : a.c) {
        if (e[i] == 0) continue;
        std::vector<std::uint8_t> f = e;
        f[i] -= 1;
        r.c.emplace(std::move(f), Rat((long)e[i]) * v);
    }
    return r;
}

Poly truncated(const Poly& a, int deg) {
    Poly r = Poly::zero(a.n, std::max(deg, 0));
    for (const auto& [e, v] : a.c)
        if (vec_deg(e) <= deg) r.c.emplace(e, v);
    return r;
}

Poly linear_subst(const Poly& a, const std::vector<std::vector<Rat>>& M) {
    int n = a.n;
    std::vector<Poly> vars;
    for (int i = 0; i < n; ++i) {
        Poly xi = Poly::zero(n, a.maxdeg);
        for (int j = 0; j < n; ++j)
            if (M[i][j] != 0) xi = xi + M[i][j] * Poly::variable(n, a.maxdeg, j);
        vars.push_back(xi);
    }
    Poly r = Poly::zero(n, a.maxdeg);
    for (const auto& [e, v] : a.c) {
        Poly t = Poly::constant(n, a.maxdeg, v);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < e[i]; ++k) t = t * vars[i];
        r = r + t;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

static std::size_t pow_size(int n, int rank) {
    std::size_t s = 1;
    for (int i = 0; i < rank; ++i) s *= (std::size_t)n;
    return s;
}

static std::size_t flat_index(int n, const std::vector<int>& idx) {
    std::size_t f = 0;
    for (int i : idx) f = f * (std::size_t)n + (std::size_t)i;
    return f;
}

PField PField::make(int n, int rank, int maxdeg) {
    PField f;
    f.n = n;
    f.rank = rank;
    f.comp.assign(pow_size(n, rank), Poly::zero(n, maxdeg));
    return f;
}

Poly& PField::at(const std::vector<int>& idx) { return comp[flat_index(n, idx)]; }
const Poly& PField::at(const std::vector<int>& idx) const { return comp[flat_index(n, idx)]; }

MatP MatP::zeros(int d, int n, int maxdeg) {
    MatP m;
    m.d = d;
    m.e.assign((std::size_t)d * d, Poly::zero(n, maxdeg));
    return m;
}

MatP MatP::id(int d, int n, int maxdeg) {
    MatP m = zeros(d, n, maxdeg);
    for (int i = 0; i < d; ++i) m.at(i, i) = Poly::constant(n, maxdeg, 1);
    return m;
}

MatP operator+(const MatP& a, const MatP& b) {
    MatP r = a;
    for (std::size_t i = 0; i < r.e.size(); ++i) r.e[i] = a.e[i] + b.e[i];
    return r;
}
MatP operator-(const MatP& a, const MatP& b) {
    MatP r = a;
    for (std::size_t i = 0; i < r.e.size(); ++i) r.e[i] = a.e[i] - b.e[i];
    return r;
}
MatP operator*(const MatP& a, const MatP& b) {
    MatP r = MatP::zeros(a.d, a.e[0].n, std::min(a.e[0].maxdeg, b.e[0].maxdeg));
    for (int i = 0; i < a.d; ++i)
        for (int k = 0; k < a.d; ++k) {
            if (a.at(i, k).is_zero()) continue;
            for (int j = 0; j < a.d; ++j) r.at(i, j) = r.at(i, j) + a.at(i, k) * b.at(k, j);
        }
    return r;
}
MatP operator*(const Poly& s, const MatP& a) {
    MatP r = a;
    for (auto& p : r.e) p = s * p;
    return r;
}
MatP diff(const MatP& a, int i) {
    MatP r = a;
    for (auto& p : r.e) p = diff(p, i);
    return r;
}

EField EField::make(int n, int rank, int d, int maxdeg) {
    EField f;
    f.n = n;
    f.rank = rank;
    f.d = d;
    f.comp.assign(pow_size(n, rank), MatP::zeros(d, n, maxdeg));
    return f;
}

MatP& EField::at(const std::vector<int>& idx) { return comp[flat_index(n, idx)]; }
const MatP& EField::at(const std::vector<int>& idx) const { return comp[flat_index(n, idx)]; }

// ---------------------------------------------------------------------------
// Jets
// ---------------------------------------------------------------------------

MetricJet flat_jet(int n, int degree) {
    MetricJet j;
    j.n = n;
    j.degree = degree;
    j.g.assign((std::size_t)n * n, Poly::zero(n, degree));
    for (int i = 0; i < n; ++i) j.at(i, i) = Poly::constant(n, degree, 1);
    return j;
}

// enumerate exponent vectors of total degree deg
static void exponents(int n, int deg, std::vector<std::uint8_t>& cur, int pos,
                      std::vector<std::vector<std::uint8_t>>& out) {
    if (pos == n - 1) {
        cur[pos] = (std::uint8_t)deg;
        out.push_back(cur);
        return;
    }
    for (int k = 0; k <= deg; ++k) {
        cur[pos] = (std::uint8_t)k;
        exponents(n, deg - k, cur, pos + 1, out);
    }
}

MetricJet random_metric_jet(int n, int degree, std::uint64_t seed) {
    if (n < 2) throw CapacityError("random_metric_jet: need n >= 2");
    MetricJet j = flat_jet(n, degree);
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    auto small = [&]() {
        long num = (long)(rng() % 9) - 4;  // -4..4
        long den = 3 + (long)(rng() % 10); // 3..12
        return rat(num, den);
    };
    for (int d = 2; d <= degree; ++d) {
        std::vector<std::vector<std::uint8_t>> exps;
        std::vector<std::uint8_t> cur(n, 0);
        exponents(n, d, cur, 0, exps);
        for (int i = 0; i < n; ++i)
            for (int k = i; k < n; ++k)
                for (const auto& e : exps) {
                    Rat v = small();
                    if (v == 0) continue;
                    if (rng() % 2) continue;  // keep the jets sparse
                    j.at(i, k).c[e] += v;
                    if (j.at(i, k).c[e] == 0) j.at(i, k).c.erase(e);
                    if (k != i) {
                        j.at(k, i).c[e] += v;
                        if (j.at(k, i).c[e] == 0) j.at(k, i).c.erase(e);
                    }
                }
    }
    return j;
}

MetricJet sphere_like_jet(int n, const Rat& K, int degree) {
    MetricJet j = flat_jet(n, degree);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            Poly corr = Poly::zero(n, degree);
            if (i == k)
                for (int a = 0; a < n; ++a)
                    corr = corr + Poly::variable(n, degree, a) * Poly::variable(n, degree, a);
            corr = corr - Poly::variable(n, degree, i) * Poly::variable(n, degree, k);
            j.at(i, k) = j.at(i, k) - (K / 3) * corr;
        }
    return j;
}

MetricJet extend_trivially(const MetricJet& jet, int) {
    int n = jet.n, m = n + 1;
    MetricJet out = flat_jet(m, jet.degree);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            Poly p = Poly::zero(m, jet.degree);
            for (const auto& [e, v] : jet.at(i, k).c) {
                std::vector<std::uint8_t> e2 = e;
                e2.push_back(0);
                p.c.emplace(std::move(e2), v);
            }
            out.at(i, k) = p;
        }
    return out;
}

MetricJet linear_frame_change(const MetricJet& jet, const std::vector<std::vector<Rat>>& M) {
    int n = jet.n;
    MetricJet out;
    out.n = n;
    out.degree = jet.degree;
    out.g.assign((std::size_t)n * n, Poly::zero(n, jet.degree));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Poly acc = Poly::zero(n, jet.degree);
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    if (M[k][i] == 0 || M[l][j] == 0) continue;
                    acc = acc + (M[k][i] * M[l][j]) * linear_subst(jet.at(k, l), M);
                }
            out.at(i, j) = acc;
        }
    return out;
}

BundleJet random_bundle_jet(int n, int d, int degree, std::uint64_t seed, bool trace_free) {
    BundleJet b;
    b.n = n;
    b.d = d;
    b.degree = degree;
    std::mt19937_64 rng(seed * 0x2545f4914f6cdd1dULL + 7);
    auto small = [&]() {
        long num = (long)(rng() % 7) - 3;
        long den = 2 + (long)(rng() % 7);
        return rat(num, den);
    };
    auto rand_poly_no_const = [&]() {
        Poly p = Poly::zero(n, degree);
        for (int deg = 1; deg <= degree; ++deg) {
            std::vector<std::vector<std::uint8_t>> exps;
            std::vector<std::uint8_t> cur(n, 0);
            exponents(n, deg, cur, 0, exps);
            for (const auto& e : exps) {
                if (rng() % 2) continue;
                Rat v = small();
                if (v != 0) p.c[e] = v;
            }
        }
        return p;
    };
    for (int i = 0; i < n; ++i) {
        MatP w = MatP::zeros(d, n, degree);
        for (int a = 0; a < d; ++a)
            for (int c = a + 1; c < d; ++c) {
                Poly p = rand_poly_no_const();
                w.at(a, c) = p;
                w.at(c, a) = Rat(-1) * p;
            }
        if (!trace_free)
            for (int a = 0; a < d; ++a) w.at(a, a) = rand_poly_no_const();
        b.omega.push_back(w);
    }
    b.A = MatP::zeros(d, n, degree);
    for (int a = 0; a < d; ++a)
        for (int c = a; c < d; ++c) {
            Poly p = rand_poly_no_const() + Poly::constant(n, degree, small());
            b.A.at(a, c) = p;
            b.A.at(c, a) = p;
        }
    return b;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

static std::vector<std::vector<Rat>> rat_matrix_inverse(std::vector<std::vector<Rat>> a) {
    int n = (int)a.size();
    std::vector<std::vector<Rat>> inv(n, std::vector<Rat>(n, 0));
    for (int i = 0; i < n; ++i) inv[i][i] = 1;
    for (int col = 0; col < n; ++col) {
        int piv = -1;
        for (int r = col; r < n; ++r)
            if (a[r][col] != 0) { piv = r; break; }
        if (piv < 0) throw StructuralError("singular matrix");
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        Rat s = a[col][col];
        for (int j = 0; j < n; ++j) { a[col][j] /= s; inv[col][j] /= s; }
        for (int r = 0; r < n; ++r) {
            if (r == col || a[r][col] == 0) continue;
            Rat f = a[r][col];
            for (int j = 0; j < n; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return inv;
}

JetGeometry jet_geometry(const MetricJet& jet) {
    int n = jet.n, deg = jet.degree;
    JetGeometry geo;
    geo.n = n;
    geo.degree = deg;
    geo.g = jet.g;

    // g = C + H with C = g(0); ginv = sum_k (-Cinv H)^k Cinv
    std::vector<std::vector<Rat>> C(n, std::vector<Rat>(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) C[i][j] = jet.at(i, j).at_origin();
    auto Cinv = rat_matrix_inverse(C);

    std::vector<Poly> H((std::size_t)n * n, Poly::zero(n, deg));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            H[i * n + j] = jet.at(i, j) - Poly::constant(n, deg, C[i][j]);
        }
    // M = -Cinv * H
    std::vector<Poly> M((std::size_t)n * n, Poly::zero(n, deg));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Poly acc = Poly::zero(n, deg);
            for (int k = 0; k < n; ++k)
                if (Cinv[i][k] != 0) acc = acc + (-Cinv[i][k]) * H[k * n + j];
            M[i * n + j] = acc;
        }
    // ginv = (I + M + M^2 + ...) Cinv
    std::vector<Poly> series((std::size_t)n * n, Poly::zero(n, deg));
    std::vector<Poly> power((std::size_t)n * n, Poly::zero(n, deg));
    for (int i = 0; i < n; ++i) power[i * n + i] = Poly::constant(n, deg, 1);
    for (int k = 0; k <= deg; ++k) {
        for (std::size_t i = 0; i < series.size(); ++i) series[i] = series[i] + power[i];
        if (k == deg) break;
        std::vector<Poly> next((std::size_t)n * n, Poly::zero(n, deg));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Poly acc = Poly::zero(n, deg);
                for (int kk = 0; kk < n; ++kk) acc = acc + power[i * n + kk] * M[kk * n + j];
                next[i * n + j] = acc;
            }
        power = std::move(next);
    }
    geo.ginv.assign((std::size_t)n * n, Poly::zero(n, deg));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Poly acc = Poly::zero(n, deg);
            for (int k = 0; k < n; ++k)
                if (Cinv[k][j] != 0) acc = acc + Cinv[k][j] * series[i * n + k];
            geo.ginv[i * n + j] = acc;
        }

    // Christoffels
    geo.gamma.assign((std::size_t)n * n * n, Poly::zero(n, deg));
    for (int p = 0; p < n; ++p)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                Poly acc = Poly::zero(n, deg);
                for (int l = 0; l < n; ++l) {
                    Poly br = diff(jet.at(j, l), i) + diff(jet.at(i, l), j) - diff(jet.at(i, j), l);
                    acc = acc + geo.ginv[p * n + l] * br;
                }
                acc = rat(1, 2) * acc;
                geo.gamma[(p * n + i) * n + j] = acc;
                geo.gamma[(p * n + j) * n + i] = acc;
            }

    // R_{abcd} = g_{ap} (d_c Gamma^p_{db} - d_d Gamma^p_{cb}
    //            + Gamma^p_{ce} Gamma^e_{db} - Gamma^p_{de} Gamma^e_{cb});
    // normalized so a constant-curvature jet gives K (g_{ac} g_{bd} - g_{ad} g_{bc})
    geo.riemann = PField::make(n, 4, deg);
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
            for (int dd = 0; dd < n; ++dd) {
                std::vector<Poly> up(n, Poly::zero(n, deg));
                for (int p = 0; p < n; ++p) {
                    Poly acc = diff(geo.G(p, dd, b), c) - diff(geo.G(p, c, b), dd);
                    for (int e = 0; e < n; ++e)
                        acc = acc + geo.G(p, c, e) * geo.G(e, dd, b) -
                              geo.G(p, dd, e) * geo.G(e, c, b);
                    up[p] = acc;
                }
                for (int a = 0; a < n; ++a) {
                    Poly acc = Poly::zero(n, deg);
                    for (int p = 0; p < n; ++p) acc = acc + jet.at(a, p) * up[p];
                    geo.riemann.at({a, b, c, dd}) = acc;
                }
            }
    return geo;
}

PField cov_deriv(const JetGeometry& geo, const PField& T) {
    int n = geo.n;
    PField out = PField::make(n, T.rank + 1, T.comp[0].maxdeg);
    std::vector<int> idx(T.rank, 0);
    std::size_t total = pow_size(n, T.rank);
    for (std::size_t f = 0; f < total; ++f) {
        std::size_t rem = f;
        for (int r = T.rank - 1; r >= 0; --r) { idx[r] = (int)(rem % n); rem /= n; }
        for (int m = 0; m < n; ++m) {
            Poly acc = diff(T.comp[f], m);
            for (int t = 0; t < T.rank; ++t) {
                std::vector<int> jdx = idx;
                for (int p = 0; p < n; ++p) {
                    jdx[t] = p;
                    const Poly& gp = geo.G(p, m, idx[t]);
                    if (gp.is_zero()) continue;
                    acc = acc - gp * T.at(jdx);
                }
            }
            std::vector<int> od(1, m);
            od.insert(od.end(), idx.begin(), idx.end());
            out.at(od) = acc;
        }
    }
    return out;
}

static EField cov_deriv_endo_impl(const JetGeometry& geo, const std::vector<MatP>& omega,
                                  const EField& T, bool adjoint_action);

EField cov_deriv(const JetGeometry& geo, const std::vector<MatP>& omega, const EField& T) {
    return cov_deriv_endo_impl(geo, omega, T, true);
}

EField cov_deriv_left(const JetGeometry& geo, const std::vector<MatP>& omega, const EField& T) {
    return cov_deriv_endo_impl(geo, omega, T, false);
}

static EField cov_deriv_endo_impl(const JetGeometry& geo, const std::vector<MatP>& omega,
                                  const EField& T, bool adjoint_action) {
    int n = geo.n;
    EField out = EField::make(n, T.rank + 1, T.d, T.comp[0].e[0].maxdeg);
    std::vector<int> idx(T.rank, 0);
    std::size_t total = pow_size(n, T.rank);
    for (std::size_t f = 0; f < total; ++f) {
        std::size_t rem = f;
        for (int r = T.rank - 1; r >= 0; --r) { idx[r] = (int)(rem % n); rem /= n; }
        for (int m = 0; m < n; ++m) {
            MatP acc = diff(T.comp[f], m);
            acc = acc + omega[m] * T.comp[f];
            if (adjoint_action) acc = acc - T.comp[f] * omega[m];
            for (int t = 0; t < T.rank; ++t) {
                std::vector<int> jdx = idx;
                for (int p = 0; p < n; ++p) {
                    jdx[t] = p;
                    const Poly& gp = geo.G(p, m, idx[t]);
                    if (gp.is_zero()) continue;
                    acc = acc - gp * T.at(jdx);
                }
            }
            std::vector<int> od(1, m);
            od.insert(od.end(), idx.begin(), idx.end());
            out.at(od) = acc;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Curvature data
// ---------------------------------------------------------------------------

const Rat& NumTensor::at(const std::vector<int>& idx) const { return v[flat_index(n, idx)]; }

const Rat& NumETensor::at(const std::vector<int>& idx, int a, int b) const {
    return v[(flat_index(n, idx) * d + a) * d + b];
}

static NumTensor eval_field(const PField& f) {
    NumTensor t;
    t.n = f.n;
    t.rank = f.rank;
    t.v.reserve(f.comp.size());
    for (const Poly& p : f.comp) t.v.push_back(p.at_origin());
    return t;
}

static NumETensor eval_efield(const EField& f) {
    NumETensor t;
    t.n = f.n;
    t.rank = f.rank;
    t.d = f.d;
    t.v.reserve(f.comp.size() * f.d * f.d);
    for (const MatP& m : f.comp)
        for (const Poly& p : m.e) t.v.push_back(p.at_origin());
    return t;
}

static void derivative_tower(const JetGeometry& geo, PField base, int max_order,
                             std::vector<NumTensor>& out) {
    out.push_back(eval_field(base));
    PField cur = std::move(base);
    for (int j = 1; j <= max_order; ++j) {
        cur = cov_deriv(geo, cur);
        for (Poly& p : cur.comp) p = truncated(p, geo.degree - j);
        out.push_back(eval_field(cur));
    }
}

static void derivative_tower_endo(const JetGeometry& geo, const std::vector<MatP>& omega,
                                  EField base, int max_order, std::vector<NumETensor>& out) {
    out.push_back(eval_efield(base));
    EField cur = std::move(base);
    for (int j = 1; j <= max_order; ++j) {
        cur = cov_deriv(geo, omega, cur);
        for (MatP& m : cur.comp)
            for (Poly& p : m.e) p = truncated(p, geo.degree - j);
        out.push_back(eval_efield(cur));
    }
}

CurvatureData evaluate_curvature(const MetricJet& jet, int max_order) {
    if (jet.degree < max_order + 2)
        throw CapacityError("jet degree " + std::to_string(jet.degree) +
                            " too low for derivative order " + std::to_string(max_order));
    JetGeometry geo = jet_geometry(jet);
    int n = jet.n;
    CurvatureData data;
    data.n = n;
    data.max_order = max_order;
    data.g0.assign(n, std::vector<Rat>(n, 0));
    data.g0inv.assign(n, std::vector<Rat>(n, 0));
    data.delta_gauge = true;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            data.g0[i][j] = jet.at(i, j).at_origin();
            data.g0inv[i][j] = geo.ginv[i * n + j].at_origin();
            if (data.g0[i][j] != Rat(i == j ? 1 : 0)) data.delta_gauge = false;
        }

    derivative_tower(geo, geo.riemann, max_order, data.riemann);

    PField ric = PField::make(n, 2, jet.degree);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Poly acc = Poly::zero(n, jet.degree);
            for (int p = 0; p < n; ++p)
                for (int q = 0; q < n; ++q)
                    acc = acc + geo.ginv[p * n + q] * geo.riemann.at({i, p, j, q});
            ric.at({i, j}) = acc;
        }
    derivative_tower(geo, ric, max_order, data.ricci);

    PField s = PField::make(n, 0, jet.degree);
    {
        Poly acc = Poly::zero(n, jet.degree);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) acc = acc + geo.ginv[i * n + j] * ric.at({i, j});
        s.comp[0] = acc;
    }
    derivative_tower(geo, s, std::max(max_order, 2), data.scal);
    return data;
}

CurvatureData evaluate_curvature(const MetricJet& jet, const BundleJet& bundle, int max_order) {
    CurvatureData data = evaluate_curvature(jet, max_order);
    if (bundle.n != jet.n) throw StructuralError("bundle/metric dimension mismatch");
    JetGeometry geo = jet_geometry(jet);
    int n = jet.n, d = bundle.d;
    data.d = d;
    data.has_bundle = true;

    EField rc = EField::make(n, 2, d, jet.degree);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            MatP m = diff(bundle.omega[j], i) - diff(bundle.omega[i], j) +
                     bundle.omega[i] * bundle.omega[j] - bundle.omega[j] * bundle.omega[i];
            rc.at({i, j}) = m;
        }
    derivative_tower_endo(geo, bundle.omega, rc, max_order, data.rcal);

    EField af = EField::make(n, 0, d, jet.degree);
    af.comp[0] = bundle.A;
    derivative_tower_endo(geo, bundle.omega, af, max_order, data.endoA);
    return data;
}

// ---------------------------------------------------------------------------
// Numeric evaluation of tensor polynomials
// ---------------------------------------------------------------------------

namespace {

struct EvalCtx {
    const CurvatureData* data;
    const FreeAssign* assign;
    // current assignment per label
    std::map<int, int> value;
    int iprefix = 0;  // accumulated (-i nabla) count
};

Rat metric_value(const EvalCtx& ctx, const Atom&, int i, int j) {
    const CurvatureData& d = *ctx.data;
    // delta gauge: raising and lowering are invisible.  General gauge: every
    // atom contributes its all-lower components and each dummy pair carries
    // one inverse-metric factor, so the metric atom itself is g0.
    if (d.delta_gauge) return Rat(i == j ? 1 : 0);
    return d.g0[i][j];
}

Rat scalar_atom_value(EvalCtx& ctx, const Atom& a) {
    const CurvatureData& d = *ctx.data;
    std::vector<int> idx;
    for (const Index& i : a.prefix) idx.push_back(ctx.value.at(i.label));
    for (const Index& i : a.slots) idx.push_back(ctx.value.at(i.label));
    ctx.iprefix += (int)a.prefix.size();
    int m = (int)a.prefix.size();
    auto need = [&](const std::vector<NumTensor>& tower) -> const NumTensor& {
        if (m >= (int)tower.size())
            throw CapacityError("missing valuation for derivative order " + std::to_string(m));
        return tower[m];
    };
    switch (a.kind) {
        case AtomKind::Metric:
            return metric_value(ctx, a, idx[0], idx[1]);
        case AtomKind::Riemann:
            return need(d.riemann).at(idx);
        case AtomKind::Ricci:
            return need(d.ricci).at(idx);
        case AtomKind::Scalar:
            return need(d.scal).at(idx);
        case AtomKind::Dim:
            return Rat(d.n);
        case AtomKind::FiberDim:
            return Rat(d.d);
        case AtomKind::Xi:
            throw StructuralError("xi has no jet valuation");
        default:
            throw StructuralError("unexpected scalar atom in numeric evaluation");
    }
}

// d x d value of one endomorphism atom
std::vector<Rat> endo_atom_value(EvalCtx& ctx, const Atom& a) {
    const CurvatureData& d = *ctx.data;
    int dim = d.d;
    std::vector<Rat> out((std::size_t)dim * dim, 0);
    if (a.kind == AtomKind::IdentityE) {
        for (int i = 0; i < dim; ++i) out[i * dim + i] = 1;
        return out;
    }
    std::vector<int> idx;
    for (const Index& i : a.prefix) idx.push_back(ctx.value.at(i.label));
    for (const Index& i : a.slots) idx.push_back(ctx.value.at(i.label));
    ctx.iprefix += (int)a.prefix.size();
    int m = (int)a.prefix.size();
    const std::vector<NumETensor>* tower = nullptr;
    if (a.kind == AtomKind::BundleCurv) tower = &d.rcal;
    else if (a.kind == AtomKind::EndoA) tower = &d.endoA;
    else throw StructuralError("unexpected endo atom");
    if (!d.has_bundle || m >= (int)tower->size())
        throw CapacityError("missing bundle valuation");
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) out[i * dim + j] = (*tower)[m].at(idx, i, j);
    return out;
}

std::vector<Rat> mat_mul(const std::vector<Rat>& a, const std::vector<Rat>& b, int d) {
    std::vector<Rat> r((std::size_t)d * d, 0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            if (a[i * d + k] == 0) continue;
            for (int j = 0; j < d; ++j) r[i * d + j] += a[i * d + k] * b[k * d + j];
        }
    return r;
}

// scalar part of one monomial at one index assignment (excluding endo chain)
Rat monomial_scalar_part(EvalCtx& ctx, const Monomial& m) {
    Rat acc = m.coeff;
    for (const Atom& a : m.scalars) {
        if (acc == 0) return acc;
        if (a.kind == AtomKind::Trace) {
            int dim = ctx.data->d;
            std::vector<Rat> prod((std::size_t)dim * dim, 0);
            for (int i = 0; i < dim; ++i) prod[i * dim + i] = 1;
            for (const Atom& c : a.chain) prod = mat_mul(prod, endo_atom_value(ctx, c), dim);
            Rat tr = 0;
            for (int i = 0; i < dim; ++i) tr += prod[i * dim + i];
            acc *= tr;
        } else {
            acc *= scalar_atom_value(ctx, a);
        }
    }
    return acc;
}

struct DummyPlan {
    std::vector<int> labels;       // loop labels (delta gauge: one per pair)
    std::vector<std::array<int, 2>> ginv_pairs;  // non-delta: label pairs contracted with g0inv
};

void plan_dummies(const Monomial& m, const CurvatureData& data, const FreeAssign& assign,
                  DummyPlan& plan, std::map<int, int>& fixed) {
    std::map<int, std::vector<Index>> occ;
    collect_indices(m, occ);
    for (const auto& [label, v] : occ) {
        if (v.size() == 1) {
            auto it = assign.find(label);
            if (it == assign.end())
                throw StructuralError("unassigned free index label " + std::to_string(label));
            if (!data.delta_gauge && v[0].var == Var::Up)
                throw StructuralError("free upper index outside delta gauge");
            fixed[label] = it->second;
        } else {
            plan.labels.push_back(label);
        }
    }
}

}  // namespace

std::vector<GaussRat> numeric_eval_endo(const TensorPolynomial& p, const CurvatureData& data,
                                        const FreeAssign& assign) {
    if (!data.delta_gauge)
        throw CapacityError("endomorphism evaluation outside delta gauge is unsupported");
    int dim = data.d;
    std::vector<GaussRat> total((std::size_t)dim * dim);
    for (const Monomial& m : p.terms) {
        DummyPlan plan;
        std::map<int, int> fixed;
        plan_dummies(m, data, assign, plan, fixed);

        int n = data.n;
        int vars = (int)plan.labels.size();
        std::vector<int> cursor(vars, 0);
        std::vector<Rat> mono_acc((std::size_t)dim * dim, 0);
        while (true) {
            EvalCtx ctx{&data, &assign, fixed, 0};
            for (int i = 0; i < vars; ++i) ctx.value[plan.labels[i]] = cursor[i];
            Rat s = monomial_scalar_part(ctx, m);
            if (s != 0) {
                if (!m.endo.empty()) {
                    std::vector<Rat> prod((std::size_t)dim * dim, 0);
                    for (int i = 0; i < dim; ++i) prod[i * dim + i] = 1;
                    for (const Atom& a : m.endo) prod = mat_mul(prod, endo_atom_value(ctx, a), dim);
                    for (std::size_t i = 0; i < prod.size(); ++i) mono_acc[i] += s * prod[i];
                } else {
                    for (int i = 0; i < dim; ++i) mono_acc[i * dim + i] += s;
                }
            }
            int i = vars - 1;
            while (i >= 0 && ++cursor[i] == n) cursor[i--] = 0;
            if (i < 0) break;
        }
        GaussRat phase = minus_i_pow((unsigned)nabla_count(m));
        for (std::size_t i = 0; i < total.size(); ++i)
            total[i] += phase * GaussRat(mono_acc[i]);
    }
    return total;
}

GaussRat numeric_eval(const TensorPolynomial& p, const CurvatureData& data,
                      const FreeAssign& assign) {
    GaussRat total;
    for (const Monomial& m : p.terms) {
        if (!m.endo.empty()) throw StructuralError("endomorphism-valued polynomial; use numeric_eval_endo");
        DummyPlan plan;
        std::map<int, int> fixed;
        plan_dummies(m, data, assign, plan, fixed);
        int n = data.n;

        GaussRat phase = minus_i_pow((unsigned)nabla_count(m));
        if (data.delta_gauge) {
            int vars = (int)plan.labels.size();
            std::vector<int> cursor(vars, 0);
            Rat acc = 0;
            while (true) {
                EvalCtx ctx{&data, &assign, fixed, 0};
                for (int i = 0; i < vars; ++i) ctx.value[plan.labels[i]] = cursor[i];
                acc += monomial_scalar_part(ctx, m);
                int i = vars - 1;
                while (i >= 0 && ++cursor[i] == n) cursor[i--] = 0;
                if (i < 0) break;
            }
            total += phase * GaussRat(acc);
            continue;
        }

        // general gauge: every tensor is stored with lower components, so a
        // dummy pair contracts through one inverse-metric factor.  The Up
        // occurrence of each pair is split to its own loop variable.
        std::vector<int> pair_labels = plan.labels;
        Monomial split = m;
        std::map<int, int> up_label;
        for (int lbl : pair_labels) up_label[lbl] = fresh_label();
        {
            std::function<void(Atom&)> fix = [&](Atom& a) {
                for (Index& i : a.prefix)
                    if (up_label.count(i.label) && i.var == Var::Up) i.label = up_label[i.label];
                for (Index& i : a.slots)
                    if (up_label.count(i.label) && i.var == Var::Up) i.label = up_label[i.label];
                for (Atom& c : a.chain) fix(c);
            };
            for (Atom& a : split.scalars) fix(a);
            for (Atom& a : split.endo) fix(a);
        }
        int vars = (int)pair_labels.size() * 2;
        std::vector<int> cursor(vars, 0);
        Rat acc = 0;
        while (true) {
            EvalCtx ctx{&data, &assign, fixed, 0};
            Rat w = 1;
            for (int k = 0; k < (int)pair_labels.size(); ++k) {
                int iu = cursor[2 * k], id = cursor[2 * k + 1];
                ctx.value[up_label[pair_labels[k]]] = iu;
                ctx.value[pair_labels[k]] = id;
                w *= data.g0inv[iu][id];
            }
            if (w != 0) acc += w * monomial_scalar_part(ctx, split);
            int i = vars - 1;
            while (i >= 0 && ++cursor[i] == n) cursor[i--] = 0;
            if (i < 0) break;
        }
        total += phase * GaussRat(acc);
    }
    return total;
}

bool numerically_equal(const TensorPolynomial& a, const TensorPolynomial& b,
                       const CurvatureData& data) {
    TensorPolynomial diffp = poly_sub(a, b);
    if (diffp.is_zero()) return true;
    std::vector<int> frees;
    for (const Monomial& m : diffp.terms)
        for (int f : free_labels(m))
            if (std::find(frees.begin(), frees.end(), f) == frees.end()) frees.push_back(f);
    std::sort(frees.begin(), frees.end());
    int n = data.n;
    std::vector<int> cursor(frees.size(), 0);
    while (true) {
        FreeAssign assign;
        for (std::size_t i = 0; i < frees.size(); ++i) assign[frees[i]] = cursor[i];
        if (!numeric_eval(diffp, data, assign).is_zero()) return false;
        int i = (int)frees.size() - 1;
        while (i >= 0 && ++cursor[i] == n) cursor[i--] = 0;
        if (i < 0) break;
    }
    return true;
}

}  // namespace heatsym
