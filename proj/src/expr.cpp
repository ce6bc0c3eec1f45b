#include "heatsym/expr.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>

namespace heatsym {

// ---------------------------------------------------------------------------
// Atom basics
// ---------------------------------------------------------------------------

bool is_endo_kind(AtomKind k) {
    return k == AtomKind::BundleCurv || k == AtomKind::EndoA || k == AtomKind::IdentityE;
}

bool is_differentiable(AtomKind k) {
    switch (k) {
        case AtomKind::Riemann:
        case AtomKind::Ricci:
        case AtomKind::Scalar:
        case AtomKind::BundleCurv:
        case AtomKind::EndoA:
            return true;
        default:
            return false;
    }
}

int slot_count(AtomKind k) {
    switch (k) {
        case AtomKind::Metric: return 2;
        case AtomKind::Xi: return 1;
        case AtomKind::Riemann: return 4;
        case AtomKind::Ricci: return 2;
        case AtomKind::BundleCurv: return 2;
        default: return 0;
    }
}

const char* kind_name(AtomKind k) {
    switch (k) {
        case AtomKind::Metric: return "g";
        case AtomKind::Xi: return "xi";
        case AtomKind::Riemann: return "R";
        case AtomKind::Ricci: return "Ric";
        case AtomKind::Scalar: return "S";
        case AtomKind::BundleCurv: return "Rc";
        case AtomKind::EndoA: return "A";
        case AtomKind::IdentityE: return "I";
        case AtomKind::Dim: return "n";
        case AtomKind::FiberDim: return "d";
        case AtomKind::Trace: return "Tr";
    }
    return "?";
}

Atom metric(Index a, Index b) { return Atom{AtomKind::Metric, {}, {a, b}, {}}; }
Atom xi(Index a) { return Atom{AtomKind::Xi, {}, {a}, {}}; }
Atom riemann(Index a, Index b, Index c, Index d) {
    return Atom{AtomKind::Riemann, {}, {a, b, c, d}, {}};
}
Atom ricci(Index a, Index b) { return Atom{AtomKind::Ricci, {}, {a, b}, {}}; }
Atom scalar_S() { return Atom{AtomKind::Scalar, {}, {}, {}}; }
Atom bundle_curv(Index a, Index b) { return Atom{AtomKind::BundleCurv, {}, {a, b}, {}}; }
Atom endo_A() { return Atom{AtomKind::EndoA, {}, {}, {}}; }
Atom identity_endo() { return Atom{AtomKind::IdentityE, {}, {}, {}}; }
Atom dim_n() { return Atom{AtomKind::Dim, {}, {}, {}}; }
Atom fiber_d() { return Atom{AtomKind::FiberDim, {}, {}, {}}; }
Atom trace_of(std::vector<Atom> chain) { return Atom{AtomKind::Trace, {}, {}, std::move(chain)}; }

Atom with_prefix(Atom a, std::vector<Index> prefix) {
    prefix.insert(prefix.end(), a.prefix.begin(), a.prefix.end());
    a.prefix = std::move(prefix);
    return a;
}

static std::atomic<int> g_label_counter{1000};
int fresh_label() { return g_label_counter.fetch_add(1); }

// ---------------------------------------------------------------------------
// Index bookkeeping
// ---------------------------------------------------------------------------

static void collect_atom(const Atom& a, std::map<int, std::vector<Index>>& occ) {
    for (const Index& i : a.prefix) occ[i.label].push_back(i);
    for (const Index& i : a.slots) occ[i.label].push_back(i);
    for (const Atom& c : a.chain) collect_atom(c, occ);
}

void collect_indices(const Monomial& m, std::map<int, std::vector<Index>>& occ) {
    for (const Atom& a : m.scalars) collect_atom(a, occ);
    for (const Atom& a : m.endo) collect_atom(a, occ);
}

void validate(const Monomial& m) {
    std::map<int, std::vector<Index>> occ;
    collect_indices(m, occ);
    for (const auto& [label, v] : occ) {
        if (v.size() == 1) continue;
        if (v.size() == 2) {
            if (v[0].var == v[1].var)
                throw StructuralError("index label " + std::to_string(label) +
                                      " occurs twice with the same variance");
            continue;
        }
        throw StructuralError("index label " + std::to_string(label) + " occurs " +
                              std::to_string(v.size()) + " times");
    }
    std::function<void(const Atom&, bool)> check = [&](const Atom& a, bool inside_chain) {
        if (a.kind == AtomKind::Trace) {
            if (a.chain.empty()) throw StructuralError("empty trace chain");
            if (inside_chain) throw StructuralError("nested trace");
            for (const Atom& c : a.chain) {
                if (!is_endo_kind(c.kind)) throw StructuralError("non-endomorphism inside trace");
                check(c, true);
            }
        } else {
            if ((int)a.slots.size() != slot_count(a.kind))
                throw StructuralError(std::string("slot count mismatch on ") + kind_name(a.kind));
            if (!a.prefix.empty() && !is_differentiable(a.kind))
                throw StructuralError(std::string("derivative prefix on ") + kind_name(a.kind));
        }
    };
    for (const Atom& a : m.scalars) {
        if (is_endo_kind(a.kind)) throw StructuralError("endomorphism atom in scalar factors");
        check(a, false);
    }
    for (const Atom& a : m.endo) {
        if (!is_endo_kind(a.kind)) throw StructuralError("scalar atom in endo chain");
        check(a, false);
    }
}

std::vector<int> free_labels(const Monomial& m) {
    std::map<int, std::vector<Index>> occ;
    collect_indices(m, occ);
    std::vector<int> out;
    for (const auto& [label, v] : occ)
        if (v.size() == 1) out.push_back(label);
    return out;
}

std::vector<int> free_labels(const TensorPolynomial& p) {
    if (p.terms.empty()) return {};
    return free_labels(p.terms.front());
}

static void relabel_atom(Atom& a, const std::map<int, int>& map) {
    auto fix = [&](Index& i) {
        auto it = map.find(i.label);
        if (it != map.end()) i.label = it->second;
    };
    for (Index& i : a.prefix) fix(i);
    for (Index& i : a.slots) fix(i);
    for (Atom& c : a.chain) relabel_atom(c, map);
}

Monomial relabel(const Monomial& m, const std::map<int, int>& map) {
    Monomial out = m;
    for (Atom& a : out.scalars) relabel_atom(a, map);
    for (Atom& a : out.endo) relabel_atom(a, map);
    return out;
}

TensorPolynomial relabel(const TensorPolynomial& p, const std::map<int, int>& map) {
    std::vector<Monomial> ms;
    ms.reserve(p.terms.size());
    for (const Monomial& m : p.terms) ms.push_back(relabel(m, map));
    return make_poly(std::move(ms));
}

Monomial freshen_dummies(const Monomial& m) {
    std::map<int, std::vector<Index>> occ;
    collect_indices(m, occ);
    std::map<int, int> map;
    for (const auto& [label, v] : occ)
        if (label < 0) map[label] = fresh_label();
    return map.empty() ? m : relabel(m, map);
}

int xi_degree(const Monomial& m) {
    int d = 0;
    for (const Atom& a : m.scalars)
        if (a.kind == AtomKind::Xi) ++d;
    return d;
}

static void count_atom(const Atom& a, int& nablas, int& curv) {
    nablas += (int)a.prefix.size();
    if (a.kind == AtomKind::Riemann || a.kind == AtomKind::Ricci || a.kind == AtomKind::Scalar ||
        a.kind == AtomKind::BundleCurv || a.kind == AtomKind::EndoA)
        curv += 2;
    // the scalar curvature S is nabla-nabla-g in disguise; it still counts 2
    for (const Atom& c : a.chain) count_atom(c, nablas, curv);
}

int nabla_count(const Monomial& m) {
    int n = 0, c = 0;
    for (const Atom& a : m.scalars) count_atom(a, n, c);
    for (const Atom& a : m.endo) count_atom(a, n, c);
    return n;
}

int curvature_degree(const Monomial& m) {
    int n = 0, c = 0;
    for (const Atom& a : m.scalars) count_atom(a, n, c);
    for (const Atom& a : m.endo) count_atom(a, n, c);
    return c + n;
}

// ---------------------------------------------------------------------------
// Local normalization: metric absorption, self-traces, identity cleanup.
// ---------------------------------------------------------------------------

namespace {

struct SlotRef {
    // where an index lives inside a monomial
    bool in_endo = false;
    int atom = -1;
    int chain_pos = -1;  // -1: not inside a trace chain
    bool in_prefix = false;
    int pos = 0;
};

Index* deref(Monomial& m, const SlotRef& r) {
    Atom* a = r.in_endo ? &m.endo[r.atom] : &m.scalars[r.atom];
    if (r.chain_pos >= 0) a = &a->chain[r.chain_pos];
    return r.in_prefix ? &a->prefix[r.pos] : &a->slots[r.pos];
}

void enumerate_slots(Monomial& m, const std::function<void(const SlotRef&, const Index&)>& f) {
    auto walk_atom = [&](Atom& a, bool in_endo, int ai) {
        SlotRef r;
        r.in_endo = in_endo;
        r.atom = ai;
        if (a.kind == AtomKind::Trace) {
            for (int ci = 0; ci < (int)a.chain.size(); ++ci) {
                r.chain_pos = ci;
                r.in_prefix = true;
                for (int p = 0; p < (int)a.chain[ci].prefix.size(); ++p) {
                    r.pos = p;
                    f(r, a.chain[ci].prefix[p]);
                }
                r.in_prefix = false;
                for (int s = 0; s < (int)a.chain[ci].slots.size(); ++s) {
                    r.pos = s;
                    f(r, a.chain[ci].slots[s]);
                }
            }
            return;
        }
        r.chain_pos = -1;
        r.in_prefix = true;
        for (int p = 0; p < (int)a.prefix.size(); ++p) {
            r.pos = p;
            f(r, a.prefix[p]);
        }
        r.in_prefix = false;
        for (int s = 0; s < (int)a.slots.size(); ++s) {
            r.pos = s;
            f(r, a.slots[s]);
        }
    };
    for (int i = 0; i < (int)m.scalars.size(); ++i) walk_atom(m.scalars[i], false, i);
    for (int i = 0; i < (int)m.endo.size(); ++i) walk_atom(m.endo[i], true, i);
}

// Returns false when the monomial is identically zero.
bool local_normalize(Monomial& m) {
    bool changed = true;
    while (changed) {
        changed = false;
        if (m.coeff == 0) return false;

        // metric absorption: any metric atom with a dummy slot disappears,
        // transferring its other slot onto the partner index
        std::map<int, std::vector<Index>> occ;
        bool occ_ready = false;
        for (int i = 0; i < (int)m.scalars.size(); ++i) {
            Atom& g = m.scalars[i];
            if (g.kind != AtomKind::Metric) continue;
            if (g.slots[0].label == g.slots[1].label) {
                // g^a_a = n
                m.scalars[i] = dim_n();
                changed = true;
                break;
            }
            if (!occ_ready) {
                collect_indices(m, occ);
                occ_ready = true;
            }
            int which = -1;
            if (occ[g.slots[0].label].size() == 2) which = 0;
            else if (occ[g.slots[1].label].size() == 2) which = 1;
            if (which < 0) continue;
            Index s = g.slots[which];
            Index o = g.slots[1 - which];
            // find the partner occurrence of s (not on this metric atom)
            SlotRef partner;
            bool found = false;
            enumerate_slots(m, [&](const SlotRef& r, const Index& idx) {
                if (found) return;
                if (idx.label != s.label) return;
                if (!r.in_endo && r.atom == i && !r.in_prefix && r.chain_pos < 0) return;
                partner = r;
                found = true;
            });
            if (!found) continue;
            *deref(m, partner) = o;
            m.scalars.erase(m.scalars.begin() + i);
            changed = true;
            break;
        }
        if (changed) continue;

        // self-traces: a dummy pair among one atom's own slots
        auto self_trace = [&](Atom& a) -> int {
            // returns: 0 nothing, 1 rewritten, -1 monomial vanishes
            int p = -1, q = -1;
            for (int x = 0; x < (int)a.slots.size() && p < 0; ++x)
                for (int y = x + 1; y < (int)a.slots.size() && p < 0; ++y)
                    if (a.slots[x].label == a.slots[y].label) { p = x; q = y; }
            if (p < 0) return 0;
            if (a.kind == AtomKind::Riemann) {
                // traces on (0,1) or (2,3) vanish; (0,2),(1,3) give +Ric; (0,3),(1,2) give -Ric
                if ((p == 0 && q == 1) || (p == 2 && q == 3)) return -1;
                Rat sign = ((p == 0 && q == 2) || (p == 1 && q == 3)) ? 1 : -1;
                std::vector<Index> rest;
                for (int x = 0; x < 4; ++x)
                    if (x != p && x != q) rest.push_back(a.slots[x]);
                a.kind = AtomKind::Ricci;
                a.slots = rest;
                m.coeff *= sign;
                return 1;
            }
            if (a.kind == AtomKind::Ricci) {
                a.kind = AtomKind::Scalar;
                a.slots.clear();
                return 1;
            }
            if (a.kind == AtomKind::BundleCurv) return -1;  // antisymmetric trace
            return 0;
        };
        bool vanished = false;
        auto scan_traces = [&](std::vector<Atom>& atoms) {
            for (Atom& a : atoms) {
                if (a.kind == AtomKind::Trace) {
                    for (Atom& c : a.chain) {
                        int r = self_trace(c);
                        if (r == -1) { vanished = true; return; }
                        if (r == 1) { changed = true; return; }
                    }
                } else {
                    int r = self_trace(a);
                    if (r == -1) { vanished = true; return; }
                    if (r == 1) { changed = true; return; }
                }
            }
        };
        scan_traces(m.scalars);
        if (vanished) return false;
        if (changed) continue;
        scan_traces(m.endo);
        if (vanished) return false;
        if (changed) continue;

        // identity cleanup in endo chains and trace chains
        auto drop_identities = [&](std::vector<Atom>& chain) {
            bool has_other = false;
            for (const Atom& a : chain)
                if (a.kind != AtomKind::IdentityE) has_other = true;
            if (!has_other) {
                if (chain.size() > 1) { chain.resize(1); changed = true; }
                return;
            }
            auto it = std::remove_if(chain.begin(), chain.end(), [](const Atom& a) {
                return a.kind == AtomKind::IdentityE && a.prefix.empty();
            });
            if (it != chain.end()) { chain.erase(it, chain.end()); changed = true; }
        };
        drop_identities(m.endo);
        for (Atom& a : m.scalars)
            if (a.kind == AtomKind::Trace) drop_identities(a.chain);
        if (changed) continue;

        // Tr I = d
        for (Atom& a : m.scalars) {
            if (a.kind == AtomKind::Trace && a.chain.size() == 1 &&
                a.chain[0].kind == AtomKind::IdentityE && a.chain[0].prefix.empty()) {
                a = fiber_d();
                changed = true;
                break;
            }
        }
    }
    return m.coeff != 0;
}

// ---------------------------------------------------------------------------
// Canonical arrangement search.
// ---------------------------------------------------------------------------

struct Variant {
    Atom atom;
    int sign = 1;
};

// All slot-symmetry images of an atom (prefix untouched).  Detects atoms that
// are zero by their own symmetry (same arrangement reachable with both signs).
bool atom_variants(const Atom& a, std::vector<Variant>& out) {
    std::vector<Variant> raw;
    auto push = [&](std::vector<Index> slots, int sign) {
        Atom b = a;
        b.slots = std::move(slots);
        raw.push_back({std::move(b), sign});
    };
    const auto& s = a.slots;
    switch (a.kind) {
        case AtomKind::Riemann:
            for (int s1 = 0; s1 < 2; ++s1)
                for (int s2 = 0; s2 < 2; ++s2)
                    for (int ps = 0; ps < 2; ++ps) {
                        Index p0 = s[s1 ? 1 : 0], p1 = s[s1 ? 0 : 1];
                        Index p2 = s[2 + (s2 ? 1 : 0)], p3 = s[2 + (s2 ? 0 : 1)];
                        int sign = ((s1 + s2) % 2 == 0) ? 1 : -1;
                        if (ps)
                            push({p2, p3, p0, p1}, sign);
                        else
                            push({p0, p1, p2, p3}, sign);
                    }
            break;
        case AtomKind::Ricci:
        case AtomKind::Metric:
            push({s[0], s[1]}, 1);
            push({s[1], s[0]}, 1);
            break;
        case AtomKind::BundleCurv:
            push({s[0], s[1]}, 1);
            push({s[1], s[0]}, -1);
            break;
        case AtomKind::Trace: {
            // cyclic rotations of the chain, crossed with inner variants
            int len = (int)a.chain.size();
            for (int rot = 0; rot < len; ++rot) {
                std::vector<Atom> rotated;
                rotated.reserve(len);
                for (int i = 0; i < len; ++i) rotated.push_back(a.chain[(i + rot) % len]);
                std::vector<std::vector<Variant>> inner(len);
                for (int i = 0; i < len; ++i)
                    if (!atom_variants(rotated[i], inner[i])) return false;
                std::vector<int> pick(len, 0);
                while (true) {
                    Atom b = a;
                    int sign = 1;
                    b.chain.clear();
                    for (int i = 0; i < len; ++i) {
                        b.chain.push_back(inner[i][pick[i]].atom);
                        sign *= inner[i][pick[i]].sign;
                    }
                    raw.push_back({std::move(b), sign});
                    int i = len - 1;
                    while (i >= 0 && ++pick[i] == (int)inner[i].size()) pick[i--] = 0;
                    if (i < 0) break;
                }
            }
            break;
        }
        default:
            raw.push_back({a, 1});
            break;
    }
    out.clear();
    for (auto& v : raw) {
        bool dup = false;
        for (auto& w : out) {
            if (w.atom == v.atom) {
                if (w.sign != v.sign) return false;
                dup = true;
                break;
            }
        }
        if (!dup) out.push_back(std::move(v));
    }
    return true;
}

using Key = std::vector<std::int32_t>;
using IdVec = std::vector<std::pair<int, int>>;  // label -> value, small & linear

inline int idvec_find(const IdVec& v, int label) {
    for (const auto& [l, x] : v)
        if (l == label) return x;
    return INT32_MIN;
}

// Token block for one atom given the current dummy-id assignment; assigns ids
// to unseen dummies in scan order.
void atom_block(const Atom& a, const IdVec& occ_count, IdVec& dummy_ids, Key& out) {
    out.push_back((std::int32_t)a.kind);
    out.push_back((std::int32_t)a.prefix.size());
    out.push_back((std::int32_t)a.slots.size());
    auto emit = [&](const Index& i) {
        bool dummy = idvec_find(occ_count, i.label) == 2;
        if (dummy) {
            int id = idvec_find(dummy_ids, i.label);
            if (id == INT32_MIN) {
                id = (int)dummy_ids.size();
                dummy_ids.emplace_back(i.label, id);
            }
            out.push_back(2);
            out.push_back(id);
        } else {
            out.push_back(1);
            out.push_back(i.label);
            out.push_back(i.var == Var::Up ? 0 : 1);
        }
    };
    if (a.kind == AtomKind::Trace) {
        out.push_back((std::int32_t)a.chain.size());
        for (const Atom& c : a.chain) atom_block(c, occ_count, dummy_ids, out);
        return;
    }
    for (const Index& i : a.prefix) emit(i);
    for (const Index& i : a.slots) emit(i);
}

struct CandSlot {
    int atom_idx = -1;  // scalar index, or -1 for endo
    int var_idx = 0;
    Key block;
    IdVec ids;
};

struct DepthScratch {
    std::vector<CandSlot> slots;
    int count = 0;
};

struct SearchState {
    std::vector<std::vector<Variant>> scalar_variants;
    std::vector<std::vector<Variant>> endo_variants;
    IdVec occ_count;
    std::vector<DepthScratch> scratch;
    Key best_key;
    bool have_best = false;
    std::vector<Atom> best_scalars;
    std::vector<Atom> best_endo;
    int best_sign = 1;
    bool zero = false;
};

void search(SearchState& st, std::vector<bool>& used, int depth, int endo_pos, Key& key,
            const IdVec& dummy_ids, int sign, std::vector<Atom>& chosen_scalars,
            std::vector<Atom>& chosen_endo) {
    if (st.zero) return;
    if (st.have_best) {
        size_t n = std::min(key.size(), st.best_key.size());
        for (size_t i = 0; i < n; ++i) {
            if (key[i] < st.best_key[i]) break;
            if (key[i] > st.best_key[i]) return;
        }
    }
    size_t n_sc = st.scalar_variants.size();
    bool scalars_done = chosen_scalars.size() == n_sc;
    if (scalars_done && endo_pos == (int)st.endo_variants.size()) {
        if (!st.have_best || key < st.best_key) {
            st.best_key = key;
            st.have_best = true;
            st.best_scalars = chosen_scalars;
            st.best_endo = chosen_endo;
            st.best_sign = sign;
        } else if (key == st.best_key && sign != st.best_sign) {
            st.zero = true;
        }
        return;
    }

    DepthScratch& ds = st.scratch[depth];
    ds.count = 0;
    auto consider = [&](int ai, int vi, const Atom& atom) {
        if ((int)ds.slots.size() == ds.count) ds.slots.emplace_back();
        CandSlot& slot = ds.slots[ds.count];
        slot.block.clear();
        slot.ids = dummy_ids;
        atom_block(atom, st.occ_count, slot.ids, slot.block);
        slot.atom_idx = ai;
        slot.var_idx = vi;
        if (ds.count == 0) {
            ds.count = 1;
            return;
        }
        const Key& best_block = ds.slots[0].block;
        if (slot.block > best_block) return;
        if (slot.block < best_block) {
            std::swap(ds.slots[0], slot);
            ds.count = 1;
            return;
        }
        // equal block: dedup identical branches
        for (int c = 0; c < ds.count; ++c) {
            const CandSlot& o = ds.slots[c];
            const Atom& other = o.atom_idx >= 0 ? st.scalar_variants[o.atom_idx][o.var_idx].atom
                                                : st.endo_variants[endo_pos][o.var_idx].atom;
            if (other == atom) return;
        }
        ++ds.count;
    };

    if (!scalars_done) {
        for (int ai = 0; ai < (int)n_sc; ++ai) {
            if (used[ai]) continue;
            for (int vi = 0; vi < (int)st.scalar_variants[ai].size(); ++vi)
                consider(ai, vi, st.scalar_variants[ai][vi].atom);
        }
    } else {
        for (int vi = 0; vi < (int)st.endo_variants[endo_pos].size(); ++vi)
            consider(-1, vi, st.endo_variants[endo_pos][vi].atom);
    }

    const int count = ds.count;
    for (int c = 0; c < count; ++c) {
        // slots may be shuffled by deeper recursion; copy what we need first
        CandSlot slot = ds.slots[c];
        const Variant& v = slot.atom_idx >= 0 ? st.scalar_variants[slot.atom_idx][slot.var_idx]
                                              : st.endo_variants[endo_pos][slot.var_idx];
        size_t key_mark = key.size();
        key.insert(key.end(), slot.block.begin(), slot.block.end());
        if (slot.atom_idx >= 0) {
            used[slot.atom_idx] = true;
            chosen_scalars.push_back(v.atom);
            search(st, used, depth + 1, endo_pos, key, slot.ids, sign * v.sign, chosen_scalars,
                   chosen_endo);
            chosen_scalars.pop_back();
            used[slot.atom_idx] = false;
        } else {
            chosen_endo.push_back(v.atom);
            search(st, used, depth + 1, endo_pos + 1, key, slot.ids, sign * v.sign, chosen_scalars,
                   chosen_endo);
            chosen_endo.pop_back();
        }
        key.resize(key_mark);
        if (st.zero) return;
    }
}

}  // namespace

std::optional<Monomial> canonicalize(const Monomial& input) {
    Monomial m = input;
    if (m.coeff == 0) return std::nullopt;
    validate(m);
    if (!local_normalize(m)) return std::nullopt;

    SearchState st;
    {
        std::map<int, std::vector<Index>> occ;
        collect_indices(m, occ);
        for (const auto& [label, v] : occ) st.occ_count.emplace_back(label, (int)v.size());
    }
    st.scalar_variants.resize(m.scalars.size());
    for (size_t i = 0; i < m.scalars.size(); ++i)
        if (!atom_variants(m.scalars[i], st.scalar_variants[i])) return std::nullopt;
    st.endo_variants.resize(m.endo.size());
    for (size_t i = 0; i < m.endo.size(); ++i)
        if (!atom_variants(m.endo[i], st.endo_variants[i])) return std::nullopt;

    st.scratch.resize(m.scalars.size() + m.endo.size() + 1);
    std::vector<bool> used(m.scalars.size(), false);
    Key key;
    IdVec ids;
    std::vector<Atom> cs, ce;
    search(st, used, 0, 0, key, ids, 1, cs, ce);
    if (st.zero) return std::nullopt;

    Monomial out;
    out.coeff = m.coeff * st.best_sign;
    out.scalars = st.best_scalars;
    out.endo = st.best_endo;

    // rename dummies to -1,-2,... by first occurrence and normalize each
    // dummy pair so its first occurrence points down
    std::map<int, int> rename;
    std::map<int, bool> flip_pair;
    enumerate_slots(out, [&](const SlotRef&, const Index& idx) {
        if (idvec_find(st.occ_count, idx.label) != 2) return;
        if (rename.count(idx.label)) return;
        int id = (int)rename.size();
        rename[idx.label] = -(id + 1);
        flip_pair[idx.label] = (idx.var == Var::Up);
    });
    enumerate_slots(out, [&](const SlotRef& r, const Index& idx) {
        const int orig = idx.label;
        auto it = rename.find(orig);
        if (it == rename.end()) return;
        const bool do_flip = flip_pair[orig];
        Index* p = deref(out, r);
        p->label = it->second;
        if (do_flip) p->var = (p->var == Var::Up) ? Var::Down : Var::Up;
    });
    return out;
}

static void key_atom(const Atom& a, Key& out) {
    out.push_back((std::int32_t)a.kind);
    out.push_back((std::int32_t)a.prefix.size());
    out.push_back((std::int32_t)a.slots.size());
    out.push_back((std::int32_t)a.chain.size());
    auto emit = [&](const Index& i) {
        out.push_back(i.label);
        out.push_back(i.var == Var::Up ? 0 : 1);
    };
    for (const Index& i : a.prefix) emit(i);
    for (const Index& i : a.slots) emit(i);
    for (const Atom& c : a.chain) key_atom(c, out);
}

std::vector<std::int32_t> monomial_key(const Monomial& m) {
    Key k;
    for (const Atom& a : m.scalars) key_atom(a, k);
    k.push_back(-999);  // separator
    for (const Atom& a : m.endo) key_atom(a, k);
    return k;
}

// ---------------------------------------------------------------------------
// Polynomials
// ---------------------------------------------------------------------------

bool TensorPolynomial::operator==(const TensorPolynomial& o) const {
    if (terms.size() != o.terms.size()) return false;
    for (size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].coeff != o.terms[i].coeff) return false;
        if (!(terms[i].scalars == o.terms[i].scalars)) return false;
        if (!(terms[i].endo == o.terms[i].endo)) return false;
    }
    return true;
}

TensorPolynomial make_poly(std::vector<Monomial> monomials) {
    std::map<Key, Monomial> acc;
    for (Monomial& m : monomials) {
        auto cm = canonicalize(m);
        if (!cm) continue;
        Key k = monomial_key(*cm);
        auto it = acc.find(k);
        if (it == acc.end())
            acc.emplace(std::move(k), std::move(*cm));
        else
            it->second.coeff += cm->coeff;
    }
    TensorPolynomial p;
    for (auto& [k, m] : acc)
        if (m.coeff != 0) p.terms.push_back(std::move(m));
    return p;
}

TensorPolynomial poly_zero() { return {}; }

TensorPolynomial poly_one() {
    Monomial m;
    return make_poly({m});
}

TensorPolynomial poly_identity() {
    Monomial m;
    m.endo.push_back(identity_endo());
    return make_poly({m});
}

TensorPolynomial poly_mono(Monomial m) { return make_poly({std::move(m)}); }

// Both operands hold canonical sorted terms, so this is a plain merge.
TensorPolynomial poly_add(const TensorPolynomial& a, const TensorPolynomial& b) {
    if (a.terms.empty()) return b;
    if (b.terms.empty()) return a;
    TensorPolynomial out;
    out.terms.reserve(a.terms.size() + b.terms.size());
    std::size_t i = 0, j = 0;
    Key ka = monomial_key(a.terms[0]), kb = monomial_key(b.terms[0]);
    while (i < a.terms.size() && j < b.terms.size()) {
        if (ka < kb) {
            out.terms.push_back(a.terms[i++]);
            if (i < a.terms.size()) ka = monomial_key(a.terms[i]);
        } else if (kb < ka) {
            out.terms.push_back(b.terms[j++]);
            if (j < b.terms.size()) kb = monomial_key(b.terms[j]);
        } else {
            Monomial m = a.terms[i];
            m.coeff += b.terms[j].coeff;
            if (m.coeff != 0) out.terms.push_back(std::move(m));
            ++i;
            ++j;
            if (i < a.terms.size()) ka = monomial_key(a.terms[i]);
            if (j < b.terms.size()) kb = monomial_key(b.terms[j]);
        }
    }
    for (; i < a.terms.size(); ++i) out.terms.push_back(a.terms[i]);
    for (; j < b.terms.size(); ++j) out.terms.push_back(b.terms[j]);
    return out;
}

TensorPolynomial poly_sub(const TensorPolynomial& a, const TensorPolynomial& b) {
    return poly_add(a, poly_scale(b, Rat(-1)));
}

TensorPolynomial poly_scale(const TensorPolynomial& a, const Rat& c) {
    if (c == 0) return {};
    TensorPolynomial p = a;
    for (Monomial& m : p.terms) m.coeff *= c;
    return p;
}

TensorPolynomial poly_mul(const TensorPolynomial& a, const TensorPolynomial& b) {
    std::vector<Monomial> ms;
    ms.reserve(a.terms.size() * b.terms.size());
    for (const Monomial& x : a.terms) {
        Monomial xf = freshen_dummies(x);
        for (const Monomial& y : b.terms) {
            Monomial yf = freshen_dummies(y);
            Monomial prod;
            prod.coeff = xf.coeff * yf.coeff;
            prod.scalars = xf.scalars;
            prod.scalars.insert(prod.scalars.end(), yf.scalars.begin(), yf.scalars.end());
            prod.endo = xf.endo;
            prod.endo.insert(prod.endo.end(), yf.endo.begin(), yf.endo.end());
            ms.push_back(std::move(prod));
        }
    }
    return make_poly(std::move(ms));
}

TensorPolynomial poly_filter(const TensorPolynomial& p,
                             const std::function<bool(const Monomial&)>& pred) {
    TensorPolynomial out;
    for (const Monomial& m : p.terms)
        if (pred(m)) out.terms.push_back(m);
    return out;
}

static bool atom_contains_kind(const Atom& a, AtomKind k) {
    if (a.kind == k) return true;
    for (const Atom& c : a.chain)
        if (atom_contains_kind(c, k)) return true;
    return false;
}

bool mono_contains_kind(const Monomial& m, AtomKind k) {
    for (const Atom& a : m.scalars)
        if (atom_contains_kind(a, k)) return true;
    for (const Atom& a : m.endo)
        if (atom_contains_kind(a, k)) return true;
    return false;
}

static void count_kind(const Atom& a, AtomKind k, int& n) {
    if (a.kind == k) ++n;
    for (const Atom& c : a.chain) count_kind(c, k, n);
}

int bundle_curv_count(const Monomial& m) {
    int n = 0;
    for (const Atom& a : m.scalars) count_kind(a, AtomKind::BundleCurv, n);
    for (const Atom& a : m.endo) count_kind(a, AtomKind::BundleCurv, n);
    return n;
}

TensorPolynomial flip_xi(const TensorPolynomial& p) {
    TensorPolynomial out = p;
    for (Monomial& m : out.terms)
        if (xi_degree(m) % 2 == 1) m.coeff = -m.coeff;
    return out;
}

std::map<int, TensorPolynomial> split_by_xi_degree(const TensorPolynomial& p) {
    std::map<int, TensorPolynomial> out;
    for (const Monomial& m : p.terms) out[xi_degree(m)].terms.push_back(m);
    return out;
}

TensorPolynomial drop_bundle_curv(const TensorPolynomial& p) {
    return poly_filter(p, [](const Monomial& m) {
        return !mono_contains_kind(m, AtomKind::BundleCurv);
    });
}

TensorPolynomial drop_endo_A(const TensorPolynomial& p) {
    return poly_filter(p, [](const Monomial& m) { return !mono_contains_kind(m, AtomKind::EndoA); });
}

static TensorPolynomial subst_slotless(const TensorPolynomial& p, AtomKind k, const Rat& value) {
    std::vector<Monomial> ms;
    for (Monomial m : p.terms) {
        int count = 0;
        auto it = std::remove_if(m.scalars.begin(), m.scalars.end(), [&](const Atom& a) {
            if (a.kind == k) { ++count; return true; }
            return false;
        });
        m.scalars.erase(it, m.scalars.end());
        for (int i = 0; i < count; ++i) m.coeff *= value;
        ms.push_back(std::move(m));
    }
    return make_poly(std::move(ms));
}

TensorPolynomial subst_fiber_dim(const TensorPolynomial& p, const Rat& d) {
    return subst_slotless(p, AtomKind::FiberDim, d);
}

TensorPolynomial subst_dim(const TensorPolynomial& p, const Rat& n) {
    return subst_slotless(p, AtomKind::Dim, n);
}

TensorPolynomial symmetrize(const TensorPolynomial& p, const std::vector<int>& labels) {
    if (labels.size() < 2) return p;
    std::vector<int> perm(labels.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = (int)i;
    TensorPolynomial acc;
    Rat weight = Rat(1) / factorial((unsigned)labels.size());
    do {
        std::map<int, int> map;
        for (size_t i = 0; i < labels.size(); ++i) map[labels[i]] = labels[perm[i]];
        acc = poly_add(acc, poly_scale(relabel(p, map), weight));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return acc;
}

}  // namespace heatsym
