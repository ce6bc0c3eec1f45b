#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "heatsym/rational.hpp"

namespace heatsym {

struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SequencingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Indices.
//
// Labels are plain ints.  Positive labels are "named" (free indices chosen by
// the caller, or temporaries from fresh_label()).  Canonical monomials use
// negative labels -1,-2,... for dummies, assigned by first occurrence.
// A label occurring twice in a monomial (once up, once down) is a dummy;
// a label occurring once is free.
// ---------------------------------------------------------------------------

enum class Var : std::uint8_t { Up, Down };

struct Index {
    int label = 0;
    Var var = Var::Down;

    bool operator==(const Index& o) const { return label == o.label && var == o.var; }
};

inline Index up(int label) { return Index{label, Var::Up}; }
inline Index dn(int label) { return Index{label, Var::Down}; }
inline Index flip(Index i) { return Index{i.label, i.var == Var::Up ? Var::Down : Var::Up}; }

int fresh_label();  // process-wide, thread-safe

// ---------------------------------------------------------------------------
// Atoms.
//
// Derivative prefixes mean iterated (-i * covariant derivative), outermost
// first: prefix (a,b) on atom X denotes (-i nabla)_a (-i nabla)_b X.  Keeping
// the -i inside the prefix makes every stored coefficient a real rational;
// the numeric oracle multiplies by (-i)^{prefix length}.
// ---------------------------------------------------------------------------

enum class AtomKind : std::uint8_t {
    Metric,      // g, slots carry variance (both up = inverse metric)
    Xi,          // momentum covector
    Riemann,     // R_{ijkl}, antisym (1,2) and (3,4), pair-swap symmetric
    Ricci,       // R_{ij} = g^{pq} R_{ipjq}, symmetric
    Scalar,      // S
    BundleCurv,  // curvature of the bundle connection, antisymmetric, End V
    EndoA,       // the algebraic operator A, End V
    IdentityE,   // identity endomorphism
    Dim,         // n = dim M
    FiberDim,    // d = dim V
    Trace        // Tr of an endomorphism chain; scalar-valued
};

bool is_endo_kind(AtomKind k);
bool is_differentiable(AtomKind k);  // may carry a derivative prefix
int slot_count(AtomKind k);
const char* kind_name(AtomKind k);

struct Atom {
    AtomKind kind = AtomKind::Scalar;
    std::vector<Index> prefix;  // (-i nabla) indices, outermost first
    std::vector<Index> slots;
    std::vector<Atom> chain;  // Trace only: the traced endomorphism chain

    bool operator==(const Atom& o) const {
        return kind == o.kind && prefix == o.prefix && slots == o.slots && chain == o.chain;
    }
};

// Convenience builders.
Atom metric(Index a, Index b);
Atom xi(Index a);
Atom riemann(Index a, Index b, Index c, Index d);
Atom ricci(Index a, Index b);
Atom scalar_S();
Atom bundle_curv(Index a, Index b);
Atom endo_A();
Atom identity_endo();
Atom dim_n();
Atom fiber_d();
Atom trace_of(std::vector<Atom> chain);
Atom with_prefix(Atom a, std::vector<Index> prefix);  // prepends

// ---------------------------------------------------------------------------
// Monomials and polynomials.
// ---------------------------------------------------------------------------

struct Monomial {
    Rat coeff = 1;
    std::vector<Atom> scalars;  // commuting factors
    std::vector<Atom> endo;     // ordered End-V chain (left factor acts first from outside)
};

struct TensorPolynomial {
    std::vector<Monomial> terms;  // canonical, no zero coefficients, sorted

    bool is_zero() const { return terms.empty(); }
    bool operator==(const TensorPolynomial& o) const;
};

// Structural validation: every label occurs once (free) or twice with
// opposite variance (dummy); slot counts match kinds.  Throws StructuralError.
void validate(const Monomial& m);

// Label occurrence map over prefix+slots of all atoms (recursing into traces).
void collect_indices(const Monomial& m, std::map<int, std::vector<Index>>& occ);
std::vector<int> free_labels(const Monomial& m);  // sorted
std::vector<int> free_labels(const TensorPolynomial& p);

// Apply a label relabeling everywhere (prefixes, slots, trace chains).
Monomial relabel(const Monomial& m, const std::map<int, int>& map);
TensorPolynomial relabel(const TensorPolynomial& p, const std::map<int, int>& map);
// Move every dummy (negative) label to a fresh positive label.
Monomial freshen_dummies(const Monomial& m);

// Degree helpers.
int xi_degree(const Monomial& m);
int nabla_count(const Monomial& m);      // total prefix length
int curvature_degree(const Monomial& m); // R,BundleCurv,A count 2; each prefix nabla counts 1

// Canonicalization.  Returns std::nullopt when the monomial is identically
// zero by its slot symmetries (antisymmetric pair against a symmetric
// contraction).  The result is the unique representative: fixed atom order,
// canonical slot arrangement, dummies renamed -1,-2,... by first occurrence,
// sign absorbed into coeff.
std::optional<Monomial> canonicalize(const Monomial& m);

// Stable comparison key of a canonical monomial (ignores coeff).
std::vector<std::int32_t> monomial_key(const Monomial& m);

// Polynomial construction and arithmetic (inputs need not be canonical).
TensorPolynomial make_poly(std::vector<Monomial> monomials);
TensorPolynomial poly_zero();
TensorPolynomial poly_one();       // coefficient 1, no atoms (scalar unit)
TensorPolynomial poly_identity();  // identity endomorphism I
TensorPolynomial poly_add(const TensorPolynomial& a, const TensorPolynomial& b);
TensorPolynomial poly_sub(const TensorPolynomial& a, const TensorPolynomial& b);
TensorPolynomial poly_mul(const TensorPolynomial& a, const TensorPolynomial& b);
TensorPolynomial poly_scale(const TensorPolynomial& a, const Rat& c);
TensorPolynomial poly_mono(Monomial m);

// Keep the monomials satisfying pred.
TensorPolynomial poly_filter(const TensorPolynomial& p,
                             const std::function<bool(const Monomial&)>& pred);

bool mono_contains_kind(const Monomial& m, AtomKind k);  // recurses into traces
// Count of BundleCurv atoms (recursing into traces).
int bundle_curv_count(const Monomial& m);

// xi -> -xi
TensorPolynomial flip_xi(const TensorPolynomial& p);
// Split by homogeneous xi degree.
std::map<int, TensorPolynomial> split_by_xi_degree(const TensorPolynomial& p);

// Substitutions used by specializations.
TensorPolynomial drop_bundle_curv(const TensorPolynomial& p);  // set curvature of V to zero
TensorPolynomial drop_endo_A(const TensorPolynomial& p);       // set A = 0
TensorPolynomial subst_fiber_dim(const TensorPolynomial& p, const Rat& d);
TensorPolynomial subst_dim(const TensorPolynomial& p, const Rat& n);

// Symmetrize (average) over all permutations of the given free labels.
TensorPolynomial symmetrize(const TensorPolynomial& p, const std::vector<int>& labels);

}  // namespace heatsym
