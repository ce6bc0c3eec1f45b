#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "heatsym/expr.hpp"
#include "heatsym/rational.hpp"

namespace heatsym {

// ---------------------------------------------------------------------------
// Exact multivariate polynomials in the jet coordinates x^1..x^n, truncated
// at a total degree.  These are plumbing for the numeric oracle: metric jets,
// Christoffels, curvature fields and their covariant derivatives are computed
// exactly and then evaluated at the center point.
// ---------------------------------------------------------------------------

struct Poly {
    int n = 0;
    int maxdeg = 0;
    std::map<std::vector<std::uint8_t>, Rat> c;

    static Poly zero(int n, int maxdeg) { return Poly{n, maxdeg, {}}; }
    static Poly constant(int n, int maxdeg, const Rat& v);
    static Poly variable(int n, int maxdeg, int i);

    Rat at_origin() const;
    bool is_zero() const { return c.empty(); }
};

Poly operator+(const Poly& a, const Poly& b);
Poly operator-(const Poly& a, const Poly& b);
Poly operator*(const Poly& a, const Poly& b);
Poly operator*(const Rat& s, const Poly& a);
Poly diff(const Poly& a, int i);
Poly truncated(const Poly& a, int deg);
// substitute x = M y (exact linear change of coordinates)
Poly linear_subst(const Poly& a, const std::vector<std::vector<Rat>>& M);

// rank-r tensor field with all-lower components, row-major over n^rank
struct PField {
    int n = 0;
    int rank = 0;
    std::vector<Poly> comp;

    static PField make(int n, int rank, int maxdeg);
    Poly& at(const std::vector<int>& idx);
    const Poly& at(const std::vector<int>& idx) const;
};

// d x d matrix of polynomials
struct MatP {
    int d = 0;
    std::vector<Poly> e;
    static MatP zeros(int d, int n, int maxdeg);
    static MatP id(int d, int n, int maxdeg);
    Poly& at(int i, int j) { return e[i * d + j]; }
    const Poly& at(int i, int j) const { return e[i * d + j]; }
};

MatP operator+(const MatP& a, const MatP& b);
MatP operator-(const MatP& a, const MatP& b);
MatP operator*(const MatP& a, const MatP& b);
MatP operator*(const Poly& s, const MatP& a);
MatP diff(const MatP& a, int i);

// rank-r tensor field of endomorphisms
struct EField {
    int n = 0;
    int rank = 0;
    int d = 0;
    std::vector<MatP> comp;

    static EField make(int n, int rank, int d, int maxdeg);
    MatP& at(const std::vector<int>& idx);
    const MatP& at(const std::vector<int>& idx) const;
};

// ---------------------------------------------------------------------------
// Metric jets
// ---------------------------------------------------------------------------

struct MetricJet {
    int n = 0;
    int degree = 0;             // truncation order of the jet
    std::vector<Poly> g;        // n*n, symmetric; g(0) = identity, dg(0) = 0
    const Poly& at(int i, int j) const { return g[i * n + j]; }
    Poly& at(int i, int j) { return g[i * n + j]; }
};

MetricJet flat_jet(int n, int degree);
// deterministic pseudo-random jet in normal-form gauge with small rational coefficients
MetricJet random_metric_jet(int n, int degree, std::uint64_t seed);
// g_ij = delta_ij - (K/3)(delta_ij |x|^2 - x_i x_j); curvature K(dd - dd) at 0
MetricJet sphere_like_jet(int n, const Rat& K, int degree = 4);
// block-extend by one flat dimension (for the product-splitting checks)
MetricJet extend_trivially(const MetricJet& jet, int extra_degree_hint = 0);
// congruence g'(y) = M^T g(My) M; leaves gauge conditions intact for linear M
MetricJet linear_frame_change(const MetricJet& jet, const std::vector<std::vector<Rat>>& M);

// Bundle data: connection form omega (so(d)-valued unless trace_free=false)
// with omega(0)=0, and a symmetric algebraic operator A.
struct BundleJet {
    int n = 0, d = 1, degree = 0;
    std::vector<MatP> omega;  // n entries
    MatP A;
};

BundleJet random_bundle_jet(int n, int d, int degree, std::uint64_t seed, bool trace_free = true);

// ---------------------------------------------------------------------------
// Jet geometry
// ---------------------------------------------------------------------------

struct JetGeometry {
    int n = 0;
    int degree = 0;
    std::vector<Poly> g, ginv;     // n*n
    std::vector<Poly> gamma;       // n*n*n, gamma[p][i][j] upper p
    PField riemann;                // all-lower R_{ijkl}, paper normalization

    const Poly& G(int p, int i, int j) const { return gamma[(p * n + i) * n + j]; }
};

JetGeometry jet_geometry(const MetricJet& jet);

// covariant derivative, new index prepended (outermost first)
PField cov_deriv(const JetGeometry& geo, const PField& T);
EField cov_deriv(const JetGeometry& geo, const std::vector<MatP>& omega, const EField& T);
// section-valued variant: the connection acts by left multiplication only
// (a matrix-valued section is d column sections side by side)
EField cov_deriv_left(const JetGeometry& geo, const std::vector<MatP>& omega, const EField& T);

// ---------------------------------------------------------------------------
// Curvature data at the center point, and numeric evaluation
// ---------------------------------------------------------------------------

struct NumTensor {
    int n = 0;
    int rank = 0;
    std::vector<Rat> v;
    const Rat& at(const std::vector<int>& idx) const;
};

struct NumETensor {
    int n = 0;
    int rank = 0;
    int d = 1;
    std::vector<Rat> v;  // n^rank * d * d
    // entry (idx; a,b)
    const Rat& at(const std::vector<int>& idx, int a, int b) const;
};

struct CurvatureData {
    int n = 0;
    int d = 1;
    bool delta_gauge = true;
    int max_order = 2;
    std::vector<std::vector<Rat>> g0, g0inv;
    // derivative order -> components; all-lower, prefix indices first
    std::vector<NumTensor> riemann, ricci, scal;  // index = number of nabla prefixes
    std::vector<NumETensor> rcal, endoA;          // bundle curvature and A
    bool has_bundle = false;
};

// max_order = highest number of covariant derivatives stored per atom kind.
// Throws CapacityError when the jet degree cannot support the request.
CurvatureData evaluate_curvature(const MetricJet& jet, int max_order = 2);
CurvatureData evaluate_curvature(const MetricJet& jet, const BundleJet& bundle, int max_order = 2);

using FreeAssign = std::map<int, int>;  // free label -> coordinate value

// Exact evaluation of a scalar-valued polynomial (no endo chain outside
// traces, no xi, no lambda).  Free indices must be assigned.
GaussRat numeric_eval(const TensorPolynomial& p, const CurvatureData& data,
                      const FreeAssign& assign = {});

// Endomorphism-valued evaluation; scalar monomials act as multiples of I.
std::vector<GaussRat> numeric_eval_endo(const TensorPolynomial& p, const CurvatureData& data,
                                        const FreeAssign& assign = {});

// Compare two polynomials numerically on all assignments of their free labels.
bool numerically_equal(const TensorPolynomial& a, const TensorPolynomial& b,
                       const CurvatureData& data);

}  // namespace heatsym
