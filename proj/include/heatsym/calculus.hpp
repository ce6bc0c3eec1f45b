#pragma once

#include <vector>

#include "heatsym/expr.hpp"

namespace heatsym {

// ---------------------------------------------------------------------------
// Covariant-derivative engine.
//
// All derivative bookkeeping is in (-i nabla) units: applying d_deriv(p, i)
// prepends the index i to the derivative prefix of every differentiable atom
// (Leibniz), which is exactly the action of (-i nabla)_i.  The metric, xi,
// the identity and the dimension atoms are horizontal constants.
// ---------------------------------------------------------------------------

TensorPolynomial covariant_derivative(const TensorPolynomial& p, Index i);

// Composition of symmetrized covariant derivatives:
//   (-i nabla)^alpha (-i nabla)^beta = R^{alpha,beta}(x, -i nabla).
// The result is returned as a polynomial in (x, xi): a xi atom with label c
// stands for the operator slot (-i nabla)_c.  Multi-indices are bags of
// distinct index labels with Down variance.
//
// scalar_mode drops the bundle curvature (the scalar-case specialization).
// xi_cap >= 0 truncates the result to xi-degree <= xi_cap (used for large
// orders where only the low-degree part feeds the pipeline).
TensorPolynomial compose_poly(const std::vector<int>& alpha, const std::vector<int>& beta,
                              bool scalar_mode = false, int xi_cap = -1);

// Operator view of the same data.
struct DerivOpTerm {
    TensorPolynomial coeff_poly;   // x-dependent, End-V valued
    std::vector<int> sym_deriv;    // gamma: labels of (-i nabla)^gamma, sorted
};
struct OperatorPolynomial {
    std::vector<DerivOpTerm> terms;
};
OperatorPolynomial compose_sym_derivs(const std::vector<int>& alpha, const std::vector<int>& beta,
                                      bool scalar_mode = false);

// |alpha|+|beta| ceiling for compose/rho computations (default 6)
int compose_order_bound();
void set_compose_order_bound(int bound);

// Mobius partner of the rho coefficients: reconstructs R^{alpha,beta} as
// sum over sub-bags of xi^{...} rho_{lambda,mu}.  Used as an internal
// consistency check; lives here because it only needs compose machinery.
TensorPolynomial ensure_identity_chain(const TensorPolynomial& p);

// ---------------------------------------------------------------------------
// Bianchi / Ricci identity simplifier.
//
// Rewrites to a fixed preferred basis:
//   - divergences of the Riemann atom (an innermost derivative index
//     contracted against an own slot) via the contracted second Bianchi
//     identity; non-innermost contractions are commuted inward, emitting
//     curvature corrections;
//   - divergences of the Ricci atom via nabla^p Ric_jp = 1/2 nabla_j S;
//   - the quadratic patterns R_ijkl R^ikjl -> 1/2 |R|^2 and their
//     free-index versions from the first Bianchi identity.
// Each rule strictly decreases (nabla count, sum of atom ranks,
// divergence distance), so the rewrite terminates.
// ---------------------------------------------------------------------------

TensorPolynomial simplify_identities(const TensorPolynomial& p);

}  // namespace heatsym
