#pragma once

#include <vector>

#include "heatsym/calculus.hpp"
#include "heatsym/expr.hpp"

namespace heatsym {

// ---------------------------------------------------------------------------
// Composition coefficients rho_{alpha,beta} and the recurrence coefficients
// chi^{(p)}_alpha.  Multi-indices are bags of distinct labels; the results
// carry those labels as free lower indices.
//
//   rho_{alpha,beta} = (-1)^{|a|+|b|} sum_{L<=a, M<=b} (-1)^{|L|+|M|}
//                      xi^{(a\L)+(b\M)} R^{L,M}
//
//   chi_alpha = g^{ij} rho_{alpha,<ij>} + 2 rho_{alpha,<i>} xi^i,
// split into homogeneous xi-degrees 0,1,2.
// ---------------------------------------------------------------------------

TensorPolynomial compute_rho(const std::vector<int>& alpha, const std::vector<int>& beta,
                             bool scalar_mode = false);

struct ChiTriple {
    TensorPolynomial chi0, chi1, chi2;
};

ChiTriple compute_chi(const std::vector<int>& alpha, bool scalar_mode = false);

// The paper reports several entries only up to terms linear in the bundle
// curvature; this drops every monomial whose endo chain holds exactly one
// bundle-curvature atom and no A.
TensorPolynomial drop_linear_bundle_curv(const TensorPolynomial& p);

// Mobius partner of the rho sum: rebuilds R^{alpha,beta} from the rho table.
// Internal consistency check.
TensorPolynomial reconstruct_compose_from_rho(const std::vector<int>& alpha,
                                              const std::vector<int>& beta,
                                              bool scalar_mode = false);

}  // namespace heatsym
