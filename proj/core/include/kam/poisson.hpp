#pragma once

#include <functional>

#include "kam/series.hpp"

namespace kam {

Series derivative_angle(const Series& f, int j);
Series derivative_action(const Series& f, int j);

/// {f, g} = sum_j df/dtheta_j dg/dI_j - df/dI_j dg/dtheta_j.
///
/// With N = e + omega.I this gives {F, N} = omega . dF/dtheta, and the flow
/// of F moves observables by d/dt (G o X_F^t) = {G, F} o X_F^t. Action
/// degrees above the owning d_max are valued at `reference` and moved to the
/// tail estimate.
Series poisson_bracket(const Series& f, const Series& g, const Weights& reference = {});

struct LieOptions {
  Weights weights;           // where term norms are measured
  double tail_tol = 1e-30;   // stop once a term's norm is at most this
  double time = 1.0;
  int max_terms = 80;
  double prune_tol = 0.0;    // absolute; per-term pruning at `weights`
};

struct LieResult {
  Series value;
  double tail_bound = 0.0;
  int terms = 0;      // number of nonzero terms summed
  double ratio = 0.0; // observed geometric ratio of consecutive terms
};

/// sum_j coefficient(j) ad^j G with ad = {., F}. Throws DivergenceError when
/// the observed term ratio is >= 1 after the first two terms or when
/// max_terms is reached without meeting tail_tol.
LieResult lie_series(const Series& G, const Series& F,
                     const std::function<double(int)>& coefficient, const LieOptions& opt);

/// H o X_F^t = sum_j t^j/j! ad_F^j H.
LieResult lie_transform(const Series& H, const Series& F, const LieOptions& opt);

}  // namespace kam
