#pragma once

// Torus embedding Phi(theta) = (v(theta), theta + u(theta)) obtained by
// composing the time-one flows of the generating Hamiltonians of an
// iteration, starting from the trivial torus (0, theta).

#include <span>
#include <vector>

#include "kam/kam_step.hpp"
#include "kam/series.hpp"

namespace kam {

/// Parameters seen by each step when the final normal form sits at the
/// anchor. values[i] is the frequency parameter of step i, values[N] the
/// anchor; jacobians[i] = d values[i] / d omega (row-major).
struct ParameterChain {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> jacobians;

  const std::vector<double>& phi() const { return values.front(); }
  const std::vector<double>& phi_jacobian() const { return jacobians.front(); }
};

ParameterChain parameter_chain(std::span<const KamTransform> transforms,
                               std::span<const double> anchor);

/// F_i with its coefficients evaluated at parameter values[i]; jets are
/// dropped and coefficients with modulus below drop_abs removed.
std::vector<Series> generators_at(std::span<const KamTransform> transforms,
                                  const ParameterChain& chain, double drop_abs);

struct Embedding {
  std::vector<Series> u;  // angle displacement, one series in theta per coordinate
  std::vector<Series> v;  // action coordinate
  int grid_size = 0;
  double aliasing = 0.0;  // weighted norm of the top-quarter modes
  double scale = 0.0;     // max(|u|, |v|)
};

struct ComposeOptions {
  double drop_abs = 1e-22;
  double ode_tol = 1e-15;
  double coefficient_floor = 1e-19;  // DFT coefficients below this are not stored
  double aliasing_fraction = 1e-3;
};

/// Smallest power-of-two grid that is at least 4x the largest Fourier
/// degree among the generators, and at least 8.
int default_grid_size(std::span<const Series> generators);

/// Pointwise flow composition on a uniform grid followed by a discrete
/// Fourier transform. Throws NumericalError when the aliasing diagnostic
/// exceeds aliasing_fraction * scale.
Embedding compose_embedding(std::span<const KamTransform> transforms,
                            std::span<const double> anchor, int grid_size,
                            const ComposeOptions& options = {});

/// Same embedding from Lie series applied to the coordinate functions.
Embedding compose_embedding_series(std::span<const KamTransform> transforms,
                                   std::span<const double> anchor, double drop_abs = 1e-22);

/// sup over a uniform grid of |X_H(Phi) - D Phi . omega| where H is the
/// original Hamiltonian evaluated at parameter phi (jets around the anchor).
double verify_invariance(const Embedding& embedding, const Series& H,
                         std::span<const double> anchor, std::span<const double> phi,
                         std::span<const double> omega, int grid_size);

/// Largest |u|, |v| difference between two embeddings at strip `s`.
double embedding_distance(const Embedding& a, const Embedding& b, double s);

/// Worker count from KAM_THREADS, bounded by the hardware and by `tasks`.
int worker_count(std::size_t tasks);

}  // namespace kam
