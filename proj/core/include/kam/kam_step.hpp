#pragma once

// One step of the linear KAM scheme for H = N + P (+ Q):
//
//   1. approximate P by R, affine in I and of Fourier degree <= K;
//   2. solve {F, N} = R - [R] coefficientwise;
//   3. move [R] into the normal form and absorb its linear-in-I part by a
//      change of the frequency parameter;
//   4. P+ = int_0^1 {(1-t)[R] + t R + Q, F} o X_F^t dt + (P - R) o X_F^1.

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "kam/diophantine.hpp"
#include "kam/series.hpp"

namespace kam {

/// N(I, omega) = e(omega) + omega.I at an anchor frequency.
struct NormalForm {
  Jet energy;
  FrequencyVector omega;

  int dim() const { return omega.dim(); }
  /// e + omega.I as a series, the omega_j coefficient carrying d/d omega_l = delta_jl.
  Series as_series(int d_max = kDefaultMaxDegree) const;
};

/// Explicit values for the implicit constants of the step inequalities.
struct ImplicitConstants {
  double eps_alpha = 1.0;   // eps <. alpha eta^2 r sigma^nu
  double eps_hr = 1.0;      // eps <. h r
  double r_alpha = 1.0;     // r <. M^-1 alpha eta^2 sigma^nu
  double estim2 = 1.0;      // transformation and parameter bounds
  double bracket_q = 1.0;   // |{Q,F}| <. M r (alpha sigma^nu)^-1 eps
};

struct StepParams {
  double eta = 0.1;
  double sigma = 0.05;
  double h = 0.0;
  long long K = 1;
  double r = 1.0;
  double s = 1.0;
  double epsilon = 0.0;  // upper bound for |P|_{r,s}
  double c_K = 1.0;
  ImplicitConstants implicit;
};

enum class IntegralMethod { series, gauss_legendre };

struct StepOptions {
  bool strict = false;
  IntegralMethod integral = IntegralMethod::series;
  int gl_order = 8;
  double lie_tol_rel = 1e-16;  // Lie series stop, relative to eps
  double prune_rel = 1e-14;    // coefficient pruning, relative to eps
  int max_lie_terms = 80;
  double strict_tail_fraction = 0.01;
};

/// omega_old = anchor + delta + jacobian (omega_new - anchor); jacobian is
/// n x n row-major.
struct ParameterShift {
  std::vector<double> delta;
  std::vector<double> jacobian;

  static ParameterShift identity(int n);
  double displacement() const;          // max |delta_j|
  double jacobian_defect() const;       // ||jacobian - Id|| (max row sum)
};

struct Approximation {
  Series approximation;
  Series remainder;  // P - approximation
  double error = 0.0;
  double budget = 0.0;
  double taylor_error = 0.0;
  long long K_used = 0;
  long long K_formula = 0;
  bool formula_sufficed = true;
};

/// Affine-in-I approximation of Fourier degree K, starting from
/// K = ceil(c_K sigma^-1 log(n eta^-2)) and doubling until
/// |P - R|_{2 eta r, s - sigma} <= 8 eta^2 eps.
Approximation russmann_truncate(const Series& P, const StepParams& params);

/// F_{k,m} = R_{k,m} / (i k.omega) for k != 0, zero average.
Series solve_homological(const Series& R, const NormalForm& N);

struct FrequencyCorrection {
  NormalForm next;
  ParameterShift shift;
  std::vector<double> frequency_drift;  // linear-in-I average v
  double residual = 0.0;
  int newton_iterations = 0;
};

/// Moves avgR = e_hat + v.I into the normal form and solves
/// omega' + v(omega') = omega for the parameter shift.
FrequencyCorrection frequency_correction(const Series& avgR, const NormalForm& N, double h);

struct KamTransform {
  Series F;
  ParameterShift shift;
  double sigma = 0.0;
  double eta = 0.0;
  double r = 0.0;
  double s = 0.0;
  double lie_tail = 0.0;
};

struct ConditionMargin {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound / value; >= 1 means satisfied
};

struct TransformBounds {
  double weighted_displacement = 0.0;  // |W(Phi - Id)|
  double weighted_jacobian = 0.0;      // |W(D Phi - Id) W^-1|
  double phi_displacement = 0.0;       // |phi - Id|
  double phi_jacobian = 0.0;           // h |D phi - Id|
  double transform_bound = 0.0;        // c (alpha r sigma^nu)^-1 eps
  double phi_bound = 0.0;              // c r^-1 eps
};

struct StepReport {
  double eps_in = 0.0;
  double eps_out = 0.0;
  double contraction_ratio = 0.0;
  double contraction_bound = 0.0;  // 9 eta^2
  double truncation_error = 0.0;
  double truncation_budget = 0.0;
  long long K_used = 0;
  long long K_formula = 0;
  bool K_formula_sufficed = true;
  double F_norm = 0.0;
  std::vector<ConditionMargin> margins;
  bool compliant = true;
  TransformBounds estim2;
  std::optional<double> bracket_q_norm;
  std::optional<double> bracket_q_bound;
  double lie_tail = 0.0;
  double prune_tail = 0.0;
  int lie_terms = 0;
  std::vector<double> frequency_drift;
};

struct StepResult {
  NormalForm next;
  Series P_next;
  KamTransform transform;
  StepReport report;
};

struct StepResultQ {
  NormalForm next;
  Series P_next;
  Series Q;
  KamTransform transform;
  StepReport report;
};

StepResult kam_step(const NormalForm& N, const Series& P, const StepParams& params,
                    const StepOptions& options = {});

/// Variant with an integrable, at least quadratic Q with |Q|_r <= M r^2.
StepResultQ kam_step_q(const NormalForm& N, const Series& P, const Series& Q, double M,
                       const StepParams& params, const StepOptions& options = {});

/// Gauss-Legendre nodes and weights on [0, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre_unit(int order);

nlohmann::json to_json(const StepReport& report);
nlohmann::json to_json(const ParameterShift& shift);

}  // namespace kam
