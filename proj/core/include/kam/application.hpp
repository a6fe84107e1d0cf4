#pragma once

// From a perturbed integrable Hamiltonian h(p) + f(q, p) to the
// parameterized normal-form setting, and the torus-distance sweep.

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "kam/schedule.hpp"

namespace kam {

/// Polynomial integrable Hamiltonian h(p) = sum_m c_m p^m.
class IntegrableSystem {
 public:
  struct Monomial {
    std::vector<int> exponent;
    double coefficient = 0.0;
  };

  IntegrableSystem(int n, std::vector<Monomial> monomials, std::string name = "custom");

  /// |p|^2 / 2.
  static IntegrableSystem quadratic(int n);
  /// p1^2/2 + p1 p2/4 + p2^2 (n = 2).
  static IntegrableSystem mixed_quadratic();
  static IntegrableSystem by_name(const std::string& name, int n);

  int dim() const { return n_; }
  const std::string& name() const { return name_; }
  int degree() const;

  double value(std::span<const double> p) const;
  std::vector<double> gradient(std::span<const double> p) const;
  std::vector<double> hessian(std::span<const double> p) const;  // row-major

  /// Newton solve of grad h(p) = omega from `start`. Throws NumericalError
  /// on failure and DomainError when the Hessian is singular.
  std::vector<double> frequency_inverse(std::span<const double> omega,
                                        std::span<const double> start) const;

  /// Bound on the Hessian over |p - p0| <= radius: the larger of the max row
  /// sum at p0 and the majorant sum |c_m| |m|(|m|-1) (|p0| + radius)^(|m|-2).
  double hessian_bound(std::span<const double> p0, double radius) const;

  const std::vector<Monomial>& monomials() const { return monomials_; }

 private:
  int n_;
  std::vector<Monomial> monomials_;
  std::string name_;
};

struct PerturbationSetup {
  Mode mode = Mode::theorem2;
  NormalForm N;
  Series P;                 // P_f in theorem2 mode, P_f + P_h in theorem1 mode
  std::optional<Series> Q;  // P_h in theorem2 mode
  Series P_f;
  Series P_h;
  std::vector<double> p0;
  std::vector<double> p0_jacobian;  // d p0 / d omega
  double r = 0.0;
  double s = 0.0;
  double eps_f = 0.0;  // |P_f|_{r,s}
  double eps = 0.0;    // |P|_{r,s}
  double M = 0.0;
};

/// f is given as a series in (q, p): Fourier in q, polynomial in p.
PerturbationSetup parameterize(const IntegrableSystem& sys, const Series& f,
                               const FrequencyVector& omega, double r, double s, Mode mode,
                               std::span<const double> p_start = {});

double choose_radius(Mode mode, double eps, double alpha, double s, double nu, double M,
                     double delta);

/// sup_theta |v(theta)| on a grid plus |p0(phi) - p0(omega)|.
double torus_distance(const TorusResult& result, const PerturbationSetup& setup,
                      const IntegrableSystem& sys);

struct ScalingRow {
  double eps = 0.0;
  Mode mode = Mode::theorem2;
  double r = 0.0;
  double distance = 0.0;
  double bound = 0.0;  // c r^-1 |P|
  std::string group;   // slope fit group, empty when excluded
  int iterations = 0;
  double residual = 0.0;
  bool ok = false;
  std::string error;
  RunResult run;  // populated when ok
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  int points = 0;
};

/// Ordinary least squares of y on x with the standard error of the slope.
SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y);

struct ScalingConfig {
  ScheduleOverrides overrides;
  RunOptions run;
  double h_domain = 1.0;
  double est1_c = 1.0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  std::vector<std::pair<Mode, SlopeFit>> distance_slopes;
  std::vector<std::pair<Mode, SlopeFit>> bound_slopes;
};

/// Runs parameterize, choose_radius, build_schedule, run_iteration and
/// torus_distance for every (eps, mode); rows run concurrently and are
/// stored in input order.
ScalingResult scaling_experiment(const IntegrableSystem& sys, const Series& f_template,
                                 const FrequencyVector& omega, double s,
                                 const std::vector<double>& eps_list,
                                 const std::vector<Mode>& modes, const ScalingConfig& config);

/// Monomial expansion of g(p0 + I) in I with derivatives in p0; used for
/// both P_f and P_h.
Series expand_around(const Series& g, std::span<const double> p0,
                     std::span<const double> dp0_domega, int d_max);

}  // namespace kam
