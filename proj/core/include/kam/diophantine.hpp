#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <variant>
#include <vector>

namespace kam {

/// A frequency vector together with a finite Diophantine certificate:
/// |k.omega| >= alpha |k|_1^{-tau} for every 0 < |k|_1 <= K_verified.
struct FrequencyVector {
  std::vector<double> omega;
  double alpha = 0.0;
  double tau = 0.0;
  int K_verified = 0;
  std::vector<int> worst_k;   // minimizer of |k.omega| |k|^tau over the scanned range
  double worst_margin = 0.0;  // that minimum divided by alpha

  int dim() const { return static_cast<int>(omega.size()); }
  double nu() const { return tau + 1.0; }
};

struct Counterexample {
  std::vector<int> k;       // representative with first nonzero entry positive
  double divisor = 0.0;     // |k.omega|
  double required = 0.0;    // alpha |k|^{-tau}
};

using CertifyResult = std::variant<FrequencyVector, Counterexample>;

/// |k.omega| for k != 0.
double small_divisor(std::span<const int> k, std::span<const double> omega);
double small_divisor(std::span<const int> k, const FrequencyVector& omega);

/// Exhaustive scan of 0 < |k|_1 <= K in increasing |k|_1, lexicographic
/// within a shell, one representative per pair {k, -k}.
CertifyResult certify(std::span<const double> omega, double alpha, double tau, int K);

/// min over 0 < |k|_1 <= K of |k.omega| |k|_1^tau; 0 on an exact resonance.
double max_alpha(std::span<const double> omega, double tau, int K);

/// Deterministic non-resonant fixtures: (1), (1, golden ratio), (1, sqrt 2,
/// sqrt 3), then square roots of further primes.
std::vector<double> quadratic_irrational_frequency(int n);

/// Scans the shells K_verified < d <= K with the stored alpha and tau. Throws
/// CertificationError naming the violating k.
FrequencyVector extend_certificate(const FrequencyVector& f, int K);

/// Enumerates the half-space representatives of the shell |k|_1 = d.
std::vector<std::vector<int>> shell_representatives(int n, int d);

nlohmann::json certificate_to_json(const FrequencyVector& f);
FrequencyVector certificate_from_json(const nlohmann::json& j);

}  // namespace kam
