#include "kam/diophantine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <sstream>

#include "kam/errors.hpp"

namespace kam {

namespace {

// |k.omega| with exact-resonance snapping: a dot product below a few ulps of
// sum |k_j omega_j| is reported as zero.
double divisor(std::span<const int> k, std::span<const double> omega) {
  double dot = 0.0;
  double scale = 0.0;
  for (std::size_t j = 0; j < k.size(); ++j) {
    dot += k[j] * omega[j];
    scale += std::abs(k[j] * omega[j]);
  }
  const double a = std::abs(dot);
  return a <= 4.0 * std::numeric_limits<double>::epsilon() * scale ? 0.0 : a;
}

int l1(std::span<const int> k) {
  int s = 0;
  for (int v : k) s += std::abs(v);
  return s;
}

void compositions(int n, int d, std::vector<int>& current, std::vector<std::vector<int>>& out) {
  const int j = static_cast<int>(current.size());
  if (j == n - 1) {
    for (int v : {-d, d}) {
      current.push_back(v);
      out.push_back(current);
      current.pop_back();
      if (d == 0) break;
    }
    return;
  }
  for (int v = -d; v <= d; ++v) {
    current.push_back(v);
    compositions(n, d - std::abs(v), current, out);
    current.pop_back();
  }
}

// Visits the shell |k|_1 = d in lexicographic order without allocating.
template <class Fn>
void visit_shell(int n, int d, int j, std::vector<int>& k, Fn& fn) {
  if (j == n - 1) {
    k[j] = -d;
    fn(k);
    if (d != 0) {
      k[j] = d;
      fn(k);
    }
    return;
  }
  for (int v = -d; v <= d; ++v) {
    k[j] = v;
    visit_shell(n, d - std::abs(v), j + 1, k, fn);
  }
}

bool is_representative(const std::vector<int>& k) {
  for (int v : k) {
    if (v != 0) return v > 0;
  }
  return false;
}

}  // namespace

std::vector<std::vector<int>> shell_representatives(int n, int d) {
  if (n < 1) throw DomainError("shell_representatives: n must be positive");
  std::vector<std::vector<int>> all;
  std::vector<int> current;
  compositions(n, d, current, all);
  std::vector<std::vector<int>> reps;
  for (auto& k : all) {
    if (is_representative(k)) reps.push_back(std::move(k));
  }
  std::sort(reps.begin(), reps.end());
  return reps;
}

double small_divisor(std::span<const int> k, std::span<const double> omega) {
  if (k.size() != omega.size()) throw DimensionMismatch("small_divisor: dimension mismatch");
  if (l1(k) == 0) {
    throw DomainError("small_divisor: k = 0 is excluded (remove the angle average first)");
  }
  return divisor(k, omega);
}

double small_divisor(std::span<const int> k, const FrequencyVector& omega) {
  return small_divisor(k, omega.omega);
}

namespace {

CertifyResult scan(std::span<const double> omega, double alpha, double tau, int d_from, int d_to,
                   FrequencyVector cert, double worst) {
  const int n = static_cast<int>(omega.size());
  std::vector<int> k(n, 0);
  std::optional<Counterexample> bad;
  for (int d = d_from; d <= d_to && !bad; ++d) {
    const double kpow = std::pow(static_cast<double>(d), tau);
    auto check = [&](const std::vector<int>& kk) {
      if (bad || !is_representative(kk)) return;
      const double div = divisor(kk, omega);
      const double margin = div * kpow;
      if (margin < alpha) {
        bad = Counterexample{kk, div, alpha / kpow};
      } else if (margin < worst) {
        worst = margin;
        cert.worst_k = kk;
      }
    };
    visit_shell(n, d, 0, k, check);
  }
  if (bad) return *bad;
  cert.K_verified = d_to;
  cert.worst_margin = worst / alpha;
  return cert;
}

}  // namespace

CertifyResult certify(std::span<const double> omega, double alpha, double tau, int K) {
  if (K < 1) throw DomainError("certify: K must be at least 1");
  if (!(alpha > 0.0)) throw DomainError("certify: alpha must be positive");
  FrequencyVector cert;
  cert.omega.assign(omega.begin(), omega.end());
  cert.alpha = alpha;
  cert.tau = tau;
  return scan(omega, alpha, tau, 1, K, std::move(cert), std::numeric_limits<double>::infinity());
}

double max_alpha(std::span<const double> omega, double tau, int K) {
  if (K < 1) throw DomainError("max_alpha: K must be at least 1");
  const int n = static_cast<int>(omega.size());
  double best = std::numeric_limits<double>::infinity();
  bool resonant = false;
  std::vector<int> k(n, 0);
  for (int d = 1; d <= K && !resonant; ++d) {
    const double kpow = std::pow(static_cast<double>(d), tau);
    auto check = [&](const std::vector<int>& kk) {
      if (resonant || !is_representative(kk)) return;
      const double div = divisor(kk, omega);
      if (div == 0.0) {
        resonant = true;
        return;
      }
      best = std::min(best, div * kpow);
    };
    visit_shell(n, d, 0, k, check);
  }
  return resonant ? 0.0 : best;
}

std::vector<double> quadratic_irrational_frequency(int n) {
  if (n < 1) throw DomainError("quadratic_irrational_frequency: n must be positive");
  if (n == 1) return {1.0};
  if (n == 2) return {1.0, (1.0 + std::sqrt(5.0)) / 2.0};
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  if (n - 1 > static_cast<int>(std::size(kPrimes))) {
    throw DomainError("quadratic_irrational_frequency: dimension too large");
  }
  std::vector<double> w{1.0};
  for (int j = 0; j < n - 1; ++j) w.push_back(std::sqrt(static_cast<double>(kPrimes[j])));
  return w;
}

FrequencyVector extend_certificate(const FrequencyVector& f, int K) {
  if (K <= f.K_verified) return f;
  if (!(f.alpha > 0.0)) throw DomainError("extend_certificate: alpha must be positive");
  // Shells up to K_verified are already covered; only the new ones are scanned.
  const double worst = f.K_verified > 0 && !f.worst_k.empty()
                           ? f.worst_margin * f.alpha
                           : std::numeric_limits<double>::infinity();
  auto result = scan(f.omega, f.alpha, f.tau, f.K_verified + 1, K, f, worst);
  if (auto* bad = std::get_if<Counterexample>(&result)) {
    std::ostringstream msg;
    msg << "Diophantine certificate fails at k=(";
    for (std::size_t j = 0; j < bad->k.size(); ++j) msg << (j ? "," : "") << bad->k[j];
    msg << "): |k.omega|=" << bad->divisor << " < alpha |k|^-tau=" << bad->required;
    throw CertificationError(msg.str());
  }
  return std::get<FrequencyVector>(result);
}

nlohmann::json certificate_to_json(const FrequencyVector& f) {
  return {{"omega", f.omega},     {"alpha", f.alpha},
          {"tau", f.tau},         {"K_verified", f.K_verified},
          {"worst_k", f.worst_k}, {"worst_margin", f.worst_margin}};
}

FrequencyVector certificate_from_json(const nlohmann::json& j) {
  FrequencyVector f;
  f.omega = j.at("omega").get<std::vector<double>>();
  f.alpha = j.at("alpha").get<double>();
  f.tau = j.at("tau").get<double>();
  f.K_verified = j.at("K_verified").get<int>();
  f.worst_k = j.value("worst_k", std::vector<int>{});
  f.worst_margin = j.value("worst_margin", 0.0);
  return f;
}

}  // namespace kam
