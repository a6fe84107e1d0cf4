#pragma once

// Sparse Fourier-Taylor series in (I, theta) with complex coefficients and a
// first-order jet in the frequency parameter attached to every coefficient.
//
//   f(I, theta; omega) = sum_{k,m} c_{k,m}(omega) I^m exp(i k.theta)
//
// Norms are weighted l1 majorants: |f|_{r,s} = sum |c_{k,m}| r^{|m|_1} e^{s|k|_1},
// which dominate the sup norm on the complex domain |I| < r, |Im theta| < s.

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kam {

inline constexpr int kMaxDim = 4;
inline constexpr int kDefaultMaxDegree = 4;

using Complex = std::complex<double>;

/// Fourier index k and action exponent m. Slots beyond the series dimension
/// are always zero.
struct MultiIndex {
  std::array<std::int16_t, kMaxDim> k{};
  std::array<std::uint8_t, kMaxDim> m{};

  int fourier_degree() const;
  int action_degree() const;
  bool is_average() const;  // k == 0
  MultiIndex conjugate() const;  // (-k, m)

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
};

/// Deterministic ordering: |k|_1, then k lexicographically, then m.
bool canonical_less(const MultiIndex& a, const MultiIndex& b);

struct MultiIndexHash {
  std::size_t operator()(const MultiIndex& key) const noexcept;
};

MultiIndex make_index(std::span<const int> k, std::span<const int> m);

/// Coefficient value and its derivative with respect to the parameter omega.
struct Jet {
  Complex value{};
  std::array<Complex, kMaxDim> d{};

  Jet() = default;
  explicit Jet(Complex v) : value(v) {}

  bool is_zero() const;
  Jet conj() const;
  double derivative_abs_sum() const;  // sum_l |d_l|

  Jet& operator+=(const Jet& o) {
    value += o.value;
    for (int l = 0; l < kMaxDim; ++l) d[l] += o.d[l];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    value -= o.value;
    for (int l = 0; l < kMaxDim; ++l) d[l] -= o.d[l];
    return *this;
  }
  Jet& operator*=(Complex c) {
    value = mul(value, c);
    for (auto& x : d) x = mul(x, c);
    return *this;
  }
  Jet operator-() const {
    Jet r = *this;
    r *= -1.0;
    return r;
  }

  /// Plain complex product, without the Annex G special-value handling.
  static Complex mul(Complex a, Complex b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, Complex c) { return a *= c; }
  friend Jet operator*(Complex c, Jet a) { return a *= c; }
  /// Product rule: d(fg) = f dg + g df.
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    r.value = mul(a.value, b.value);
    for (int l = 0; l < kMaxDim; ++l) r.d[l] = mul(a.value, b.d[l]) + mul(b.value, a.d[l]);
    return r;
  }
};

/// Weights (r, s) of the majorant norm. Both must be positive.
struct Weights {
  double r = 1.0;
  double s = 1.0;

  void validate() const;
  double weight(const MultiIndex& key) const;
};

class Series {
 public:
  using Term = std::pair<MultiIndex, Jet>;

  Series() = default;
  explicit Series(int n, int d_max = kDefaultMaxDegree, bool real_symmetric = true);

  /// Merges duplicate keys, drops exact zeros, sorts canonically. Terms with
  /// |m|_1 > d_max are rejected with DomainError.
  static Series from_terms(int n, std::vector<Term> terms, int d_max = kDefaultMaxDegree,
                           bool real_symmetric = true, double tail = 0.0);

  static Series constant(int n, Complex c, int d_max = kDefaultMaxDegree);
  static Series constant(int n, const Jet& c, int d_max = kDefaultMaxDegree);
  static Series monomial(int n, std::span<const int> k, std::span<const int> m, Complex c,
                         int d_max = kDefaultMaxDegree);
  /// I_j.
  static Series action(int n, int j, int d_max = kDefaultMaxDegree);
  /// a cos(k.theta) I^m and a sin(k.theta) I^m, stored as the two exponentials.
  static Series cosine(int n, std::span<const int> k, double a, std::span<const int> m = {},
                       int d_max = kDefaultMaxDegree);
  static Series sine(int n, std::span<const int> k, double a, std::span<const int> m = {},
                     int d_max = kDefaultMaxDegree);

  int dim() const { return n_; }
  int max_degree() const { return d_max_; }
  bool real_symmetric() const { return real_symmetric_; }
  double tail_estimate() const { return tail_; }

  std::span<const Term> terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const Jet* find(const MultiIndex& key) const;
  Jet coefficient(const MultiIndex& key) const;

  /// Largest |k|_1 and |m|_1 among stored terms (0 for the empty series).
  int fourier_degree() const;
  int action_degree() const;

  Series with_tail(double tail) const;
  Series with_real_symmetric(bool flag) const;

 private:
  int n_ = 0;
  int d_max_ = kDefaultMaxDegree;
  bool real_symmetric_ = true;
  double tail_ = 0.0;
  std::vector<Term> terms_;
};

/// Accumulates terms keyed by MultiIndex. Summation order per key follows
/// insertion order, so results are reproducible.
class SeriesAccumulator {
 public:
  explicit SeriesAccumulator(int n, int d_max = kDefaultMaxDegree);
  void add(const MultiIndex& key, const Jet& c);
  void add(const Series& f, Complex scale = 1.0);
  /// Adds weighted_norm of anything rejected for exceeding d_max.
  void add_tail(double t) { tail_ += t; }
  Series finish(bool real_symmetric, double extra_tail = 0.0);

 private:
  int n_;
  int d_max_;
  double tail_ = 0.0;
  std::unordered_map<MultiIndex, Jet, MultiIndexHash> map_;
};

Series operator+(const Series& a, const Series& b);
Series operator-(const Series& a, const Series& b);
Series operator-(const Series& a);
Series operator*(Complex c, const Series& a);
Series operator*(const Series& a, Complex c);
Series operator*(double c, const Series& a);

/// Sum |c_{k,m}| r^{|m|} e^{s|k|}.
double weighted_norm(const Series& f, double r, double s);
double weighted_norm(const Series& f, const Weights& w);
/// Same majorant applied to the parameter derivatives, sum_l |d_l c_{k,m}|.
double jet_norm(const Series& f, const Weights& w);

/// Product with action degree capped at f.max_degree(); the capped part is
/// valued at `reference` and added to the tail estimate.
Series multiply(const Series& f, const Series& g, const Weights& reference = {});

/// Keeps exactly the k = 0 coefficients.
Series angle_average(const Series& f);

struct Truncation {
  Series kept;
  Series dropped;
  double dropped_norm = 0.0;
};

/// Splits f into |k|_1 <= K and |m|_1 <= d against the rest, without touching
/// tail estimates.
Truncation split(const Series& f, long long K, int d, const Weights& w);

/// Sharp truncation. Result keeps |k|_1 <= K and |m|_1 <= d; its tail grows by
/// the exact majorant norm of what was removed.
std::pair<Series, double> truncate(const Series& f, long long K, int d, double r, double s);

/// Drops coefficients whose weighted contribution is below `tol`; their
/// total goes to the tail estimate.
Series prune(const Series& f, double tol, const Weights& w);

/// Re-expresses the coefficients after the parameter change
///   omega_old = center + shift + jacobian * (omega_new - center)
/// to first order: value += d . shift, d <- d * jacobian (jacobian is n x n
/// row-major).
Series reparameterize(const Series& f, std::span<const double> shift,
                      std::span<const double> jacobian);
Jet reparameterize(const Jet& c, int n, std::span<const double> shift,
                   std::span<const double> jacobian);

/// sum c I^m exp(i k.theta) at a point; `param_offset` (optional) evaluates
/// the coefficients at center + offset through their jets.
Complex evaluate(const Series& f, std::span<const Complex> I, std::span<const Complex> theta,
                 std::span<const double> param_offset = {});

struct PointGradient {
  Complex value{};
  std::array<Complex, kMaxDim> d_action{};
  std::array<Complex, kMaxDim> d_angle{};
};

PointGradient evaluate_gradient(const Series& f, std::span<const Complex> I,
                                std::span<const Complex> theta,
                                std::span<const double> param_offset = {});

/// Largest |c(-k,m) - conj(c(k,m))| over stored keys (values and jets).
double conjugate_symmetry_defect(const Series& f);

/// Only the I-independent part, i.e. f restricted to m = 0.
Series action_free_part(const Series& f);

/// Sum of |coefficient difference| weighted at w over the union of keys.
double weighted_distance(const Series& a, const Series& b, const Weights& w);

}  // namespace kam
