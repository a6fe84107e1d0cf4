#include "kam/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <string>

#include "kam/errors.hpp"

namespace kam {

namespace {

void check_dim(int n) {
  if (n < 1 || n > kMaxDim) {
    throw DomainError("series dimension must lie in [1, " + std::to_string(kMaxDim) +
                      "], got " + std::to_string(n));
  }
}

void check_same_dim(const Series& a, const Series& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw DimensionMismatch(std::string(op) + ": dimension mismatch (" +
                            std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
}

// Powers r^j and e^{s j}, grown lazily.
class WeightTable {
 public:
  explicit WeightTable(const Weights& w) : w_(w) {}
  double operator()(const MultiIndex& key) {
    return rpow(key.action_degree()) * spow(key.fourier_degree());
  }

 private:
  double rpow(int j) {
    while (static_cast<int>(r_.size()) <= j) {
      r_.push_back(r_.empty() ? 1.0 : r_.back() * w_.r);
    }
    return r_[j];
  }
  double spow(int j) {
    while (static_cast<int>(s_.size()) <= j) {
      s_.push_back(std::exp(w_.s * static_cast<double>(s_.size())));
    }
    return s_[j];
  }
  Weights w_;
  std::vector<double> r_;
  std::vector<double> s_;
};

}  // namespace

int MultiIndex::fourier_degree() const {
  int d = 0;
  for (auto v : k) d += std::abs(static_cast<int>(v));
  return d;
}

int MultiIndex::action_degree() const {
  int d = 0;
  for (auto v : m) d += v;
  return d;
}

bool MultiIndex::is_average() const {
  return std::all_of(k.begin(), k.end(), [](auto v) { return v == 0; });
}

MultiIndex MultiIndex::conjugate() const {
  MultiIndex c = *this;
  for (auto& v : c.k) v = static_cast<std::int16_t>(-v);
  return c;
}

bool canonical_less(const MultiIndex& a, const MultiIndex& b) {
  const int da = a.fourier_degree();
  const int db = b.fourier_degree();
  if (da != db) return da < db;
  if (a.k != b.k) return a.k < b.k;
  return a.m < b.m;
}

std::size_t MultiIndexHash::operator()(const MultiIndex& key) const noexcept {
  std::uint64_t h = 0;
  for (int j = 0; j < kMaxDim; ++j) {
    h = (h << 12) ^ static_cast<std::uint16_t>(key.k[j]);
    h = (h << 4) ^ key.m[j];
  }
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return static_cast<std::size_t>(h ^ (h >> 31));
}

MultiIndex make_index(std::span<const int> k, std::span<const int> m) {
  if (k.size() > static_cast<std::size_t>(kMaxDim) ||
      m.size() > static_cast<std::size_t>(kMaxDim)) {
    throw DomainError("multi-index longer than kMaxDim");
  }
  MultiIndex key;
  for (std::size_t j = 0; j < k.size(); ++j) {
    if (std::abs(k[j]) > std::numeric_limits<std::int16_t>::max()) {
      throw DomainError("Fourier index out of range");
    }
    key.k[j] = static_cast<std::int16_t>(k[j]);
  }
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j] < 0 || m[j] > 255) throw DomainError("action exponent out of range");
    key.m[j] = static_cast<std::uint8_t>(m[j]);
  }
  return key;
}

// ---------------------------------------------------------------- Jet

bool Jet::is_zero() const {
  if (value != Complex{}) return false;
  return std::all_of(d.begin(), d.end(), [](const Complex& c) { return c == Complex{}; });
}

Jet Jet::conj() const {
  Jet c;
  c.value = std::conj(value);
  for (int l = 0; l < kMaxDim; ++l) c.d[l] = std::conj(d[l]);
  return c;
}

double Jet::derivative_abs_sum() const {
  double s = 0.0;
  for (const auto& c : d) s += std::abs(c);
  return s;
}

// ---------------------------------------------------------------- Weights

void Weights::validate() const {
  if (!(r > 0.0) || !(s > 0.0) || !std::isfinite(r) || !std::isfinite(s)) {
    throw DomainError("weights require r > 0 and s > 0 (got r=" + std::to_string(r) +
                      ", s=" + std::to_string(s) + ")");
  }
}

double Weights::weight(const MultiIndex& key) const {
  return std::pow(r, key.action_degree()) * std::exp(s * key.fourier_degree());
}

// ---------------------------------------------------------------- Series

Series::Series(int n, int d_max, bool real_symmetric)
    : n_(n), d_max_(d_max), real_symmetric_(real_symmetric) {
  check_dim(n);
  if (d_max < 0 || d_max > 255) throw DomainError("d_max must lie in [0, 255]");
}

Series Series::from_terms(int n, std::vector<Term> terms, int d_max, bool real_symmetric,
                          double tail) {
  Series out(n, d_max, real_symmetric);
  for (const auto& [key, c] : terms) {
    for (int j = n; j < kMaxDim; ++j) {
      if (key.k[j] != 0 || key.m[j] != 0) {
        throw DomainError("multi-index has nonzero entries beyond dimension " +
                          std::to_string(n));
      }
    }
    if (key.action_degree() > d_max) {
      throw DomainError("term of action degree " + std::to_string(key.action_degree()) +
                        " exceeds d_max=" + std::to_string(d_max));
    }
  }
  std::stable_sort(terms.begin(), terms.end(),
                   [](const Term& a, const Term& b) { return canonical_less(a.first, b.first); });
  for (auto& t : terms) {
    if (!out.terms_.empty() && out.terms_.back().first == t.first) {
      out.terms_.back().second += t.second;
    } else {
      out.terms_.push_back(std::move(t));
    }
  }
  std::erase_if(out.terms_, [](const Term& t) { return t.second.is_zero(); });
  out.tail_ = tail;
  return out;
}

Series Series::constant(int n, Complex c, int d_max) { return constant(n, Jet(c), d_max); }

Series Series::constant(int n, const Jet& c, int d_max) {
  return from_terms(n, {{MultiIndex{}, c}}, d_max, c.value.imag() == 0.0);
}

Series Series::monomial(int n, std::span<const int> k, std::span<const int> m, Complex c,
                        int d_max) {
  const MultiIndex key = make_index(k, m);
  const bool real = key.is_average() && c.imag() == 0.0;
  return from_terms(n, {{key, Jet(c)}}, d_max, real);
}

Series Series::action(int n, int j, int d_max) {
  if (j < 0 || j >= n) throw DomainError("action index out of range");
  MultiIndex key;
  key.m[j] = 1;
  return from_terms(n, {{key, Jet(1.0)}}, d_max, true);
}

Series Series::cosine(int n, std::span<const int> k, double a, std::span<const int> m,
                      int d_max) {
  const MultiIndex key = make_index(k, m);
  if (key.is_average()) return from_terms(n, {{key, Jet(a)}}, d_max, true);
  return from_terms(n, {{key, Jet(0.5 * a)}, {key.conjugate(), Jet(0.5 * a)}}, d_max, true);
}

Series Series::sine(int n, std::span<const int> k, double a, std::span<const int> m,
                    int d_max) {
  const MultiIndex key = make_index(k, m);
  if (key.is_average()) return Series(n, d_max, true);
  // sin x = (e^{ix} - e^{-ix}) / 2i
  const Complex c = a / Complex(0.0, 2.0);
  return from_terms(n, {{key, Jet(c)}, {key.conjugate(), Jet(-c)}}, d_max, true);
}

const Jet* Series::find(const MultiIndex& key) const {
  auto it = std::lower_bound(terms_.begin(), terms_.end(), key,
                             [](const Term& t, const MultiIndex& k) {
                               return canonical_less(t.first, k);
                             });
  if (it != terms_.end() && it->first == key) return &it->second;
  return nullptr;
}

Jet Series::coefficient(const MultiIndex& key) const {
  const Jet* c = find(key);
  return c ? *c : Jet{};
}

int Series::fourier_degree() const {
  int d = 0;
  for (const auto& t : terms_) d = std::max(d, t.first.fourier_degree());
  return d;
}

int Series::action_degree() const {
  int d = 0;
  for (const auto& t : terms_) d = std::max(d, t.first.action_degree());
  return d;
}

Series Series::with_tail(double tail) const {
  Series s = *this;
  s.tail_ = tail;
  return s;
}

Series Series::with_real_symmetric(bool flag) const {
  Series s = *this;
  s.real_symmetric_ = flag;
  return s;
}

// ---------------------------------------------------------------- accumulator

SeriesAccumulator::SeriesAccumulator(int n, int d_max) : n_(n), d_max_(d_max) {
  check_dim(n);
}

void SeriesAccumulator::add(const MultiIndex& key, const Jet& c) {
  auto [it, inserted] = map_.try_emplace(key, c);
  if (!inserted) it->second += c;
}

void SeriesAccumulator::add(const Series& f, Complex scale) {
  if (f.dim() != n_) throw DimensionMismatch("accumulator: dimension mismatch");
  for (const auto& [key, c] : f.terms()) {
    if (key.action_degree() > d_max_) {
      throw DomainError("accumulator: term exceeds d_max");
    }
    add(key, c * scale);
  }
  tail_ += std::abs(scale) * f.tail_estimate();
}

Series SeriesAccumulator::finish(bool real_symmetric, double extra_tail) {
  std::vector<Series::Term> terms;
  terms.reserve(map_.size());
  for (auto& [key, c] : map_) {
    if (!c.is_zero()) terms.emplace_back(key, c);
  }
  map_.clear();
  std::sort(terms.begin(), terms.end(), [](const Series::Term& a, const Series::Term& b) {
    return canonical_less(a.first, b.first);
  });
  // keys are unique here, so from_terms only validates
  return Series::from_terms(n_, std::move(terms), d_max_, real_symmetric, tail_ + extra_tail);
}

// ---------------------------------------------------------------- linear ops

namespace {

Series combine(const Series& a, const Series& b, Complex sb) {
  check_same_dim(a, b, "add");
  const int d_max = std::max(a.max_degree(), b.max_degree());
  std::vector<Series::Term> out;
  out.reserve(a.size() + b.size());
  auto ia = a.terms().begin();
  auto ib = b.terms().begin();
  while (ia != a.terms().end() || ib != b.terms().end()) {
    if (ib == b.terms().end() ||
        (ia != a.terms().end() && canonical_less(ia->first, ib->first))) {
      out.push_back(*ia++);
    } else if (ia == a.terms().end() || canonical_less(ib->first, ia->first)) {
      out.emplace_back(ib->first, ib->second * sb);
      ++ib;
    } else {
      Jet c = ia->second + ib->second * sb;
      if (!c.is_zero()) out.emplace_back(ia->first, c);
      ++ia;
      ++ib;
    }
  }
  const bool real = a.real_symmetric() && b.real_symmetric() && sb.imag() == 0.0;
  return Series::from_terms(a.dim(), std::move(out), d_max, real,
                            a.tail_estimate() + std::abs(sb) * b.tail_estimate());
}

}  // namespace

Series operator+(const Series& a, const Series& b) { return combine(a, b, 1.0); }
Series operator-(const Series& a, const Series& b) { return combine(a, b, -1.0); }

Series operator*(Complex c, const Series& a) {
  std::vector<Series::Term> out;
  out.reserve(a.size());
  if (c != Complex{}) {
    for (const auto& [key, v] : a.terms()) out.emplace_back(key, v * c);
  }
  return Series::from_terms(a.dim(), std::move(out), a.max_degree(),
                            a.real_symmetric() && c.imag() == 0.0,
                            std::abs(c) * a.tail_estimate());
}

Series operator*(const Series& a, Complex c) { return c * a; }
Series operator*(double c, const Series& a) { return Complex(c) * a; }
Series operator-(const Series& a) { return Complex(-1.0) * a; }

// ---------------------------------------------------------------- norms

double weighted_norm(const Series& f, const Weights& w) {
  w.validate();
  WeightTable table(w);
  double sum = 0.0;
  for (const auto& [key, c] : f.terms()) sum += std::abs(c.value) * table(key);
  return sum;
}

double weighted_norm(const Series& f, double r, double s) {
  return weighted_norm(f, Weights{r, s});
}

double jet_norm(const Series& f, const Weights& w) {
  w.validate();
  WeightTable table(w);
  double sum = 0.0;
  for (const auto& [key, c] : f.terms()) sum += c.derivative_abs_sum() * table(key);
  return sum;
}

// ---------------------------------------------------------------- products

Series multiply(const Series& f, const Series& g, const Weights& reference) {
  check_same_dim(f, g, "multiply");
  reference.validate();
  const int n = f.dim();
  const int d_max = std::max(f.max_degree(), g.max_degree());
  SeriesAccumulator acc(n, d_max);
  WeightTable table(reference);
  double overflow = 0.0;
  for (const auto& [kf, cf] : f.terms()) {
    for (const auto& [kg, cg] : g.terms()) {
      MultiIndex key;
      for (int j = 0; j < n; ++j) {
        key.k[j] = static_cast<std::int16_t>(kf.k[j] + kg.k[j]);
        key.m[j] = static_cast<std::uint8_t>(kf.m[j] + kg.m[j]);
      }
      const Jet c = cf * cg;
      if (key.action_degree() > d_max) {
        overflow += std::abs(c.value) * table(key);
        continue;
      }
      acc.add(key, c);
    }
  }
  const double nf = weighted_norm(f, reference);
  const double ng = weighted_norm(g, reference);
  const double tail = nf * g.tail_estimate() + ng * f.tail_estimate() +
                      f.tail_estimate() * g.tail_estimate() + overflow;
  return acc.finish(f.real_symmetric() && g.real_symmetric(), tail);
}

Series angle_average(const Series& f) {
  std::vector<Series::Term> out;
  for (const auto& t : f.terms()) {
    if (t.first.is_average()) out.push_back(t);
  }
  return Series::from_terms(f.dim(), std::move(out), f.max_degree(), f.real_symmetric());
}

Truncation split(const Series& f, long long K, int d, const Weights& w) {
  if (K < 0 || d < 0) throw DomainError("truncation cutoffs must be nonnegative");
  w.validate();
  WeightTable table(w);
  std::vector<Series::Term> kept;
  std::vector<Series::Term> dropped;
  double norm = 0.0;
  for (const auto& t : f.terms()) {
    if (t.first.fourier_degree() <= K && t.first.action_degree() <= d) {
      kept.push_back(t);
    } else {
      norm += std::abs(t.second.value) * table(t.first);
      dropped.push_back(t);
    }
  }
  return Truncation{
      Series::from_terms(f.dim(), std::move(kept), f.max_degree(), f.real_symmetric()),
      Series::from_terms(f.dim(), std::move(dropped), f.max_degree(), f.real_symmetric()),
      norm};
}

std::pair<Series, double> truncate(const Series& f, long long K, int d, double r, double s) {
  Truncation t = split(f, K, d, Weights{r, s});
  return {t.kept.with_tail(f.tail_estimate() + t.dropped_norm), t.dropped_norm};
}

Series prune(const Series& f, double tol, const Weights& w) {
  if (tol <= 0.0) return f;
  w.validate();
  WeightTable table(w);
  std::vector<Series::Term> kept;
  kept.reserve(f.size());
  double dropped = 0.0;
  for (const auto& t : f.terms()) {
    const double wt = table(t.first);
    const double v = std::abs(t.second.value) * wt;
    if (v < tol && t.second.derivative_abs_sum() * wt < tol) {
      dropped += v;
    } else {
      kept.push_back(t);
    }
  }
  return Series::from_terms(f.dim(), std::move(kept), f.max_degree(), f.real_symmetric(),
                            f.tail_estimate() + dropped);
}

// ---------------------------------------------------------------- parameters

Jet reparameterize(const Jet& c, int n, std::span<const double> shift,
                   std::span<const double> jacobian) {
  Jet out;
  out.value = c.value;
  for (int l = 0; l < n; ++l) out.value += c.d[l] * shift[l];
  for (int lp = 0; lp < n; ++lp) {
    Complex acc{};
    for (int l = 0; l < n; ++l) acc += c.d[l] * jacobian[l * n + lp];
    out.d[lp] = acc;
  }
  return out;
}

Series reparameterize(const Series& f, std::span<const double> shift,
                      std::span<const double> jacobian) {
  const int n = f.dim();
  if (shift.size() != static_cast<std::size_t>(n) ||
      jacobian.size() != static_cast<std::size_t>(n * n)) {
    throw DimensionMismatch("reparameterize: shift/jacobian size mismatch");
  }
  std::vector<Series::Term> out;
  out.reserve(f.size());
  for (const auto& [key, c] : f.terms()) out.emplace_back(key, reparameterize(c, n, shift, jacobian));
  return Series::from_terms(n, std::move(out), f.max_degree(), f.real_symmetric(),
                            f.tail_estimate());
}

// ---------------------------------------------------------------- evaluation

namespace {

struct PointTables {
  int n = 0;
  int kmax = 0;
  int dmax = 0;
  // exp(i k theta_j) for k in [-kmax, kmax], stored at index k + kmax
  std::array<std::vector<Complex>, kMaxDim> fourier;
  std::array<std::vector<Complex>, kMaxDim> powers;

  PointTables(const Series& f, std::span<const Complex> I, std::span<const Complex> theta) {
    n = f.dim();
    if (I.size() < static_cast<std::size_t>(n) || theta.size() < static_cast<std::size_t>(n)) {
      throw DimensionMismatch("evaluate: point has fewer coordinates than the series");
    }
    for (const auto& t : f.terms()) {
      for (int j = 0; j < n; ++j) {
        kmax = std::max(kmax, std::abs(static_cast<int>(t.first.k[j])));
        dmax = std::max(dmax, static_cast<int>(t.first.m[j]));
      }
    }
    for (int j = 0; j < n; ++j) {
      auto& tab = fourier[j];
      tab.assign(2 * kmax + 1, Complex(1.0));
      const Complex z = std::exp(Complex(0.0, 1.0) * theta[j]);
      const Complex zi = 1.0 / z;
      for (int k = 1; k <= kmax; ++k) {
        tab[kmax + k] = tab[kmax + k - 1] * z;
        tab[kmax - k] = tab[kmax - k + 1] * zi;
      }
      auto& pw = powers[j];
      pw.assign(dmax + 1, Complex(1.0));
      for (int p = 1; p <= dmax; ++p) pw[p] = pw[p - 1] * I[j];
    }
  }
};

Complex coefficient_at(const Jet& c, int n, std::span<const double> offset) {
  Complex v = c.value;
  if (!offset.empty()) {
    for (int l = 0; l < n; ++l) v += c.d[l] * offset[l];
  }
  return v;
}

}  // namespace

Complex evaluate(const Series& f, std::span<const Complex> I, std::span<const Complex> theta,
                 std::span<const double> param_offset) {
  if (f.empty()) return {};
  PointTables tab(f, I, theta);
  const int n = f.dim();
  Complex sum{};
  for (const auto& [key, c] : f.terms()) {
    Complex term = coefficient_at(c, n, param_offset);
    for (int j = 0; j < n; ++j) {
      term *= tab.fourier[j][key.k[j] + tab.kmax] * tab.powers[j][key.m[j]];
    }
    sum += term;
  }
  return sum;
}

PointGradient evaluate_gradient(const Series& f, std::span<const Complex> I,
                                std::span<const Complex> theta,
                                std::span<const double> param_offset) {
  PointGradient g;
  if (f.empty()) return g;
  PointTables tab(f, I, theta);
  const int n = f.dim();
  const Complex iu(0.0, 1.0);
  for (const auto& [key, c] : f.terms()) {
    const Complex coeff = coefficient_at(c, n, param_offset);
    Complex fourier = 1.0;
    for (int j = 0; j < n; ++j) fourier *= tab.fourier[j][key.k[j] + tab.kmax];
    Complex mono = 1.0;
    for (int j = 0; j < n; ++j) mono *= tab.powers[j][key.m[j]];
    const Complex term = coeff * fourier * mono;
    g.value += term;
    for (int j = 0; j < n; ++j) {
      g.d_angle[j] += iu * static_cast<double>(key.k[j]) * term;
      if (key.m[j] > 0) {
        Complex reduced = 1.0;
        for (int l = 0; l < n; ++l) {
          reduced *= tab.powers[l][l == j ? key.m[l] - 1 : key.m[l]];
        }
        g.d_action[j] += coeff * fourier * static_cast<double>(key.m[j]) * reduced;
      }
    }
  }
  return g;
}

double conjugate_symmetry_defect(const Series& f) {
  double worst = 0.0;
  for (const auto& [key, c] : f.terms()) {
    const Jet partner = f.coefficient(key.conjugate()).conj();
    Jet diff = c - partner;
    worst = std::max(worst, std::abs(diff.value) + diff.derivative_abs_sum());
  }
  return worst;
}

Series action_free_part(const Series& f) {
  std::vector<Series::Term> out;
  for (const auto& t : f.terms()) {
    if (t.first.action_degree() == 0) out.push_back(t);
  }
  return Series::from_terms(f.dim(), std::move(out), f.max_degree(), f.real_symmetric());
}

double weighted_distance(const Series& a, const Series& b, const Weights& w) {
  return weighted_norm(a - b, w);
}

}  // namespace kam
