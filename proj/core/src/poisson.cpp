#include "kam/poisson.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "kam/errors.hpp"

namespace kam {

namespace {

constexpr Complex kI(0.0, 1.0);

}  // namespace

Series derivative_angle(const Series& f, int j) {
  if (j < 0 || j >= f.dim()) throw DomainError("derivative_angle: index out of range");
  std::vector<Series::Term> out;
  out.reserve(f.size());
  for (const auto& [key, c] : f.terms()) {
    if (key.k[j] == 0) continue;
    out.emplace_back(key, c * (kI * static_cast<double>(key.k[j])));
  }
  return Series::from_terms(f.dim(), std::move(out), f.max_degree(), f.real_symmetric());
}

Series derivative_action(const Series& f, int j) {
  if (j < 0 || j >= f.dim()) throw DomainError("derivative_action: index out of range");
  std::vector<Series::Term> out;
  out.reserve(f.size());
  for (const auto& [key, c] : f.terms()) {
    if (key.m[j] == 0) continue;
    MultiIndex reduced = key;
    reduced.m[j] = static_cast<std::uint8_t>(key.m[j] - 1);
    out.emplace_back(reduced, c * static_cast<double>(key.m[j]));
  }
  return Series::from_terms(f.dim(), std::move(out), f.max_degree(), f.real_symmetric());
}

namespace {

// First nonzero Fourier entry positive, or k = 0.
bool upper_half(const std::array<int, kMaxDim>& k, int n) {
  for (int j = 0; j < n; ++j) {
    if (k[j] != 0) return k[j] > 0;
  }
  return true;
}

struct PackedTerm {
  std::array<int, kMaxDim> k{};
  std::array<int, kMaxDim> m{};
  Jet c;
};

std::vector<PackedTerm> pack(const Series& f) {
  std::vector<PackedTerm> out;
  out.reserve(f.size());
  for (const auto& [key, c] : f.terms()) {
    PackedTerm t;
    for (int j = 0; j < f.dim(); ++j) {
      t.k[j] = key.k[j];
      t.m[j] = key.m[j];
    }
    t.c = c;
    out.push_back(t);
  }
  return out;
}

// Dense accumulator over the box of reachable Fourier indices, one slab per
// action exponent. Falls back to the hash accumulator when the box is large.
class BracketSink {
 public:
  BracketSink(int n, int d_max, const std::vector<PackedTerm>& f,
              const std::vector<PackedTerm>& g)
      : n_(n), d_max_(d_max), hash_(n, d_max) {
    std::size_t cells = 1;
    for (int j = 0; j < n; ++j) {
      int flo = 0, fhi = 0, glo = 0, ghi = 0;
      for (const auto& t : f) {
        flo = std::min(flo, t.k[j]);
        fhi = std::max(fhi, t.k[j]);
      }
      for (const auto& t : g) {
        glo = std::min(glo, t.k[j]);
        ghi = std::max(ghi, t.k[j]);
      }
      lo_[j] = flo + glo;
      span_[j] = fhi + ghi - lo_[j] + 1;
      stride_[j] = cells;
      cells *= static_cast<std::size_t>(span_[j]);
    }
    cells_ = cells;
    m_codes_ = 1;
    for (int j = 0; j < n; ++j) m_codes_ *= static_cast<std::size_t>(d_max + 1);
    dense_ = cells_ <= kDenseCells;
    if (dense_) slabs_.resize(m_codes_);
  }

  void add(const std::array<int, kMaxDim>& k, const std::array<int, kMaxDim>& m, const Jet& c) {
    if (!dense_) {
      MultiIndex key;
      for (int j = 0; j < n_; ++j) {
        key.k[j] = static_cast<std::int16_t>(k[j]);
        key.m[j] = static_cast<std::uint8_t>(m[j]);
      }
      hash_.add(key, c);
      return;
    }
    std::size_t code = 0;
    std::size_t mul = 1;
    for (int j = 0; j < n_; ++j) {
      code += static_cast<std::size_t>(m[j]) * mul;
      mul *= static_cast<std::size_t>(d_max_ + 1);
    }
    auto& slab = slabs_[code];
    if (slab.values.empty()) {
      slab.values.resize(cells_);
      slab.touched.assign(cells_, 0);
    }
    std::size_t cell = 0;
    for (int j = 0; j < n_; ++j) cell += static_cast<std::size_t>(k[j] - lo_[j]) * stride_[j];
    if (!slab.touched[cell]) {
      slab.touched[cell] = 1;
      slab.order.push_back(cell);
      slab.values[cell] = c;
    } else {
      slab.values[cell] += c;
    }
  }

  // Collects the upper-half terms, mirrored by conjugation when asked.
  std::vector<Series::Term> terms(bool mirror) {
    std::vector<Series::Term> out;
    const auto emit = [&](const MultiIndex& key, const Jet& c) {
      if (c.is_zero()) return;
      out.emplace_back(key, c);
      if (mirror && !key.is_average()) out.emplace_back(key.conjugate(), c.conj());
    };
    if (!dense_) {
      Series tmp = hash_.finish(false);
      for (const auto& [key, c] : tmp.terms()) emit(key, c);
      return out;
    }
    for (std::size_t code = 0; code < m_codes_; ++code) {
      auto& slab = slabs_[code];
      if (slab.values.empty()) continue;
      MultiIndex base;
      std::size_t rest = code;
      for (int j = 0; j < n_; ++j) {
        base.m[j] = static_cast<std::uint8_t>(rest % (d_max_ + 1));
        rest /= (d_max_ + 1);
      }
      for (std::size_t cell : slab.order) {
        MultiIndex key = base;
        std::size_t r = cell;
        for (int j = 0; j < n_; ++j) {
          key.k[j] = static_cast<std::int16_t>(lo_[j] + static_cast<int>(r % span_[j]));
          r /= span_[j];
        }
        emit(key, slab.values[cell]);
      }
    }
    return out;
  }

 private:
  static constexpr std::size_t kDenseCells = 1u << 18;
  struct Slab {
    std::vector<Jet> values;
    std::vector<unsigned char> touched;
    std::vector<std::size_t> order;
  };
  int n_;
  int d_max_;
  std::array<int, kMaxDim> lo_{};
  std::array<int, kMaxDim> span_{};
  std::array<std::size_t, kMaxDim> stride_{};
  std::size_t cells_ = 0;
  std::size_t m_codes_ = 0;
  bool dense_ = false;
  std::vector<Slab> slabs_;
  SeriesAccumulator hash_;
};

}  // namespace

Series poisson_bracket(const Series& f, const Series& g, const Weights& reference) {
  if (f.dim() != g.dim()) {
    throw DimensionMismatch("poisson_bracket: dimension mismatch (" + std::to_string(f.dim()) +
                            " vs " + std::to_string(g.dim()) + ")");
  }
  reference.validate();
  const int n = f.dim();
  const int d_max = std::max(f.max_degree(), g.max_degree());
  const bool real = f.real_symmetric() && g.real_symmetric();
  const auto pf = pack(f);
  const auto pg = pack(g);
  BracketSink sink(n, d_max, pf, pg);
  double overflow = 0.0;
  std::array<int, kMaxDim> k{};
  std::array<int, kMaxDim> m{};
  for (const auto& a : pf) {
    for (const auto& b : pg) {
      int degree = -1;
      for (int j = 0; j < n; ++j) {
        k[j] = a.k[j] + b.k[j];
        m[j] = a.m[j] + b.m[j];
        degree += m[j];
      }
      // With real symmetry only the upper half is formed; the rest is its conjugate.
      if (real && !upper_half(k, n)) continue;
      Jet product;
      bool have_product = false;
      for (int j = 0; j < n; ++j) {
        // (i kf_j) mg_j - mf_j (i kg_j)
        const double factor = static_cast<double>(a.k[j]) * b.m[j] -
                              static_cast<double>(a.m[j]) * b.k[j];
        if (factor == 0.0) continue;
        if (!have_product) {
          product = a.c * b.c;
          have_product = true;
        }
        // Multiplying by i factor swaps real and imaginary parts.
        Jet c;
        c.value = Complex(-factor * product.value.imag(), factor * product.value.real());
        for (int l = 0; l < n; ++l) {
          c.d[l] = Complex(-factor * product.d[l].imag(), factor * product.d[l].real());
        }
        m[j] -= 1;
        if (degree > d_max) {
          MultiIndex key;
          for (int l = 0; l < n; ++l) {
            key.k[l] = static_cast<std::int16_t>(k[l]);
            key.m[l] = static_cast<std::uint8_t>(m[l]);
          }
          const double w = reference.weight(key);
          overflow += std::abs(c.value) * w;
          if (real && !key.is_average()) overflow += std::abs(c.value) * w;
        } else {
          sink.add(k, m, c);
        }
        m[j] += 1;
      }
    }
  }
  return Series::from_terms(n, sink.terms(real), d_max, real, overflow);
}

LieResult lie_series(const Series& G, const Series& F,
                     const std::function<double(int)>& coefficient, const LieOptions& opt) {
  opt.weights.validate();
  if (G.dim() != F.dim()) throw DimensionMismatch("lie_series: dimension mismatch");

  SeriesAccumulator acc(G.dim(), std::max(G.max_degree(), F.max_degree()));
  LieResult result;
  const double c0 = coefficient(0);
  if (c0 != 0.0) acc.add(G, c0);
  double pruned = 0.0;
  double last_norm = weighted_norm(G, opt.weights) * std::abs(c0);
  double ratio = 0.0;
  int growing = 0;
  int nonzero = c0 != 0.0 && !G.empty() ? 1 : 0;

  Series current = G;
  if (F.empty() || G.empty()) {
    result.value = acc.finish(G.real_symmetric() && F.real_symmetric());
    result.terms = nonzero;
    return result;
  }

  int j = 1;
  for (; j <= opt.max_terms; ++j) {
    const double cj = coefficient(j);
    current = poisson_bracket(current, F, opt.weights).with_tail(0.0);
    if (opt.prune_tol > 0.0 && cj != 0.0) {
      current = prune(current, opt.prune_tol / std::abs(cj), opt.weights);
      pruned += std::abs(cj) * current.tail_estimate();
      current = current.with_tail(0.0);
    }
    if (current.empty()) {
      ratio = 0.0;
      last_norm = 0.0;
      break;
    }
    const double norm = weighted_norm(current, opt.weights) * std::abs(cj);
    if (cj != 0.0) {
      acc.add(current, cj);
      ++nonzero;
    }
    if (j >= 2 && last_norm > 0.0) {
      ratio = norm / last_norm;
      if (ratio >= 1.0 && norm > opt.tail_tol) {
        ++growing;
        if (j == 2 || growing >= 3) {
          std::ostringstream msg;
          msg.precision(6);
          msg << "lie_series: non-contracting bracket gain, term " << j - 1 << " norm "
              << last_norm << " -> term " << j << " norm " << norm << " (ratio " << ratio
              << ") at r=" << opt.weights.r << ", s=" << opt.weights.s;
          throw DivergenceError(msg.str());
        }
      } else {
        growing = 0;
      }
    }
    last_norm = norm;
    if (norm <= opt.tail_tol) break;
  }
  if (j > opt.max_terms) {
    std::ostringstream msg;
    msg << "lie_series: tail tolerance " << opt.tail_tol << " not reached after "
        << opt.max_terms << " terms (last term norm " << last_norm << ")";
    throw DivergenceError(msg.str());
  }
  result.ratio = ratio;
  result.tail_bound = ratio < 1.0 ? last_norm * ratio / (1.0 - ratio) : last_norm;
  result.terms = nonzero;
  result.value = acc.finish(G.real_symmetric() && F.real_symmetric(),
                            pruned + result.tail_bound);
  return result;
}

LieResult lie_transform(const Series& H, const Series& F, const LieOptions& opt) {
  const double t = opt.time;
  return lie_series(H, F,
                    [t](int j) {
                      double c = 1.0;
                      for (int p = 1; p <= j; ++p) c *= t / p;
                      return c;
                    },
                    opt);
}

}  // namespace kam
