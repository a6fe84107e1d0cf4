#include "kam/embedding.hpp"

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>

#include "kam/errors.hpp"
#include "kam/poisson.hpp"

namespace kam {

namespace {

using State = std::array<double, 2 * kMaxDim>;

// Value-only copy of a series laid out for repeated evaluation at real points.
struct CompactSeries {
  struct Term {
    std::array<int, kMaxDim> k{};
    std::array<int, kMaxDim> m{};
    Complex c;
  };
  int n = 0;
  int kmax = 0;
  int dmax = 0;
  std::vector<Term> terms;

  explicit CompactSeries(const Series& f) : n(f.dim()) {
    terms.reserve(f.size());
    for (const auto& [key, c] : f.terms()) {
      Term t;
      for (int j = 0; j < n; ++j) {
        t.k[j] = key.k[j];
        t.m[j] = key.m[j];
        kmax = std::max(kmax, std::abs(t.k[j]));
        dmax = std::max(dmax, t.m[j]);
      }
      t.c = c.value;
      terms.push_back(t);
    }
  }

  // Bound on the sup of the vector field near I = 0.
  double field_bound() const {
    double b = 0.0;
    for (const auto& t : terms) {
      int weight = 0;
      for (int j = 0; j < n; ++j) weight += std::abs(t.k[j]) + t.m[j];
      b += std::abs(t.c) * std::max(1, weight);
    }
    return b;
  }

  // Hamiltonian vector field (-dF/dtheta, dF/dI) at the real point
  // (I, theta0 + delta), with x = (I, delta).
  void field(const State& x, const State& base, State& dx) const {
    std::array<std::vector<Complex>, kMaxDim> fourier;
    std::array<std::vector<double>, kMaxDim> powers;
    for (int j = 0; j < n; ++j) {
      auto& tab = fourier[j];
      tab.assign(2 * kmax + 1, Complex(1.0));
      const Complex z = std::polar(1.0, base[n + j] + x[n + j]);
      const Complex zi = std::conj(z);
      for (int k = 1; k <= kmax; ++k) {
        tab[kmax + k] = tab[kmax + k - 1] * z;
        tab[kmax - k] = tab[kmax - k + 1] * zi;
      }
      auto& pw = powers[j];
      pw.assign(dmax + 1, 1.0);
      for (int p = 1; p <= dmax; ++p) pw[p] = pw[p - 1] * x[j];
    }
    std::array<double, kMaxDim> d_angle{};
    std::array<double, kMaxDim> d_action{};
    for (const auto& t : terms) {
      Complex e = t.c;
      for (int j = 0; j < n; ++j) e *= fourier[j][t.k[j] + kmax];
      double mono = 1.0;
      for (int j = 0; j < n; ++j) mono *= powers[j][t.m[j]];
      // Re(i k e I^m) = -k Im(e) I^m
      for (int j = 0; j < n; ++j) {
        d_angle[j] -= t.k[j] * e.imag() * mono;
        if (t.m[j] > 0) {
          double reduced = 1.0;
          for (int l = 0; l < n; ++l) reduced *= powers[l][l == j ? t.m[l] - 1 : t.m[l]];
          d_action[j] += t.m[j] * e.real() * reduced;
        }
      }
    }
    dx.fill(0.0);
    for (int j = 0; j < n; ++j) {
      dx[j] = -d_angle[j];
      dx[n + j] = d_action[j];
    }
  }
};

template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int workers = worker_count(count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::size_t ipow(int base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

// Multi-index of grid point `flat`, first coordinate fastest.
std::array<int, kMaxDim> unflatten(std::size_t flat, int n, int G) {
  std::array<int, kMaxDim> idx{};
  for (int j = 0; j < n; ++j) {
    idx[j] = static_cast<int>(flat % G);
    flat /= G;
  }
  return idx;
}

// Separable forward DFT of real samples; returns a theta-only series with
// exactly conjugate-symmetric coefficients, Nyquist modes omitted.
Series to_fourier(const std::vector<double>& samples, int n, int G, double floor) {
  const std::size_t total = samples.size();
  std::vector<Complex> data(samples.begin(), samples.end());
  std::vector<Complex> roots(G);
  for (int p = 0; p < G; ++p) roots[p] = std::polar(1.0, -2.0 * std::numbers::pi * p / G);
  std::vector<Complex> line(G);
  std::size_t stride = 1;
  for (int axis = 0; axis < n; ++axis) {
    for (std::size_t base = 0; base < total; ++base) {
      if ((base / stride) % G != 0) continue;
      for (int p = 0; p < G; ++p) line[p] = data[base + p * stride];
      for (int k = 0; k < G; ++k) {
        Complex acc{};
        for (int p = 0; p < G; ++p) acc += line[p] * roots[(static_cast<long>(k) * p) % G];
        data[base + k * stride] = acc / static_cast<double>(G);
      }
    }
    stride *= G;
  }
  const int half = G / 2;
  std::vector<Series::Term> terms;
  for (std::size_t flat = 0; flat < total; ++flat) {
    const auto idx = unflatten(flat, n, G);
    std::array<int, kMaxDim> k{};
    bool nyquist = false;
    for (int j = 0; j < n; ++j) {
      k[j] = idx[j] <= half ? idx[j] : idx[j] - G;
      if (idx[j] == half) nyquist = true;
    }
    if (nyquist) continue;
    std::size_t mirror = 0;
    std::size_t mul = 1;
    for (int j = 0; j < n; ++j) {
      mirror += static_cast<std::size_t>((G - idx[j]) % G) * mul;
      mul *= G;
    }
    const Complex c = 0.5 * (data[flat] + std::conj(data[mirror]));
    if (std::abs(c) < floor) continue;
    MultiIndex key;
    for (int j = 0; j < n; ++j) key.k[j] = static_cast<std::int16_t>(k[j]);
    terms.emplace_back(key, Jet(c));
  }
  return Series::from_terms(n, std::move(terms), kDefaultMaxDegree, true);
}

double top_quarter_norm(const Series& f, int G) {
  const int cut = (3 * G) / 8;
  double acc = 0.0;
  for (const auto& [key, c] : f.terms()) {
    int top = 0;
    for (int j = 0; j < f.dim(); ++j) top = std::max(top, std::abs(static_cast<int>(key.k[j])));
    if (top >= cut) acc += std::abs(c.value);
  }
  return acc;
}

double coefficient_sum(const Series& f) {
  double acc = 0.0;
  for (const auto& t : f.terms()) acc += std::abs(t.second.value);
  return acc;
}

double embedding_scale(const Embedding& e) {
  double s = 0.0;
  for (const auto& f : e.u) s = std::max(s, coefficient_sum(f));
  for (const auto& f : e.v) s = std::max(s, coefficient_sum(f));
  return s;
}

}  // namespace

int worker_count(std::size_t tasks) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  long limit = hw;
  if (const char* env = std::getenv("KAM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) limit = std::min<long>(limit, v);
  }
  return static_cast<int>(std::max<long>(1, std::min<long>(limit, static_cast<long>(tasks))));
}

ParameterChain parameter_chain(std::span<const KamTransform> transforms,
                               std::span<const double> anchor) {
  const int n = static_cast<int>(anchor.size());
  const std::size_t N = transforms.size();
  ParameterChain chain;
  chain.values.assign(N + 1, std::vector<double>(anchor.begin(), anchor.end()));
  chain.jacobians.assign(N + 1, std::vector<double>(n * n, 0.0));
  for (int j = 0; j < n; ++j) chain.jacobians[N][j * n + j] = 1.0;
  for (std::size_t i = N; i-- > 0;) {
    const auto& sh = transforms[i].shift;
    if (static_cast<int>(sh.delta.size()) != n) {
      throw DimensionMismatch("parameter_chain: shift dimension mismatch");
    }
    const auto& next = chain.values[i + 1];
    const auto& dnext = chain.jacobians[i + 1];
    for (int a = 0; a < n; ++a) {
      double v = anchor[a] + sh.delta[a];
      for (int b = 0; b < n; ++b) v += sh.jacobian[a * n + b] * (next[b] - anchor[b]);
      chain.values[i][a] = v;
      for (int c = 0; c < n; ++c) {
        double d = 0.0;
        for (int b = 0; b < n; ++b) d += sh.jacobian[a * n + b] * dnext[b * n + c];
        chain.jacobians[i][a * n + c] = d;
      }
    }
  }
  return chain;
}

std::vector<Series> generators_at(std::span<const KamTransform> transforms,
                                  const ParameterChain& chain, double drop_abs) {
  std::vector<Series> out;
  out.reserve(transforms.size());
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    const Series& F = transforms[i].F;
    const int n = F.dim();
    std::vector<Series::Term> terms;
    terms.reserve(F.size());
    for (const auto& [key, c] : F.terms()) {
      Complex v = c.value;
      for (int l = 0; l < n; ++l) v += c.d[l] * (chain.values[i][l] - chain.values.back()[l]);
      if (std::abs(v) < drop_abs) continue;
      terms.emplace_back(key, Jet(v));
    }
    out.push_back(Series::from_terms(n, std::move(terms), F.max_degree(), F.real_symmetric()));
  }
  return out;
}

int default_grid_size(std::span<const Series> generators) {
  int degree = 0;
  for (const auto& g : generators) degree = std::max(degree, g.fourier_degree());
  int G = 8;
  while (G < 4 * degree) G *= 2;
  return G;
}

Embedding compose_embedding(std::span<const KamTransform> transforms,
                            std::span<const double> anchor, int grid_size,
                            const ComposeOptions& options) {
  const int n = static_cast<int>(anchor.size());
  if (n < 1 || n > kMaxDim) throw DomainError("compose_embedding: unsupported dimension");
  const ParameterChain chain = parameter_chain(transforms, anchor);
  const std::vector<Series> gens = generators_at(transforms, chain, options.drop_abs);
  const int required = default_grid_size(gens);
  if (grid_size <= 0) grid_size = required;
  if (grid_size < 4 * [&] {
        int d = 0;
        for (const auto& g : gens) d = std::max(d, g.fourier_degree());
        return d;
      }()) {
    std::ostringstream msg;
    msg << "compose_embedding: grid_size " << grid_size
        << " is below 4x the generator Fourier degree (needs " << required << ")";
    throw DomainError(msg.str());
  }
  const int G = grid_size;
  std::vector<CompactSeries> fields;
  fields.reserve(gens.size());
  for (const auto& g : gens) fields.emplace_back(g);

  const std::size_t total = ipow(G, n);
  std::vector<std::vector<double>> u_samples(n, std::vector<double>(total));
  std::vector<std::vector<double>> v_samples(n, std::vector<double>(total));

  // The state is (I, theta - theta0), so a displacement far below one keeps
  // its relative accuracy; the absolute tolerance follows the field size.
  double bound = 0.0;
  for (const auto& f : fields) bound += f.field_bound();
  const double abs_tol = std::max(options.ode_tol * bound, 1e-300);

  namespace ode = boost::numeric::odeint;
  parallel_for(total, [&](std::size_t flat) {
    const auto idx = unflatten(flat, n, G);
    State base{};
    for (int j = 0; j < n; ++j) base[n + j] = 2.0 * std::numbers::pi * idx[j] / G;
    State x{};
    for (std::size_t i = fields.size(); i-- > 0;) {
      const auto& field = fields[i];
      if (field.terms.empty()) continue;
      auto stepper =
          ode::make_controlled<ode::runge_kutta_fehlberg78<State>>(abs_tol, options.ode_tol);
      ode::integrate_adaptive(
          stepper,
          [&field, &base](const State& s, State& ds, double) { field.field(s, base, ds); }, x,
          0.0, 1.0, 0.25);
    }
    for (int j = 0; j < n; ++j) {
      v_samples[j][flat] = x[j];
      u_samples[j][flat] = x[n + j];
    }
  });

  Embedding e;
  e.grid_size = G;
  for (int j = 0; j < n; ++j) {
    e.u.push_back(to_fourier(u_samples[j], n, G, options.coefficient_floor));
    e.v.push_back(to_fourier(v_samples[j], n, G, options.coefficient_floor));
  }
  e.scale = embedding_scale(e);
  for (const auto& f : e.u) e.aliasing = std::max(e.aliasing, top_quarter_norm(f, G));
  for (const auto& f : e.v) e.aliasing = std::max(e.aliasing, top_quarter_norm(f, G));
  if (e.aliasing > options.aliasing_fraction * e.scale && e.aliasing > options.coefficient_floor) {
    std::ostringstream msg;
    msg << "compose_embedding: grid too small, top-quarter modes carry " << e.aliasing
        << " against scale " << e.scale << " at grid " << G;
    throw NumericalError(msg.str());
  }
  return e;
}

Embedding compose_embedding_series(std::span<const KamTransform> transforms,
                                   std::span<const double> anchor, double drop_abs) {
  const int n = static_cast<int>(anchor.size());
  const ParameterChain chain = parameter_chain(transforms, anchor);
  const std::vector<Series> gens = generators_at(transforms, chain, drop_abs);
  std::vector<Series> v;
  std::vector<Series> u;
  const int d_max = gens.empty() ? kDefaultMaxDegree : gens.front().max_degree();
  for (int a = 0; a < n; ++a) {
    v.push_back(Series::action(n, a, d_max));
    u.emplace_back(n, d_max, true);
  }
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const Series& F = gens[i];
    if (F.empty()) continue;
    LieOptions lie;
    lie.weights = Weights{transforms[i].r, std::max(1e-3, transforms[i].s / 2.0)};
    lie.tail_tol = drop_abs * 1e-3;
    lie.prune_tol = drop_abs * 1e-3;
    for (int a = 0; a < n; ++a) {
      v[a] = lie_transform(v[a], F, lie).value;
      const Series moved =
          lie_series(derivative_action(F, a), F,
                     [](int j) {
                       double c = 1.0;
                       for (int p = 2; p <= j + 1; ++p) c /= p;
                       return c;
                     },
                     lie)
              .value;
      u[a] = (u[a].empty() ? u[a] : lie_transform(u[a], F, lie).value) + moved;
    }
  }
  Embedding e;
  for (int a = 0; a < n; ++a) {
    e.u.push_back(action_free_part(u[a]).with_tail(0.0));
    e.v.push_back(action_free_part(v[a]).with_tail(0.0));
  }
  e.scale = embedding_scale(e);
  return e;
}

double verify_invariance(const Embedding& embedding, const Series& H,
                         std::span<const double> anchor, std::span<const double> phi,
                         std::span<const double> omega, int grid_size) {
  const int n = H.dim();
  if (static_cast<int>(embedding.u.size()) != n || static_cast<int>(embedding.v.size()) != n) {
    throw DimensionMismatch("verify_invariance: embedding dimension mismatch");
  }
  std::vector<double> offset(n);
  for (int l = 0; l < n; ++l) offset[l] = phi[l] - anchor[l];
  const int G = grid_size;
  const std::size_t total = ipow(G, n);
  std::vector<double> worst(total, 0.0);
  parallel_for(total, [&](std::size_t flat) {
    const auto idx = unflatten(flat, n, G);
    std::array<Complex, kMaxDim> theta{};
    std::array<Complex, kMaxDim> zero{};
    for (int j = 0; j < n; ++j) theta[j] = 2.0 * std::numbers::pi * idx[j] / G;
    std::array<PointGradient, kMaxDim> gu;
    std::array<PointGradient, kMaxDim> gv;
    std::array<Complex, kMaxDim> I{};
    std::array<Complex, kMaxDim> ang{};
    for (int a = 0; a < n; ++a) {
      gu[a] = evaluate_gradient(embedding.u[a], zero, theta);
      gv[a] = evaluate_gradient(embedding.v[a], zero, theta);
      I[a] = gv[a].value.real();
      ang[a] = theta[a] + gu[a].value.real();
    }
    const PointGradient gh = evaluate_gradient(H, I, ang, offset);
    double r = 0.0;
    for (int a = 0; a < n; ++a) {
      Complex dv{};
      Complex du{};
      for (int l = 0; l < n; ++l) {
        dv += omega[l] * gv[a].d_angle[l];
        du += omega[l] * gu[a].d_angle[l];
      }
      r = std::max(r, std::abs(-gh.d_angle[a] - dv));
      r = std::max(r, std::abs(gh.d_action[a] - omega[a] - du));
    }
    worst[flat] = r;
  });
  return *std::max_element(worst.begin(), worst.end());
}

double embedding_distance(const Embedding& a, const Embedding& b, double s) {
  if (a.u.size() != b.u.size()) throw DimensionMismatch("embedding_distance: dimension mismatch");
  double d = 0.0;
  for (std::size_t j = 0; j < a.u.size(); ++j) {
    d = std::max(d, weighted_norm(a.u[j] - b.u[j], 1.0, s));
    d = std::max(d, weighted_norm(a.v[j] - b.v[j], 1.0, s));
  }
  return d;
}

}  // namespace kam
