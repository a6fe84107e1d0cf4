#include "kam/application.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "kam/errors.hpp"

namespace kam {

namespace {

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

Eigen::MatrixXd to_matrix(const std::vector<double>& a, int n) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = a[i * n + j];
  }
  return m;
}

Series polynomial_series(const IntegrableSystem& sys, int d_max) {
  std::vector<Series::Term> terms;
  for (const auto& mono : sys.monomials()) {
    MultiIndex key;
    for (int j = 0; j < sys.dim(); ++j) key.m[j] = static_cast<std::uint8_t>(mono.exponent[j]);
    terms.emplace_back(key, Jet(Complex(mono.coefficient)));
  }
  return Series::from_terms(sys.dim(), std::move(terms), std::max(d_max, sys.degree()), true);
}

double sup_on_grid(const Series& f, int G) {
  const int n = f.dim();
  std::size_t total = 1;
  for (int j = 0; j < n; ++j) total *= G;
  double best = 0.0;
  std::array<Complex, kMaxDim> zero{};
  std::array<Complex, kMaxDim> theta{};
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    for (int j = 0; j < n; ++j) {
      theta[j] = 2.0 * std::numbers::pi * static_cast<double>(rest % G) / G;
      rest /= G;
    }
    best = std::max(best, std::abs(evaluate(f, zero, theta)));
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------- system

IntegrableSystem::IntegrableSystem(int n, std::vector<Monomial> monomials, std::string name)
    : n_(n), monomials_(std::move(monomials)), name_(std::move(name)) {
  if (n < 1 || n > kMaxDim) throw DomainError("IntegrableSystem: unsupported dimension");
  for (const auto& m : monomials_) {
    if (static_cast<int>(m.exponent.size()) != n) {
      throw DimensionMismatch("IntegrableSystem: exponent length differs from n");
    }
    for (int e : m.exponent) {
      if (e < 0) throw DomainError("IntegrableSystem: negative exponent");
    }
  }
}

IntegrableSystem IntegrableSystem::quadratic(int n) {
  std::vector<Monomial> ms;
  for (int j = 0; j < n; ++j) {
    std::vector<int> e(n, 0);
    e[j] = 2;
    ms.push_back({e, 0.5});
  }
  return IntegrableSystem(n, std::move(ms), "quadratic");
}

IntegrableSystem IntegrableSystem::mixed_quadratic() {
  return IntegrableSystem(2, {{{2, 0}, 0.5}, {{1, 1}, 0.25}, {{0, 2}, 1.0}}, "mixed");
}

IntegrableSystem IntegrableSystem::by_name(const std::string& name, int n) {
  if (name == "quadratic") return quadratic(n);
  if (name == "mixed") {
    if (n != 2) throw DomainError("system 'mixed' is two dimensional");
    return mixed_quadratic();
  }
  throw DomainError("unknown integrable system '" + name + "'");
}

int IntegrableSystem::degree() const {
  int d = 0;
  for (const auto& m : monomials_) {
    int s = 0;
    for (int e : m.exponent) s += e;
    d = std::max(d, s);
  }
  return d;
}

double IntegrableSystem::value(std::span<const double> p) const {
  double v = 0.0;
  for (const auto& m : monomials_) {
    double t = m.coefficient;
    for (int j = 0; j < n_; ++j) t *= ipow(p[j], m.exponent[j]);
    v += t;
  }
  return v;
}

std::vector<double> IntegrableSystem::gradient(std::span<const double> p) const {
  std::vector<double> g(n_, 0.0);
  for (const auto& m : monomials_) {
    for (int a = 0; a < n_; ++a) {
      if (m.exponent[a] == 0) continue;
      double t = m.coefficient * m.exponent[a];
      for (int j = 0; j < n_; ++j) t *= ipow(p[j], m.exponent[j] - (j == a ? 1 : 0));
      g[a] += t;
    }
  }
  return g;
}

std::vector<double> IntegrableSystem::hessian(std::span<const double> p) const {
  std::vector<double> H(n_ * n_, 0.0);
  for (const auto& m : monomials_) {
    for (int a = 0; a < n_; ++a) {
      for (int b = 0; b < n_; ++b) {
        std::vector<int> e = m.exponent;
        double t = m.coefficient * e[a];
        if (e[a] == 0) continue;
        e[a] -= 1;
        t *= e[b];
        if (e[b] == 0) continue;
        e[b] -= 1;
        for (int j = 0; j < n_; ++j) t *= ipow(p[j], e[j]);
        H[a * n_ + b] += t;
      }
    }
  }
  return H;
}

std::vector<double> IntegrableSystem::frequency_inverse(std::span<const double> omega,
                                                        std::span<const double> start) const {
  if (static_cast<int>(omega.size()) != n_) {
    throw DimensionMismatch("frequency_inverse: omega dimension mismatch");
  }
  std::vector<double> p(omega.begin(), omega.end());
  if (!start.empty()) p.assign(start.begin(), start.end());
  double scale = 0.0;
  for (double w : omega) scale = std::max(scale, std::abs(w));
  for (int it = 0; it < 60; ++it) {
    const auto g = gradient(p);
    Eigen::VectorXd res(n_);
    for (int j = 0; j < n_; ++j) res(j) = g[j] - omega[j];
    if (res.lpNorm<Eigen::Infinity>() <= 4.0 * std::numeric_limits<double>::epsilon() * scale) {
      return p;
    }
    const Eigen::MatrixXd H = to_matrix(hessian(p), n_);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
    if (!lu.isInvertible()) {
      throw DomainError("frequency_inverse: singular Hessian, h is degenerate at this action");
    }
    const Eigen::VectorXd step = lu.solve(res);
    for (int j = 0; j < n_; ++j) p[j] -= step(j);
    if (step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + scale)) return p;
  }
  throw NumericalError("frequency_inverse: Newton did not converge for grad h(p) = omega");
}

double IntegrableSystem::hessian_bound(std::span<const double> p0, double radius) const {
  double rho = radius;
  for (double v : p0) rho = std::max(rho, std::abs(v) + radius);
  // Entrywise majorant of the Hessian on the polydisc of radius rho.
  std::vector<double> H(n_ * n_, 0.0);
  for (const auto& m : monomials_) {
    int total = 0;
    for (int e : m.exponent) total += e;
    if (total < 2) continue;
    for (int a = 0; a < n_; ++a) {
      for (int b = 0; b < n_; ++b) {
        const double f = m.exponent[a] * (m.exponent[b] - (a == b ? 1 : 0));
        if (f <= 0.0) continue;
        H[a * n_ + b] += std::abs(m.coefficient) * f * ipow(rho, total - 2);
      }
    }
  }
  double best = 0.0;
  for (int a = 0; a < n_; ++a) {
    double row = 0.0;
    for (int b = 0; b < n_; ++b) row += H[a * n_ + b];
    best = std::max(best, row);
  }
  return best;
}

// ---------------------------------------------------------------- setup

Series expand_around(const Series& g, std::span<const double> p0,
                     std::span<const double> dp0, int d_max) {
  const int n = g.dim();
  SeriesAccumulator acc(n, d_max);
  for (const auto& [key, c] : g.terms()) {
    std::array<int, kMaxDim> top{};
    for (int j = 0; j < n; ++j) top[j] = key.m[j];
    // every a <= top componentwise
    std::array<int, kMaxDim> a{};
    while (true) {
      int deg = 0;
      for (int j = 0; j < n; ++j) deg += a[j];
      if (deg <= d_max) {
        double coeff = 1.0;
        std::array<double, kMaxDim> dcoeff{};  // d / d p0_l
        for (int j = 0; j < n; ++j) coeff *= binomial(top[j], a[j]) * ipow(p0[j], top[j] - a[j]);
        for (int l = 0; l < n; ++l) {
          const int e = top[l] - a[l];
          if (e == 0) continue;
          double d = 1.0;
          for (int j = 0; j < n; ++j) {
            d *= binomial(top[j], a[j]) *
                 (j == l ? e * ipow(p0[j], e - 1) : ipow(p0[j], top[j] - a[j]));
          }
          dcoeff[l] = d;
        }
        Jet out(c.value * coeff);
        for (int q = 0; q < n; ++q) {
          Complex d = c.d[q] * coeff;
          for (int l = 0; l < n; ++l) d += c.value * dcoeff[l] * dp0[l * n + q];
          out.d[q] = d;
        }
        MultiIndex k2 = key;
        for (int j = 0; j < n; ++j) k2.m[j] = static_cast<std::uint8_t>(a[j]);
        acc.add(k2, out);
      } else {
        throw DomainError("expand_around: action degree exceeds d_max");
      }
      int j = 0;
      while (j < n && a[j] == top[j]) {
        a[j] = 0;
        ++j;
      }
      if (j == n) break;
      ++a[j];
    }
  }
  return acc.finish(g.real_symmetric());
}

PerturbationSetup parameterize(const IntegrableSystem& sys, const Series& f,
                               const FrequencyVector& omega, double r, double s, Mode mode,
                               std::span<const double> p_start) {
  const int n = sys.dim();
  if (f.dim() != n || omega.dim() != n) throw DimensionMismatch("parameterize: dimension mismatch");
  if (!(r > 0.0) || !(s > 0.0)) throw DomainError("parameterize: r and s must be positive");
  PerturbationSetup out;
  out.mode = mode;
  out.r = r;
  out.s = s;
  out.p0 = sys.frequency_inverse(omega.omega, p_start);
  const Eigen::MatrixXd H = to_matrix(sys.hessian(out.p0), n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
  if (!lu.isInvertible()) throw DomainError("parameterize: singular Hessian at p0");
  const Eigen::MatrixXd Hinv = lu.inverse();
  out.p0_jacobian.resize(n * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) out.p0_jacobian[a * n + b] = Hinv(a, b);
  }

  const int d_max = std::max(f.max_degree(), sys.degree());
  out.P_f = expand_around(f, out.p0, out.p0_jacobian, d_max);

  const Series hs = polynomial_series(sys, d_max);
  const Series full = expand_around(hs, out.p0, out.p0_jacobian, d_max);
  std::vector<Series::Term> quad;
  for (const auto& [key, c] : full.terms()) {
    if (key.action_degree() >= 2) quad.emplace_back(key, c);
  }
  out.P_h = Series::from_terms(n, std::move(quad), d_max, true);

  out.N.omega = omega;
  out.N.energy = Jet(Complex(sys.value(out.p0)));
  // de/domega = grad h(p0) . dp0/domega = omega^T H^-1
  for (int q = 0; q < n; ++q) {
    double d = 0.0;
    for (int l = 0; l < n; ++l) d += omega.omega[l] * out.p0_jacobian[l * n + q];
    out.N.energy.d[q] = d;
  }

  out.M = std::max(sys.hessian_bound(out.p0, 1.0), weighted_norm(out.P_h, 1.0, s));
  out.eps_f = weighted_norm(out.P_f, r, s);
  if (mode == Mode::theorem1) {
    out.P = out.P_f + out.P_h;
  } else {
    out.P = out.P_f;
    out.Q = out.P_h;
  }
  out.eps = weighted_norm(out.P, r, s);
  return out;
}

double choose_radius(Mode mode, double eps, double alpha, double s, double nu, double M,
                     double delta) {
  if (!(eps >= 0.0) || !std::isfinite(eps) || !(alpha > 0.0) || !(s > 0.0) || !(M > 0.0) ||
      !(delta > 0.0)) {
    throw DomainError("choose_radius: inputs must be positive");
  }
  if (mode == Mode::theorem1) {
    if (eps == 0.0) throw DomainError("choose_radius: theorem1 radius needs eps > 0");
    return std::sqrt(eps / M);
  }
  return delta * alpha * std::pow(s, nu) / M;
}

double torus_distance(const TorusResult& result, const PerturbationSetup& setup,
                      const IntegrableSystem& sys) {
  double sup = 0.0;
  for (const auto& v : result.embedding.v) {
    if (v.empty()) continue;
    const int G = std::max(32, 4 * v.fourier_degree());
    sup = std::max(sup, sup_on_grid(v, G));
  }
  double shift = 0.0;
  if (!result.phi.empty()) {
    const auto p_phi = sys.frequency_inverse(result.phi, setup.p0);
    for (std::size_t j = 0; j < p_phi.size(); ++j) {
      shift = std::max(shift, std::abs(p_phi[j] - setup.p0[j]));
    }
  }
  return sup + shift;
}

// ---------------------------------------------------------------- sweep

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionMismatch("fit_slope: size mismatch");
  SlopeFit fit;
  fit.points = static_cast<int>(x.size());
  if (fit.points < 2) return fit;
  const double N = fit.points;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= N;
  my /= N;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (fit.points > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (fit.intercept + fit.slope * x[i]);
      rss += e * e;
    }
    fit.stderr_slope = std::sqrt(rss / (N - 2.0) / sxx);
  }
  return fit;
}

ScalingResult scaling_experiment(const IntegrableSystem& sys, const Series& f_template,
                                 const FrequencyVector& omega, double s,
                                 const std::vector<double>& eps_list,
                                 const std::vector<Mode>& modes, const ScalingConfig& config) {
  ScalingResult result;
  const std::size_t rows = eps_list.size() * modes.size();
  result.rows.resize(rows);

  const auto run_row = [&](std::size_t idx) {
    ScalingRow& row = result.rows[idx];
    row.mode = modes[idx / eps_list.size()];
    row.eps = eps_list[idx % eps_list.size()];
    try {
      const Series f = row.eps * f_template;
      const PerturbationSetup probe = parameterize(sys, f, omega, 1.0, s, row.mode);
      row.r = choose_radius(row.mode, row.eps, omega.alpha, s, omega.nu(), probe.M,
                            config.overrides.delta);
      const PerturbationSetup setup = parameterize(sys, f, omega, row.r, s, row.mode);
      row.bound = config.est1_c * setup.eps / row.r;
      ScheduleOverrides ov = config.overrides;
      ov.M = setup.M;
      const DomainParams dom{row.r, s, config.h_domain};
      const IterationSchedule sched = build_schedule(dom, omega, setup.eps, row.mode, ov);
      row.run = run_iteration(setup.N, setup.P, setup.Q, sched, config.run);
      row.distance = torus_distance(row.run.torus, setup, sys);
      row.iterations = static_cast<int>(row.run.report.steps.size());
      row.residual = row.run.torus.invariance_residual;
      row.ok = true;
      row.group = to_string(row.mode);
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
  };

  const int workers = worker_count(rows);
  if (workers <= 1) {
    for (std::size_t i = 0; i < rows; ++i) run_row(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < rows; i += workers) run_row(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (Mode m : modes) {
    std::vector<double> lx, ly, bx, by;
    for (const auto& row : result.rows) {
      if (row.mode != m) continue;
      if (row.bound > 0.0) {
        bx.push_back(std::log(row.eps));
        by.push_back(std::log(row.bound));
      }
      if (row.ok && row.distance > 0.0) {
        lx.push_back(std::log(row.eps));
        ly.push_back(std::log(row.distance));
      }
    }
    result.distance_slopes.emplace_back(m, fit_slope(lx, ly));
    result.bound_slopes.emplace_back(m, fit_slope(bx, by));
  }
  return result;
}

}  // namespace kam
