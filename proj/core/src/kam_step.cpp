#include "kam/kam_step.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "kam/errors.hpp"
#include "kam/poisson.hpp"

namespace kam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConditionMargin make_margin(std::string name, double value, double bound) {
  ConditionMargin m;
  m.name = std::move(name);
  m.value = value;
  m.bound = bound;
  m.margin = value > 0.0 ? bound / value : kInf;
  return m;
}

double inverse_factorial_shift(int j, int shift) {
  // 1 / (j + shift)!
  double c = 1.0;
  for (int p = 2; p <= j + shift; ++p) c /= p;
  return c;
}

void validate_params(const StepParams& p, double eta_limit) {
  if (!(p.eta > 0.0 && p.eta < eta_limit)) {
    std::ostringstream msg;
    msg << "step parameters require 0 < eta < " << eta_limit << " (got " << p.eta << ")";
    throw DomainError(msg.str());
  }
  if (!(p.sigma > 0.0 && p.sigma < p.s / 5.0)) {
    std::ostringstream msg;
    msg << "step parameters require 0 < sigma < s/5 (sigma=" << p.sigma << ", s=" << p.s << ")";
    throw DomainError(msg.str());
  }
  if (p.K < 1) throw DomainError("step parameters require K >= 1");
  if (!(p.r > 0.0) || !(p.s > 0.0)) throw DomainError("step parameters require r, s > 0");
  if (!(p.h >= 0.0)) throw DomainError("step parameters require h >= 0");
  if (!(p.epsilon >= 0.0)) throw DomainError("step parameters require epsilon >= 0");
  if (!(p.c_K > 0.0)) throw DomainError("step parameters require c_K > 0");
}

TransformBounds measure_transform(const Series& F, const StepParams& p, const LieOptions& lie) {
  TransformBounds b;
  const int n = F.dim();
  const Weights w = lie.weights;
  const auto coeff = [](int j) { return inverse_factorial_shift(j, 1); };
  double disp = 0.0;
  double jac = 0.0;
  for (int a = 0; a < n; ++a) {
    const Series dI = lie_series(-derivative_angle(F, a), F, coeff, lie).value;
    const Series dth = lie_series(derivative_action(F, a), F, coeff, lie).value;
    disp = std::max({disp, weighted_norm(dI, w) / p.r, weighted_norm(dth, w) / p.sigma});
    double row_I = 0.0;
    double row_th = 0.0;
    for (int b2 = 0; b2 < n; ++b2) {
      row_I += weighted_norm(derivative_action(dI, b2), w) +
               weighted_norm(derivative_angle(dI, b2), w) * p.sigma / p.r;
      row_th += weighted_norm(derivative_action(dth, b2), w) * p.r / p.sigma +
                weighted_norm(derivative_angle(dth, b2), w);
    }
    jac = std::max({jac, row_I, row_th});
  }
  b.weighted_displacement = disp;
  b.weighted_jacobian = jac;
  return b;
}

struct Engine {
  const NormalForm& N;
  const Series& P;
  const Series* Q;
  double M;
  const StepParams& params;
  const StepOptions& options;

  StepResult run() {
    const int n = P.dim();
    if (N.dim() != n) throw DimensionMismatch("kam_step: normal form and P differ in dimension");
    if (Q && Q->dim() != n) throw DimensionMismatch("kam_step_q: Q dimension mismatch");

    const double eps = params.epsilon;
    const double measured = weighted_norm(P, params.r, params.s);
    if (measured > eps * (1.0 + 1e-12) + std::numeric_limits<double>::min()) {
      std::ostringstream msg;
      msg << "kam_step: |P|_{r,s} = " << measured << " exceeds epsilon = " << eps;
      throw DomainError(msg.str());
    }
    const double alpha = N.omega.alpha;
    const double nu = N.omega.nu();
    const double sigma_nu = std::pow(params.sigma, nu);
    const auto& c = params.implicit;

    StepReport rep;
    rep.eps_in = eps;
    rep.contraction_bound = 9.0 * params.eta * params.eta;
    rep.margins.push_back(make_margin("eps <. alpha eta^2 r sigma^nu", eps,
                                      c.eps_alpha * alpha * params.eta * params.eta *
                                          params.r * sigma_nu));
    if (Q) {
      rep.margins.push_back(make_margin("r <. M^-1 alpha eta^2 sigma^nu", params.r,
                                        c.r_alpha * alpha * params.eta * params.eta *
                                            sigma_nu / M));
    }
    rep.margins.push_back(make_margin("eps <. h r", eps, c.eps_hr * params.h * params.r));
    rep.margins.push_back(make_margin("h <= alpha (2 K^nu)^-1", params.h,
                                      alpha / (2.0 * std::pow(static_cast<double>(params.K), nu))));
    for (const auto& m : rep.margins) {
      if (m.margin < 1.0) rep.compliant = false;
    }
    if (options.strict && !rep.compliant) {
      for (const auto& m : rep.margins) {
        if (m.margin < 1.0) {
          std::ostringstream msg;
          msg << "step condition violated: " << m.name << " (value " << m.value << ", bound "
              << m.bound << ")";
          throw ThresholdError(m.name, msg.str());
        }
      }
    }

    Approximation approx = russmann_truncate(P, params);
    rep.truncation_error = approx.error;
    rep.truncation_budget = approx.budget;
    rep.K_used = approx.K_used;
    rep.K_formula = approx.K_formula;
    rep.K_formula_sufficed = approx.formula_sufficed;

    const Series& R = approx.approximation;
    const Series avgR = angle_average(R);
    const Series F = solve_homological(R, N);
    rep.F_norm = weighted_norm(F, params.r, params.s);

    const Weights w_out{params.eta * params.r, params.s - 5.0 * params.sigma};
    LieOptions lie;
    lie.weights = w_out;
    lie.tail_tol = options.lie_tol_rel * eps;
    lie.prune_tol = options.prune_rel * eps;
    lie.max_terms = options.max_lie_terms;
    if (!(lie.tail_tol > 0.0)) lie.tail_tol = 0.0;

    const Series B_avg = poisson_bracket(avgR, F, w_out);
    const Series B_R = poisson_bracket(R, F, w_out);
    Series B_Q(n, P.max_degree(), true);
    if (Q) B_Q = poisson_bracket(*Q, F, w_out);

    SeriesAccumulator acc(n, std::max(P.max_degree(), Q ? Q->max_degree() : 0));
    double lie_tail = 0.0;
    double prune_tail = 0.0;
    int terms = 0;
    const auto add_chain = [&](const LieResult& r, double weight) {
      acc.add(r.value.with_tail(0.0), weight);
      lie_tail += std::abs(weight) * r.tail_bound;
      prune_tail += std::abs(weight) * (r.value.tail_estimate() - r.tail_bound);
      terms += r.terms;
    };

    if (options.integral == IntegralMethod::series) {
      add_chain(lie_series(B_avg, F, [](int j) { return inverse_factorial_shift(j, 2); }, lie),
                1.0);
      add_chain(lie_series(B_R, F,
                           [](int j) { return (j + 1) * inverse_factorial_shift(j, 2); }, lie),
                1.0);
      if (Q) {
        add_chain(lie_series(B_Q, F, [](int j) { return inverse_factorial_shift(j, 1); }, lie),
                  1.0);
      }
    } else {
      const auto [nodes, weights] = gauss_legendre_unit(options.gl_order);
      for (std::size_t q = 0; q < nodes.size(); ++q) {
        const double t = nodes[q];
        Series G = (1.0 - t) * B_avg + t * B_R;
        if (Q) G = G + B_Q;
        LieOptions at_t = lie;
        at_t.time = t;
        add_chain(lie_transform(G, F, at_t), weights[q]);
      }
    }
    add_chain(lie_series(approx.remainder, F, [](int j) { return inverse_factorial_shift(j, 0); },
                         lie),
              1.0);
    Series P_next = acc.finish(P.real_symmetric() && (!Q || Q->real_symmetric()));

    FrequencyCorrection fc = frequency_correction(avgR, N, params.h);
    P_next = reparameterize(P_next, fc.shift.delta, fc.shift.jacobian);
    if (Q) {
      // Q keeps its coefficients; any parameter dependence it has is moved
      // into P+ so that N+ + P+ + Q is the recentred Hamiltonian.
      const Series moved = reparameterize(*Q, fc.shift.delta, fc.shift.jacobian) - *Q;
      if (!moved.empty()) P_next = P_next + moved;
    }
    P_next = P_next.with_tail(lie_tail + prune_tail);

    rep.eps_out = weighted_norm(P_next, w_out);
    rep.contraction_ratio = eps > 0.0 ? rep.eps_out / eps : 0.0;
    rep.lie_tail = lie_tail;
    rep.prune_tail = prune_tail;
    rep.lie_terms = terms;
    rep.frequency_drift = fc.frequency_drift;

    rep.estim2 = measure_transform(F, params, lie);
    rep.estim2.phi_displacement = fc.shift.displacement();
    rep.estim2.phi_jacobian = params.h * fc.shift.jacobian_defect();
    rep.estim2.transform_bound = c.estim2 * eps / (alpha * params.r * sigma_nu);
    rep.estim2.phi_bound = c.estim2 * eps / params.r;

    if (Q) {
      rep.bracket_q_norm = weighted_norm(B_Q, params.r, params.s);
      rep.bracket_q_bound = c.bracket_q * M * params.r * eps / (alpha * sigma_nu);
    }

    if (options.strict && lie_tail + prune_tail > options.strict_tail_fraction * eps) {
      std::ostringstream msg;
      msg << "strict mode: tail estimate " << lie_tail + prune_tail << " exceeds "
          << options.strict_tail_fraction << " of eps = " << eps;
      throw NumericalError(msg.str());
    }

    StepResult out;
    out.next = fc.next;
    out.P_next = std::move(P_next);
    out.transform.F = F;
    out.transform.shift = fc.shift;
    out.transform.sigma = params.sigma;
    out.transform.eta = params.eta;
    out.transform.r = params.r;
    out.transform.s = params.s;
    out.transform.lie_tail = lie_tail + prune_tail;
    out.report = std::move(rep);
    return out;
  }
};

}  // namespace

// ---------------------------------------------------------------- NormalForm

Series NormalForm::as_series(int d_max) const {
  const int n = dim();
  std::vector<Series::Term> terms;
  terms.emplace_back(MultiIndex{}, energy);
  for (int j = 0; j < n; ++j) {
    MultiIndex key;
    key.m[j] = 1;
    Jet c(omega.omega[j]);
    c.d[j] = 1.0;
    terms.emplace_back(key, c);
  }
  return Series::from_terms(n, std::move(terms), d_max, true);
}

// ---------------------------------------------------------------- shifts

ParameterShift ParameterShift::identity(int n) {
  ParameterShift s;
  s.delta.assign(n, 0.0);
  s.jacobian.assign(n * n, 0.0);
  for (int j = 0; j < n; ++j) s.jacobian[j * n + j] = 1.0;
  return s;
}

double ParameterShift::displacement() const {
  double d = 0.0;
  for (double v : delta) d = std::max(d, std::abs(v));
  return d;
}

double ParameterShift::jacobian_defect() const {
  const int n = static_cast<int>(delta.size());
  double worst = 0.0;
  for (int a = 0; a < n; ++a) {
    double row = 0.0;
    for (int b = 0; b < n; ++b) row += std::abs(jacobian[a * n + b] - (a == b ? 1.0 : 0.0));
    worst = std::max(worst, row);
  }
  return worst;
}

// ---------------------------------------------------------------- truncation

Approximation russmann_truncate(const Series& P, const StepParams& params) {
  const int n = P.dim();
  if (!(params.eta > 0.0 && params.eta < 1.0) || !(params.sigma > 0.0)) {
    throw DomainError("russmann_truncate: need 0 < eta < 1 and sigma > 0");
  }
  if (!(params.s - params.sigma > 0.0)) throw DomainError("russmann_truncate: need sigma < s");
  const Weights w{2.0 * params.eta * params.r, params.s - params.sigma};
  Approximation a;
  a.budget = 8.0 * params.eta * params.eta * params.epsilon;
  const double raw = params.c_K / params.sigma * std::log(n / (params.eta * params.eta));
  a.K_formula = std::max<long long>(1, static_cast<long long>(std::ceil(raw)));

  const int degree = P.fourier_degree();
  long long K = a.K_formula;
  while (true) {
    Truncation t = split(P, K, 1, w);
    if (t.dropped_norm <= a.budget) {
      a.approximation = std::move(t.kept);
      a.remainder = std::move(t.dropped);
      a.error = t.dropped_norm;
      break;
    }
    if (K >= degree) {
      // Fourier content is exhausted; what is left is Taylor tail.
      std::ostringstream msg;
      msg << "step infeasible: Taylor tail |P - R|_{2 eta r, s - sigma} = " << t.dropped_norm
          << " exceeds 8 eta^2 eps = " << a.budget << " at K = " << K;
      throw ThresholdError("|P - R| <= 8 eta^2 eps", msg.str());
    }
    K *= 2;
  }
  a.K_used = K;
  a.formula_sufficed = K == a.K_formula;
  Truncation taylor = split(a.remainder, std::numeric_limits<int>::max(), 1, w);
  a.taylor_error = taylor.dropped_norm;
  return a;
}

// ---------------------------------------------------------------- homological

Series solve_homological(const Series& R, const NormalForm& N) {
  const int n = R.dim();
  if (N.dim() != n) throw DimensionMismatch("solve_homological: dimension mismatch");
  if (R.action_degree() > 1) {
    throw DomainError("solve_homological: R must be affine in I");
  }
  const auto& w = N.omega.omega;
  std::vector<Series::Term> out;
  out.reserve(R.size());
  for (const auto& [key, c] : R.terms()) {
    if (key.is_average()) continue;
    if (key.fourier_degree() > N.omega.K_verified) {
      std::ostringstream msg;
      msg << "solve_homological: |k|_1 = " << key.fourier_degree()
          << " exceeds the certified range K_verified = " << N.omega.K_verified;
      throw CertificationError(msg.str());
    }
    double dot = 0.0;
    double scale = 0.0;
    for (int j = 0; j < n; ++j) {
      dot += key.k[j] * w[j];
      scale += std::abs(key.k[j] * w[j]);
    }
    if (std::abs(dot) <= 4.0 * std::numeric_limits<double>::epsilon() * scale) {
      throw ResonanceError("solve_homological: zero small divisor");
    }
    const Complex divisor(0.0, dot);
    Jet f;
    f.value = c.value / divisor;
    for (int l = 0; l < n; ++l) f.d[l] = c.d[l] / divisor - f.value * (key.k[l] / dot);
    out.emplace_back(key, f);
  }
  return Series::from_terms(n, std::move(out), R.max_degree(), R.real_symmetric());
}

// ---------------------------------------------------------------- frequency

FrequencyCorrection frequency_correction(const Series& avgR, const NormalForm& N, double h) {
  const int n = N.dim();
  if (avgR.dim() != n) throw DimensionMismatch("frequency_correction: dimension mismatch");
  for (const auto& [key, c] : avgR.terms()) {
    if (!key.is_average() || key.action_degree() > 1) {
      throw DomainError("frequency_correction: average must be k = 0 and affine in I");
    }
  }
  const Jet e_hat = avgR.coefficient(MultiIndex{});
  Eigen::VectorXd v(n);
  Eigen::MatrixXd A(n, n);
  for (int j = 0; j < n; ++j) {
    MultiIndex key;
    key.m[j] = 1;
    const Jet c = avgR.coefficient(key);
    v(j) = c.value.real();
    for (int l = 0; l < n; ++l) A(j, l) = c.d[l].real();
  }

  FrequencyCorrection fc;
  fc.frequency_drift.assign(v.data(), v.data() + n);
  const double vnorm = v.lpNorm<Eigen::Infinity>();
  if (vnorm > h / 4.0) {
    std::ostringstream msg;
    msg << "parameter domain exhausted: |v| = " << vnorm << " > h/4 = " << h / 4.0;
    throw ThresholdError("|v| <= h/4", msg.str());
  }

  const Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n) + A;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
  if (std::abs(lu.determinant()) < 1e-300) {
    throw NumericalError("frequency_correction: singular Jacobian I + dv/domega");
  }
  const double tol = 1e-14 * std::max(h, vnorm);
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  int it = 0;
  double res = (delta + v + A * delta).lpNorm<Eigen::Infinity>();
  while (res > tol) {
    if (++it > 50) throw NumericalError("frequency_correction: Newton did not converge");
    delta -= lu.solve(delta + v + A * delta);
    const double next = (delta + v + A * delta).lpNorm<Eigen::Infinity>();
    if (!(next < res)) {
      res = next;
      break;  // roundoff floor
    }
    res = next;
  }
  const Eigen::MatrixXd Dg = lu.inverse();

  fc.shift.delta.assign(delta.data(), delta.data() + n);
  fc.shift.jacobian.resize(n * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) fc.shift.jacobian[a * n + b] = Dg(a, b);
  }
  fc.residual = res;
  fc.newton_iterations = it;
  fc.next.omega = N.omega;
  fc.next.energy = reparameterize(N.energy + e_hat, n, fc.shift.delta, fc.shift.jacobian);
  return fc;
}

// ---------------------------------------------------------------- steps

StepResult kam_step(const NormalForm& N, const Series& P, const StepParams& params,
                    const StepOptions& options) {
  validate_params(params, 1.0 / 8.0);
  return Engine{N, P, nullptr, 0.0, params, options}.run();
}

StepResultQ kam_step_q(const NormalForm& N, const Series& P, const Series& Q, double M,
                       const StepParams& params, const StepOptions& options) {
  validate_params(params, 1.0 / 4.0);
  for (const auto& [key, c] : Q.terms()) {
    if (!key.is_average()) {
      throw DomainError("kam_step_q: Q must be integrable (only k = 0 terms)");
    }
    if (key.action_degree() < 2) {
      throw DomainError("kam_step_q: Q must be at least quadratic in I");
    }
  }
  if (!(M > 0.0)) throw DomainError("kam_step_q: M must be positive");
  const double qn = weighted_norm(Q, params.r, params.s);
  if (qn > M * params.r * params.r * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "kam_step_q: |Q|_r = " << qn << " exceeds M r^2 = " << M * params.r * params.r;
    throw DomainError(msg.str());
  }
  StepResult r = Engine{N, P, &Q, M, params, options}.run();
  return StepResultQ{std::move(r.next), std::move(r.P_next), Q, std::move(r.transform),
                     std::move(r.report)};
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre_unit(int order) {
  if (order < 1) throw DomainError("gauss_legendre_unit: order must be positive");
  std::vector<double> nodes(order);
  std::vector<double> weights(order);
  const unsigned n = static_cast<unsigned>(order);
  for (int i = 0; i < order; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      const double p = std::legendre(n, x);
      const double pm = n > 1 ? std::legendre(n - 1, x) : 1.0;
      dp = order * (x * p - pm) / (x * x - 1.0);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double p = std::legendre(n, x);
    const double pm = n > 1 ? std::legendre(n - 1, x) : 1.0;
    dp = order * (x * p - pm) / (x * x - 1.0);
    nodes[i] = 0.5 * (1.0 + x);
    weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  std::vector<std::size_t> idx(order);
  for (int i = 0; i < order; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return nodes[a] < nodes[b]; });
  std::vector<double> sn(order), sw(order);
  for (int i = 0; i < order; ++i) {
    sn[i] = nodes[idx[i]];
    sw[i] = weights[idx[i]];
  }
  return {sn, sw};
}

// ---------------------------------------------------------------- json

nlohmann::json to_json(const ParameterShift& shift) {
  return {{"delta", shift.delta}, {"jacobian", shift.jacobian}};
}

nlohmann::json to_json(const StepReport& r) {
  nlohmann::json margins = nlohmann::json::array();
  for (const auto& m : r.margins) {
    margins.push_back(
        {{"name", m.name}, {"value", m.value}, {"bound", m.bound}, {"margin", m.margin}});
  }
  nlohmann::json j = {
      {"eps_in", r.eps_in},
      {"eps_out", r.eps_out},
      {"contraction_ratio", r.contraction_ratio},
      {"contraction_bound", r.contraction_bound},
      {"truncation_error", r.truncation_error},
      {"truncation_budget", r.truncation_budget},
      {"K_used", r.K_used},
      {"K_formula", r.K_formula},
      {"K_formula_sufficed", r.K_formula_sufficed},
      {"F_norm", r.F_norm},
      {"condition_margins", margins},
      {"compliant", r.compliant},
      {"estim2",
       {{"weighted_displacement", r.estim2.weighted_displacement},
        {"weighted_jacobian", r.estim2.weighted_jacobian},
        {"phi_displacement", r.estim2.phi_displacement},
        {"phi_jacobian", r.estim2.phi_jacobian},
        {"transform_bound", r.estim2.transform_bound},
        {"phi_bound", r.estim2.phi_bound}}},
      {"tails", {{"lie", r.lie_tail}, {"prune", r.prune_tail}}},
      {"lie_terms", r.lie_terms},
      {"frequency_drift", r.frequency_drift},
  };
  if (r.bracket_q_norm) {
    j["bracket_q"] = {{"norm", *r.bracket_q_norm}, {"bound", *r.bracket_q_bound}};
  }
  return j;
}

}  // namespace kam
