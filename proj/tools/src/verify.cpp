#include "kam_cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "kam/application.hpp"
#include "kam/poisson.hpp"

namespace kam::cli {

namespace {

using Bracket = std::function<Series(const Series&, const Series&)>;

// {f,g} with the sign of the df/dI dg/dtheta half reversed.
Series faulty_bracket(const Series& f, const Series& g) {
  Series out(f.dim(), std::max(f.max_degree(), g.max_degree()), true);
  for (int j = 0; j < f.dim(); ++j) {
    out = out + multiply(derivative_angle(f, j), derivative_action(g, j));
    out = out + multiply(derivative_action(f, j), derivative_angle(g, j));
  }
  return out;
}

Series random_series(std::mt19937_64& rng, int n, int K, int deg, int terms, int d_max) {
  std::uniform_int_distribution<int> kd(-K, K);
  std::uniform_int_distribution<int> md(0, deg);
  std::uniform_real_distribution<double> cd(-1.0, 1.0);
  std::vector<Series::Term> out;
  for (int t = 0; t < terms; ++t) {
    std::vector<int> k(n), m(n);
    int l1 = 0;
    do {
      l1 = 0;
      for (int j = 0; j < n; ++j) {
        k[j] = kd(rng);
        l1 += std::abs(k[j]);
      }
    } while (l1 > K);
    int total = 0;
    for (int j = 0; j < n; ++j) {
      m[j] = md(rng);
      if (total + m[j] > deg) m[j] = deg - total;
      total += m[j];
    }
    Jet c(Complex(cd(rng), cd(rng)));
    for (int l = 0; l < n; ++l) c.d[l] = Complex(cd(rng), cd(rng));
    const MultiIndex key = make_index(k, m);
    if (key.is_average()) {
      c.value = c.value.real();
      for (int l = 0; l < n; ++l) c.d[l] = c.d[l].real();
      out.emplace_back(key, c);
    } else {
      out.emplace_back(key, c);
      out.emplace_back(key.conjugate(), c.conj());
    }
  }
  return Series::from_terms(n, std::move(out), d_max, true);
}

constexpr double kR = 0.5;
constexpr double kS = 0.3;

double norm(const Series& f) { return weighted_norm(f, kR, kS); }

PropertyResult property(std::string name, double value, double bound, std::string detail = {}) {
  PropertyResult p;
  p.name = std::move(name);
  p.value = value;
  p.bound = bound;
  p.passed = std::isfinite(value) && value <= bound;
  p.detail = std::move(detail);
  return p;
}

PropertyResult algebra_antisymmetry(const Bracket& br) {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Series f = random_series(rng, 2, 5, 2, 6, 8);
    const Series g = random_series(rng, 2, 5, 2, 6, 8);
    const Series fg = br(f, g);
    const Series gf = br(g, f);
    const double scale = std::max(norm(fg), norm(f) * norm(g) * 1e-300);
    if (scale > 0.0) worst = std::max(worst, norm(fg + gf) / scale);
  }
  return property("bracket_antisymmetry", worst, 1e-14, "{f,g} + {g,f} relative to |{f,g}|");
}

PropertyResult algebra_jacobi(const Bracket& br) {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Series f = random_series(rng, 2, 5, 2, 4, 8);
    const Series g = random_series(rng, 2, 5, 2, 4, 8);
    const Series h = random_series(rng, 2, 5, 2, 4, 8);
    const Series a = br(f, br(g, h));
    const Series b = br(g, br(h, f));
    const Series c = br(h, br(f, g));
    const double scale = norm(a) + norm(b) + norm(c);
    if (scale > 0.0) worst = std::max(worst, norm(a + b + c) / scale);
  }
  return property("bracket_jacobi", worst, 1e-10, "cyclic sum relative to the sum of norms");
}

PropertyResult algebra_leibniz(const Bracket& br) {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Series f = random_series(rng, 2, 5, 2, 4, 8);
    const Series g = random_series(rng, 2, 5, 2, 4, 8);
    const Series h = random_series(rng, 2, 5, 2, 4, 8);
    const Series lhs = br(f, multiply(g, h));
    const Series rhs = multiply(br(f, g), h) + multiply(g, br(f, h));
    const double scale = norm(lhs) + norm(rhs);
    if (scale > 0.0) worst = std::max(worst, norm(lhs - rhs) / scale);
  }
  return property("bracket_leibniz", worst, 1e-10, "{f,gh} - {f,g}h - g{f,h}");
}

PropertyResult algebra_submultiplicative() {
  std::mt19937_64 rng(14);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Series f = random_series(rng, 2, 5, 2, 6, 8);
    const Series g = random_series(rng, 2, 5, 2, 6, 8);
    worst = std::max(worst, norm(multiply(f, g)) / (norm(f) * norm(g)));
  }
  return property("norm_submultiplicative", worst, 1.0 + 1e-12, "max |fg| / (|f| |g|)");
}

FrequencyVector golden(int K) {
  return extend_certificate(FrequencyVector{quadratic_irrational_frequency(2), 0.25, 1.2, 0, {}, 0.0},
                            K);
}

PropertyResult bracket_normal_form() {
  std::mt19937_64 rng(15);
  NormalForm N;
  N.omega = golden(10);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Series F = random_series(rng, 2, 5, 1, 5, 4);
    Series expect(2, 4, true);
    for (int j = 0; j < 2; ++j) expect = expect + N.omega.omega[j] * derivative_angle(F, j);
    const Series got = poisson_bracket(F, N.as_series());
    const double scale = std::max(norm(expect), 1e-300);
    worst = std::max(worst, norm(got - expect) / scale);
  }
  return property("bracket_normal_form", worst, 1e-14, "{F, e + omega.I} - omega . dF/dtheta");
}

PropertyResult homological_residual() {
  std::mt19937_64 rng(21);
  NormalForm N;
  N.omega = golden(30);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Series R = random_series(rng, 2, 30, 1, 8, 4);
    const Series F = solve_homological(R, N);
    const Series residual = poisson_bracket(F, N.as_series()) - (R - angle_average(R));
    worst = std::max(worst, norm(residual) / norm(R));
  }
  return property("homological_residual", worst, 1e-12, "|{F,N} - (R - [R])| / |R|, K <= 30");
}

PropertyResult diophantine_certification() {
  const auto w = quadratic_irrational_frequency(2);
  const auto good = certify(w, 0.25, 1.2, 200);
  const bool golden_ok = std::holds_alternative<FrequencyVector>(good);
  const std::vector<double> resonant{1.0, 1.5};
  const auto bad = certify(resonant, 0.1, 1.0, 6);
  bool found = false;
  if (const auto* ce = std::get_if<Counterexample>(&bad)) {
    found = ce->k == std::vector<int>{3, -2};
  }
  const double value = (golden_ok ? 0.0 : 1.0) + (found ? 0.0 : 1.0);
  return property("diophantine_certificate", value, 0.0,
                  "golden ratio certified to |k| = 200; (1, 1.5) gives k = (3, -2)");
}

PropertyResult lie_transform_exact() {
  const FrequencyVector om = golden(10);
  NormalForm N;
  N.omega = om;
  const double eps = 1e-3;
  const int k1[] = {1, 0};
  const Series H = N.as_series() - Series::constant(2, N.energy);
  const Series F = Series::sine(2, k1, eps / om.omega[0]);
  LieOptions opt;
  opt.weights = {kR, kS};
  const LieResult r = lie_transform(H, F, opt);
  const Series expect = H - Series::cosine(2, k1, eps);
  return property("lie_transform_exact", norm(r.value - expect), 1e-18,
                  "omega.I o X_F = omega.I - eps cos theta1 for F = eps/omega1 sin theta1");
}

PropertyResult one_step_exact() {
  const double eps = 1e-8;
  const double s = 1.0;
  const int k1[] = {1, 0};
  const Series P = Series::cosine(2, k1, eps);
  StepParams p;
  const double nu = 2.2;
  p.eta = 0.1 * std::pow(4.0, -nu);
  p.sigma = s / 20.0;
  p.K = static_cast<long long>(std::ceil(std::log(2.0 / (p.eta * p.eta)) / p.sigma));
  NormalForm N;
  N.omega = golden(static_cast<int>(p.K));
  p.h = N.omega.alpha / (2.0 * std::pow(static_cast<double>(p.K), nu));
  p.r = 1e-3;
  p.s = s;
  p.epsilon = weighted_norm(P, p.r, p.s);
  const StepResult step = kam_step(N, P, p);
  const double p_plus = weighted_norm(step.P_next, p.eta * p.r, s - 5.0 * p.sigma);

  const std::vector<KamTransform> ts{step.transform};
  const Embedding e = compose_embedding(ts, N.omega.omega, 16);
  const Weights flat{1.0, 1e-9};
  double err = weighted_distance(e.v[0], Series::cosine(2, k1, -eps), flat) +
               weighted_norm(e.v[1], flat);
  for (const auto& u : e.u) err += weighted_norm(u, flat);
  const double phi = step.transform.shift.displacement();

  const double value =
      std::max({p_plus / (1e-14 * eps), err / (1e-12 * eps), phi > 0.0 ? 2.0 : 0.0});
  std::ostringstream d;
  d << "|P+| = " << p_plus << ", |v + eps cos theta1| + |u| = " << err
    << ", |phi - Id| = " << phi;
  return property("one_step_exact", value, 1.0, d.str());
}

PropertyResult contraction() {
  const FrequencyVector om = golden(10);
  const IntegrableSystem sys = IntegrableSystem::quadratic(2);
  const int k1[] = {1, 0};
  const int k2[] = {1, 1};
  const double eps = 1e-14;
  const Series f = Series::cosine(2, k1, eps) + Series::cosine(2, k2, eps);
  const Mode mode = Mode::theorem1;
  const PerturbationSetup probe = parameterize(sys, f, om, 1.0, 1.0, mode);
  const double r = choose_radius(mode, eps, om.alpha, 1.0, om.nu(), probe.M, 0.1);
  const PerturbationSetup setup = parameterize(sys, f, om, r, 1.0, mode);
  ScheduleOverrides ov;
  ov.eta = 0.1;
  ov.max_iter = 5;
  ov.M = setup.M;
  const IterationSchedule S = build_schedule({r, 1.0, 1.0}, om, setup.eps, mode, ov);
  RunOptions ro;
  ro.compose = false;
  const RunResult run = run_iteration(setup.N, setup.P, setup.Q, S, ro);
  double worst = 0.0;
  int compliant = 0;
  for (const auto& st : run.report.steps) {
    worst = std::max(worst, st.report.contraction_ratio);
    if (st.report.compliant) ++compliant;
  }
  std::ostringstream d;
  d << run.report.steps.size() << " steps, " << compliant << " compliant, kappa = " << S.kappa;
  const bool enough = run.report.steps.size() == 5 && compliant == 5;
  return property("contraction", enough ? worst : std::numeric_limits<double>::infinity(),
                  S.kappa, d.str());
}

// Individual checks may throw; a thrown check is recorded as failed.
PropertyResult guarded(const std::string& name, const std::function<PropertyResult()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    PropertyResult p;
    p.name = name;
    p.passed = false;
    p.value = std::numeric_limits<double>::infinity();
    p.detail = std::string("threw: ") + e.what();
    return p;
  }
}

}  // namespace

bool VerifyReport::passed() const {
  return std::all_of(properties.begin(), properties.end(),
                     [](const PropertyResult& p) { return p.passed; });
}

std::vector<std::string> VerifyReport::failed() const {
  std::vector<std::string> out;
  for (const auto& p : properties) {
    if (!p.passed) out.push_back(p.name);
  }
  return out;
}

nlohmann::json VerifyReport::to_json() const {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& p : properties) {
    props.push_back({{"name", p.name},
                     {"passed", p.passed},
                     {"value", p.value},
                     {"bound", p.bound},
                     {"detail", p.detail}});
  }
  return {{"passed", passed()}, {"failed", failed()}, {"properties", props}};
}

VerifyReport run_verify(const std::string& fault) {
  const Bracket br = fault == "bracket_sign"
                         ? Bracket(faulty_bracket)
                         : Bracket([](const Series& f, const Series& g) { return poisson_bracket(f, g); });
  VerifyReport rep;
  rep.properties.push_back(guarded("bracket_antisymmetry", [&] { return algebra_antisymmetry(br); }));
  rep.properties.push_back(guarded("bracket_jacobi", [&] { return algebra_jacobi(br); }));
  rep.properties.push_back(guarded("bracket_leibniz", [&] { return algebra_leibniz(br); }));
  rep.properties.push_back(guarded("norm_submultiplicative", algebra_submultiplicative));
  rep.properties.push_back(guarded("bracket_normal_form", bracket_normal_form));
  rep.properties.push_back(guarded("homological_residual", homological_residual));
  rep.properties.push_back(guarded("diophantine_certificate", diophantine_certification));
  rep.properties.push_back(guarded("lie_transform_exact", lie_transform_exact));
  rep.properties.push_back(guarded("one_step_exact", one_step_exact));
  rep.properties.push_back(guarded("contraction", contraction));
  return rep;
}

}  // namespace kam::cli
