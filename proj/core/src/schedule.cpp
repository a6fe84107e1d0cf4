#include "kam/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kam {

namespace {

ThresholdMargin margin_of(std::string name, int step, double value, double bound) {
  ThresholdMargin m;
  m.name = std::move(name);
  m.step = step;
  m.value = value;
  m.bound = bound;
  m.margin = value > 0.0 ? bound / value : std::numeric_limits<double>::infinity();
  return m;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ThresholdError*>(&e)) return 2;
  return 3;
}

std::string inequality_of(const std::exception& e) {
  if (const auto* t = dynamic_cast<const ThresholdError*>(&e)) return t->inequality();
  return {};
}

nlohmann::json margins_json(const std::vector<ThresholdMargin>& ms) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : ms) {
    out.push_back({{"name", m.name},
                   {"step", m.step},
                   {"value", m.value},
                   {"bound", m.bound},
                   {"margin", m.margin}});
  }
  return out;
}

}  // namespace

void DomainParams::validate() const {
  if (!(r > 0.0 && r <= 1.0)) throw DomainError("domain radius r must lie in (0, 1]");
  if (!(s > 0.0 && s <= 1.0)) throw DomainError("strip width s must lie in (0, 1]");
  if (!(h >= 0.0 && h <= 1.0)) throw DomainError("parameter radius h must lie in [0, 1]");
}

const char* to_string(Mode m) { return m == Mode::theorem1 ? "theorem1" : "theorem2"; }

Mode mode_from_string(const std::string& text) {
  if (text == "theorem1") return Mode::theorem1;
  if (text == "theorem2") return Mode::theorem2;
  throw DomainError("unknown mode '" + text + "' (expected theorem1 or theorem2)");
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::tolerance:
      return "tolerance";
    case StopReason::max_iter:
      return "max_iter";
    case StopReason::zero_perturbation:
      return "zero_perturbation";
  }
  return "unknown";
}

StepParams IterationSchedule::step_params(int i, double measured_eps) const {
  if (i < 0 || i >= steps()) throw DomainError("step index outside the schedule");
  StepParams p;
  p.eta = eta;
  p.sigma = sigma[i];
  p.h = h[i];
  p.K = K[i];
  p.r = r_i[i];
  p.s = s_i[i];
  p.epsilon = measured_eps;
  p.c_K = c_K;
  p.implicit = implicit;
  return p;
}

IterationSchedule build_schedule(const DomainParams& dom, const FrequencyVector& omega,
                                 double eps0, Mode mode, const ScheduleOverrides& ov) {
  dom.validate();
  if (!(eps0 >= 0.0) || !std::isfinite(eps0)) {
    throw DomainError("build_schedule: eps0 must be finite and nonnegative");
  }
  if (ov.max_iter < 1) throw DomainError("build_schedule: max_iter must be at least 1");
  if (!(omega.alpha > 0.0)) throw DomainError("build_schedule: alpha must be positive");

  IterationSchedule S;
  S.mode = mode;
  S.n = omega.dim();
  S.nu = omega.nu();
  S.alpha = omega.alpha;
  S.gamma = ov.gamma;
  S.delta = ov.delta;
  S.M = ov.M;
  S.c_K = ov.c_K;
  S.implicit = ov.implicit;
  S.eps0 = eps0;
  S.r = dom.r;
  S.s = dom.s;
  S.h_domain = dom.h;
  S.default_eta = !ov.eta.has_value();
  S.eta = ov.eta ? *ov.eta : 0.1 * std::pow(4.0, -S.nu);
  if (!(S.eta > 0.0 && S.eta < 0.125)) {
    std::ostringstream msg;
    msg << "build_schedule: eta must satisfy 0 < eta < 1/8 (got " << S.eta << ")";
    throw DomainError(msg.str());
  }
  S.kappa = 9.0 * S.eta * S.eta;

  const double s_nu = std::pow(dom.s, S.nu);
  S.largest_eps0 = S.gamma * S.alpha * dom.r * s_nu;
  S.theorem_margins.push_back(
      margin_of("|P| <= gamma alpha r s^nu", -1, eps0, S.largest_eps0));
  if (mode == Mode::theorem2) {
    S.theorem_margins.push_back(
        margin_of("r <= delta M^-1 alpha s^nu", -1, dom.r, S.delta * S.alpha * s_nu / S.M));
  }
  S.theorem_margins.push_back(margin_of("alpha s^nu <= h", -1, S.alpha * s_nu, dom.h));
  for (const auto& m : S.theorem_margins) {
    if (m.margin < 1.0) {
      std::ostringstream msg;
      msg << "schedule infeasible: " << m.name << " fails (value " << m.value << ", bound "
          << m.bound << ")";
      if (m.name.rfind("|P|", 0) == 0) {
        msg << "; largest admissible eps0 is " << S.largest_eps0 << " (gamma = " << S.gamma
            << ")";
      }
      throw ThresholdError(m.name, msg.str());
    }
  }

  const double sigma0 = dom.s / 20.0;
  const long long K0 = std::max<long long>(
      1, static_cast<long long>(std::ceil(S.c_K / sigma0 * std::log(S.n / (S.eta * S.eta)))));
  double s_cur = dom.s;
  for (int i = 0; i < ov.max_iter; ++i) {
    const double sig = std::ldexp(sigma0, -i);
    const long long K = K0 << i;
    S.sigma.push_back(sig);
    S.s_i.push_back(s_cur);
    S.K.push_back(K);
    S.h.push_back(S.alpha / (2.0 * std::pow(static_cast<double>(K), S.nu)));
    S.eps.push_back(eps0 * std::pow(S.kappa, i));
    S.r_i.push_back(dom.r * std::pow(S.eta, i));
    s_cur -= 5.0 * sig;
  }

  const auto& c = S.implicit;
  for (int i = 0; i < S.steps(); ++i) {
    const double sn = std::pow(S.sigma[i], S.nu);
    S.step_margins.push_back(margin_of("eps <. alpha eta^2 r sigma^nu", i, S.eps[i],
                                       c.eps_alpha * S.alpha * S.eta * S.eta * S.r_i[i] * sn));
    if (mode == Mode::theorem2) {
      S.step_margins.push_back(margin_of("r <. M^-1 alpha eta^2 sigma^nu", i, S.r_i[i],
                                         c.r_alpha * S.alpha * S.eta * S.eta * sn / S.M));
    }
    S.step_margins.push_back(margin_of("eps <. h r", i, S.eps[i], c.eps_hr * S.h[i] * S.r_i[i]));
  }

  // Successive ratios from neighbouring entries: independent of eps0 and
  // free of the underflow that the products themselves run into.
  bool decreasing = true;
  for (int i = 0; i + 1 < S.steps(); ++i) {
    const double hq = S.h[i] / S.h[i + 1];
    const double rq = S.r_i[i] / S.r_i[i + 1];
    const double ratio_hr = S.kappa * hq * rq;
    const double ratio_h2r = S.kappa * hq * hq * rq;
    if (i == 0) {
      S.decrease_ratio_hr = ratio_hr;
      S.decrease_ratio_h2r = ratio_h2r;
    }
    if (!(ratio_hr < 1.0) || !(ratio_h2r < 1.0)) decreasing = false;
  }
  S.geometric_decrease = decreasing;
  if (!decreasing && S.default_eta) {
    throw ThresholdError("eps_i (h_i^2 r_i)^-1 decreasing",
                         "schedule infeasible: eps_i/(h_i r_i) or eps_i/(h_i^2 r_i) is not "
                         "geometrically decreasing");
  }
  return S;
}

RunResult run_iteration(const NormalForm& N0, const Series& P0, const std::optional<Series>& Q0,
                        const IterationSchedule& S, const RunOptions& options) {
  const int n = N0.dim();
  if (P0.dim() != n) throw DimensionMismatch("run_iteration: P0 dimension mismatch");
  if (n != S.n) throw DimensionMismatch("run_iteration: schedule dimension mismatch");
  const std::vector<double> anchor = N0.omega.omega;

  RunResult out;
  ConvergenceReport& rep = out.report;
  NormalForm N = N0;
  Series P = P0;
  const double eps_first = weighted_norm(P0, S.r_i[0], S.s_i[0]);
  if (eps_first > S.eps[0] * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "run_iteration: |P0| = " << eps_first << " exceeds the schedule bound " << S.eps[0];
    throw DomainError(msg.str());
  }

  double r_last = S.r_i[0];
  double s_last = S.s_i[0];
  bool stopped = false;
  if (eps_first == 0.0) {
    rep.stop = StopReason::zero_perturbation;
    stopped = true;
  }
  for (int i = 0; i < S.steps() && !stopped; ++i) {
    const double measured = weighted_norm(P, S.r_i[i], S.s_i[i]);
    r_last = S.r_i[i];
    s_last = S.s_i[i];
    if (i > 0 && measured <= options.stop_tol * eps_first) {
      rep.stop = StopReason::tolerance;
      stopped = true;
      break;
    }
    StepRecord rec;
    rec.index = i;
    rec.sigma = S.sigma[i];
    rec.s = S.s_i[i];
    rec.K = S.K[i];
    rec.h = S.h[i];
    rec.r = S.r_i[i];
    rec.eps_schedule = S.eps[i];
    rec.eps_measured = measured;
    rec.schedule_bound_held = measured <= S.eps[i] * (1.0 + 1e-12);
    try {
      if (options.step.strict && !rec.schedule_bound_held) {
        std::ostringstream msg;
        msg << "step " << i << ": measured |P_i| = " << measured
            << " exceeds the schedule eps_i = " << S.eps[i];
        throw ThresholdError("|P_i| <= kappa^i eps", msg.str());
      }
      const int degree = P.fourier_degree();
      if (N.omega.K_verified < degree) N.omega = extend_certificate(N.omega, degree);
      const StepParams params = S.step_params(i, measured);
      KamTransform transform;
      if (Q0) {
        StepResultQ r = kam_step_q(N, P, *Q0, S.M, params, options.step);
        N = std::move(r.next);
        P = std::move(r.P_next);
        transform = std::move(r.transform);
        rec.report = std::move(r.report);
      } else {
        StepResult r = kam_step(N, P, params, options.step);
        N = std::move(r.next);
        P = std::move(r.P_next);
        transform = std::move(r.transform);
        rec.report = std::move(r.report);
      }
      rep.accumulated_tails += transform.lie_tail;
      rep.ratios.push_back(rec.report.contraction_ratio);
      out.transforms.push_back(std::move(transform));
      rep.steps.push_back(std::move(rec));
      r_last = S.eta * S.r_i[i];
      s_last = S.s_i[i] - 5.0 * S.sigma[i];
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "step " << i << " failed: " << e.what();
      rep.failure = msg.str();
      rep.certified_K = N.omega.K_verified;
      rep.steps.push_back(std::move(rec));
      throw IterationError(msg.str(), rep, exit_code_for(e), inequality_of(e));
    }
  }
  rep.final_eps = weighted_norm(P, r_last, s_last);
  rep.certified_K = N.omega.K_verified;
  out.final_normal_form = N;

  TorusResult& T = out.torus;
  const ParameterChain chain = parameter_chain(out.transforms, anchor);
  T.phi = chain.phi();
  T.phi_jacobian = chain.phi_jacobian();
  T.strip = S.s / 2.0;

  try {
    if (options.compose) {
      T.embedding = compose_embedding(out.transforms, anchor, options.grid_size,
                                      options.compose_options);
    } else {
      T.embedding = compose_embedding_series(out.transforms, anchor,
                                             options.compose_options.drop_abs);
    }
    if (options.series_crosscheck && options.compose) {
      const Embedding alt =
          compose_embedding_series(out.transforms, anchor, options.compose_options.drop_abs);
      const double scale = std::max(T.embedding.scale, std::numeric_limits<double>::min());
      T.series_crosscheck = embedding_distance(T.embedding, alt, T.strip) / scale;
    }
  } catch (const Error& e) {
    rep.failure = std::string("embedding composition failed: ") + e.what();
    throw IterationError(rep.failure, rep, exit_code_for(e), inequality_of(e));
  }

  Series H = N0.as_series(P0.max_degree()) + P0;
  if (Q0) H = H + *Q0;
  T.invariance_residual =
      verify_invariance(T.embedding, H, anchor, T.phi, anchor, options.residual_grid);

  double wd = 0.0;
  for (int a = 0; a < n; ++a) {
    wd = std::max(wd, weighted_norm(T.embedding.v[a], 1.0, T.strip) / S.r);
    wd = std::max(wd, weighted_norm(T.embedding.u[a], 1.0, T.strip) / S.s);
  }
  T.weighted_dist = wd;
  double pd = 0.0;
  for (int a = 0; a < n; ++a) pd = std::max(pd, std::abs(T.phi[a] - anchor[a]));
  T.phi_dist = pd;

  rep.est1 = check_est1(T, eps_first, S.r, S.s, S.alpha, S.nu, options.est1_c);
  return out;
}

Est1Margins check_est1(const TorusResult& T, double eps0, double r, double s, double alpha,
                       double nu, double c) {
  Est1Margins m;
  const double s_nu = std::pow(s, nu);
  m.embedding_value = T.weighted_dist;
  m.embedding_bound = c * eps0 / (alpha * r * s_nu);
  m.phi_value = T.phi_dist;
  m.phi_bound = c * eps0 / r;
  const int n = static_cast<int>(T.phi.size());
  double defect = 0.0;
  for (int a = 0; a < n; ++a) {
    double row = 0.0;
    for (int b = 0; b < n; ++b) {
      row += std::abs(T.phi_jacobian[a * n + b] - (a == b ? 1.0 : 0.0));
    }
    defect = std::max(defect, row);
  }
  m.phi_lipschitz_value = alpha * s_nu * defect;
  const auto ratio = [](double v, double b) { return b > 0.0 ? v / b : 0.0; };
  m.embedding_ratio = ratio(m.embedding_value, m.embedding_bound);
  m.phi_ratio = ratio(m.phi_value, m.phi_bound);
  m.phi_lipschitz_ratio = ratio(m.phi_lipschitz_value, m.phi_bound);
  return m;
}

double phi_lipschitz_fd(const std::vector<std::vector<double>>& anchors,
                        const std::vector<std::vector<double>>& phis) {
  if (anchors.size() != phis.size()) throw DimensionMismatch("phi_lipschitz_fd: size mismatch");
  double best = 0.0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (std::size_t b = a + 1; b < anchors.size(); ++b) {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t j = 0; j < anchors[a].size(); ++j) {
        num = std::max(num, std::abs((phis[a][j] - anchors[a][j]) - (phis[b][j] - anchors[b][j])));
        den = std::max(den, std::abs(anchors[a][j] - anchors[b][j]));
      }
      if (den > 0.0) best = std::max(best, num / den);
    }
  }
  return best;
}

nlohmann::json to_json(const IterationSchedule& S) {
  nlohmann::json j = {{"mode", to_string(S.mode)},
                      {"default_eta", S.default_eta},
                      {"eta", S.eta},
                      {"kappa", S.kappa},
                      {"nu", S.nu},
                      {"gamma", S.gamma},
                      {"delta", S.delta},
                      {"alpha", S.alpha},
                      {"M", S.M},
                      {"c_K", S.c_K},
                      {"eps0", S.eps0},
                      {"r", S.r},
                      {"s", S.s},
                      {"h", S.h_domain},
                      {"largest_eps0", S.largest_eps0},
                      {"geometric_decrease", S.geometric_decrease},
                      {"decrease_ratio_hr", S.decrease_ratio_hr},
                      {"decrease_ratio_h2r", S.decrease_ratio_h2r},
                      {"theorem_margins", margins_json(S.theorem_margins)},
                      {"implicit_constants",
                       {{"eps_alpha", S.implicit.eps_alpha},
                        {"eps_hr", S.implicit.eps_hr},
                        {"r_alpha", S.implicit.r_alpha},
                        {"estim2", S.implicit.estim2},
                        {"bracket_q", S.implicit.bracket_q}}}};
  j["sigma"] = S.sigma;
  j["s_i"] = S.s_i;
  j["K"] = S.K;
  j["h_i"] = S.h;
  j["eps_i"] = S.eps;
  j["r_i"] = S.r_i;
  return j;
}

nlohmann::json to_json(const ConvergenceReport& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"i", s.index},
                     {"sigma", s.sigma},
                     {"s", s.s},
                     {"K", s.K},
                     {"h", s.h},
                     {"r", s.r},
                     {"eps_schedule", s.eps_schedule},
                     {"eps_measured", s.eps_measured},
                     {"schedule_bound_held", s.schedule_bound_held},
                     {"report", to_json(s.report)}});
  }
  nlohmann::json est1 = {{"embedding_value", r.est1.embedding_value},
                         {"embedding_bound", r.est1.embedding_bound},
                         {"embedding_ratio", r.est1.embedding_ratio},
                         {"phi_value", r.est1.phi_value},
                         {"phi_bound", r.est1.phi_bound},
                         {"phi_ratio", r.est1.phi_ratio},
                         {"phi_lipschitz_value", r.est1.phi_lipschitz_value},
                         {"phi_lipschitz_ratio", r.est1.phi_lipschitz_ratio}};
  if (r.est1.phi_lipschitz_fd) est1["phi_lipschitz_fd"] = *r.est1.phi_lipschitz_fd;
  nlohmann::json j = {{"steps", steps},
                      {"ratios", r.ratios},
                      {"stop_reason", to_string(r.stop)},
                      {"final_eps", r.final_eps},
                      {"accumulated_tails", r.accumulated_tails},
                      {"certified_K", r.certified_K},
                      {"est1", est1}};
  if (!r.failure.empty()) j["failure"] = r.failure;
  return j;
}

nlohmann::json to_json(const TorusResult& t) {
  nlohmann::json j = {{"phi", t.phi},
                      {"phi_jacobian", t.phi_jacobian},
                      {"strip", t.strip},
                      {"weighted_dist", t.weighted_dist},
                      {"phi_dist", t.phi_dist},
                      {"invariance_residual", t.invariance_residual},
                      {"grid_size", t.embedding.grid_size},
                      {"aliasing", t.embedding.aliasing},
                      {"v_sup_bound", 0.0}};
  double vs = 0.0;
  for (const auto& v : t.embedding.v) {
    double acc = 0.0;
    for (const auto& term : v.terms()) acc += std::abs(term.second.value);
    vs = std::max(vs, acc);
  }
  j["v_sup_bound"] = vs;
  if (t.series_crosscheck) j["series_crosscheck"] = *t.series_crosscheck;
  return j;
}

}  // namespace kam
