// Acceptance driver: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   acceptance [--work DIR]
//
// Criteria 1 to 5 call the library directly. Criteria 6 to 10 go through the
// command layer and read back the artifacts it writes, so they also exercise
// the configuration, manifest and CSV paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "conjugation_oracle.hpp"
#include "kam/application.hpp"
#include "kam/diophantine.hpp"
#include "kam/errors.hpp"
#include "kam/kam_step.hpp"
#include "kam/poisson.hpp"
#include "kam/schedule.hpp"
#include "kam_cli/config.hpp"
#include "kam_cli/runner.hpp"
#include "random_series.hpp"

namespace {

using namespace kam;
namespace fs = std::filesystem;
using nlohmann::json;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

int column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw std::runtime_error("missing column " + name);
}

FrequencyVector golden(int K) {
  return extend_certificate(
      FrequencyVector{quadratic_irrational_frequency(2), 0.25, 1.2, 0, {}, 0.0}, K);
}

NormalForm form_of(const FrequencyVector& w) {
  NormalForm N;
  N.omega = w;
  return N;
}

StepParams practical_params(const NormalForm& N, const Series& P, double eta, double r, double s) {
  StepParams p;
  p.eta = eta;
  p.sigma = s / 20.0;
  p.r = r;
  p.s = s;
  p.K = static_cast<long long>(std::ceil(std::log(2.0 / (eta * eta)) / p.sigma));
  p.h = N.omega.alpha / (2.0 * std::pow(static_cast<double>(p.K), N.omega.nu()));
  p.epsilon = weighted_norm(P, r, s);
  return p;
}

kam::cli::Outcome run_config(const std::string& text, const fs::path& out) {
  fs::remove_all(out);
  std::ostringstream log;
  return kam::cli::run(kam::cli::parse_config_text(text), out, log);
}

// ----------------------------------------------------------------- criteria

Verdict algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  const Weights w{0.5, 0.3};
  double anti = 0.0, jacobi = 0.0, leibniz = 0.0, submult = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Series f = test::random_series(rng, 2, 5, 2, 5);
    const Series g = test::random_series(rng, 2, 5, 2, 5);
    const Series h = test::random_series(rng, 2, 5, 2, 5);
    const Series fg = poisson_bracket(f, g);
    if (weighted_norm(fg, w) > 0.0) {
      anti = std::max(anti, weighted_norm(fg + poisson_bracket(g, f), w) / weighted_norm(fg, w));
    }
    const Series a = poisson_bracket(f, poisson_bracket(g, h));
    const Series b = poisson_bracket(g, poisson_bracket(h, f));
    const Series c = poisson_bracket(h, fg);
    const double js = weighted_norm(a, w) + weighted_norm(b, w) + weighted_norm(c, w);
    if (js > 0.0) jacobi = std::max(jacobi, weighted_norm(a + b + c, w) / js);
    const Series lhs = poisson_bracket(f, multiply(g, h));
    const Series rhs = multiply(fg, h) + multiply(g, poisson_bracket(f, h));
    const double ls = weighted_norm(lhs, w) + weighted_norm(rhs, w);
    if (ls > 0.0) leibniz = std::max(leibniz, weighted_norm(lhs - rhs, w) / ls);
    submult = std::max(submult, weighted_norm(multiply(f, g), w) /
                                    (weighted_norm(f, w) * weighted_norm(g, w)));
  }
  const double secs = seconds_since(t0);
  return {anti <= 1e-14 && jacobi <= 1e-10 && leibniz <= 1e-10 && submult <= 1.0 + 1e-12 &&
              secs < 10.0,
          "antisym " + fmt(anti) + ", jacobi " + fmt(jacobi) + ", leibniz " + fmt(leibniz) +
              ", |fg|/|f||g| max " + fmt(submult) + ", " + fmt(secs) + " s"};
}

Verdict homological() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(102);
  const NormalForm N = form_of(golden(30));
  const Weights w{0.5, 0.3};
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Series R = test::random_series(rng, 2, 30, 1, 10);
    const Series F = solve_homological(R, N);
    const Series res = poisson_bracket(F, N.as_series()) - (R - angle_average(R));
    worst = std::max(worst, weighted_norm(res, w) / weighted_norm(R, w));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5.0, "max relative residual " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Verdict one_step() {
  const double eps = 1e-8;
  const int k10[] = {1, 0};
  const Series P = Series::cosine(2, k10, eps);
  NormalForm N = form_of(golden(10));
  const double eta = 0.1 * std::pow(4.0, -N.omega.nu());
  StepParams p = practical_params(N, P, eta, 1e-3, 1.0);
  N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
  const StepResult step = kam_step(N, P, p);
  const double p_plus = weighted_norm(step.P_next, p.eta * p.r, p.s - 5 * p.sigma);

  const std::vector<KamTransform> ts{step.transform};
  const Embedding e = compose_embedding(ts, N.omega.omega, 16);
  const Weights flat{1.0, 1e-9};
  const double omega1 = N.omega.omega[0];
  double v_err = weighted_distance(e.v[0], Series::cosine(2, k10, -eps / omega1), flat) +
                 weighted_norm(e.v[1], flat);
  for (const auto& u : e.u) v_err += weighted_norm(u, flat);
  const double phi = step.transform.shift.displacement() + step.transform.shift.jacobian_defect();
  return {p_plus <= 1e-14 * eps && v_err <= 1e-12 * eps && phi == 0.0,
          "|P+|/eps " + fmt(p_plus / eps) + ", |v - closed form|/eps " + fmt(v_err / eps) +
              ", |phi - Id| " + fmt(phi)};
}

Verdict contraction() {
  const auto t0 = std::chrono::steady_clock::now();
  const double eps = 1e-14;
  const int k10[] = {1, 0}, k11[] = {1, 1};
  const FrequencyVector w = golden(10);
  const IntegrableSystem sys = IntegrableSystem::quadratic(2);
  const Series f = Series::cosine(2, k10, eps) + Series::cosine(2, k11, eps);
  const double M = parameterize(sys, f, w, 1.0, 1.0, Mode::theorem1).M;
  const double r = choose_radius(Mode::theorem1, eps, w.alpha, 1.0, w.nu(), M, 0.1);
  const PerturbationSetup setup = parameterize(sys, f, w, r, 1.0, Mode::theorem1);
  ScheduleOverrides ov;
  ov.eta = 0.1;
  ov.max_iter = 6;
  ov.M = setup.M;
  const IterationSchedule S = build_schedule({r, 1.0, 1.0}, w, setup.eps, Mode::theorem1, ov);
  RunOptions ro;
  ro.compose = false;
  const RunResult res = run_iteration(setup.N, setup.P, setup.Q, S, ro);
  int streak = 0, best = 0;
  double worst = 0.0;
  for (const auto& st : res.report.steps) {
    const bool ok = st.report.compliant && st.report.contraction_ratio <= 0.09;
    streak = ok ? streak + 1 : 0;
    best = std::max(best, streak);
    worst = std::max(worst, st.report.contraction_ratio);
  }

  // Schedule identities with the default eta.
  ScheduleOverrides pov;
  pov.max_iter = 10;
  const double eps0 = 1e-20, r0 = 1e-3;
  const IterationSchedule Sp = build_schedule({r0, 1.0, 1.0}, w, eps0, Mode::theorem1, pov);
  double ident = 0.0;
  auto rel = [&](double got, double want) {
    ident = std::max(ident, std::abs(got - want) / std::abs(want));
  };
  for (int i = 0; i < Sp.steps(); ++i) {
    rel(Sp.sigma[i], (1.0 / 20.0) * std::pow(2.0, -i));
    rel(Sp.h[i], std::pow(2.0, -i * Sp.nu) * Sp.h[0]);
    rel(Sp.eps[i], std::pow(Sp.kappa, i) * eps0);
    rel(Sp.r_i[i], std::pow(Sp.eta, i) * r0);
  }
  rel(Sp.eta, 0.1 * std::pow(4.0, -Sp.nu));
  rel(Sp.kappa, 9 * Sp.eta * Sp.eta);
  const double secs = seconds_since(t0);
  return {best >= 5 && ident <= 1e-14 && Sp.default_eta && secs < 120.0,
          std::to_string(best) + " consecutive compliant steps <= 0.09 (max ratio " + fmt(worst) +
              "), schedule identities " + fmt(ident) + ", " + fmt(secs) + " s"};
}

Verdict conjugation() {
  std::mt19937_64 rng(105);
  const double r = 1e-2, eta = 0.1;
  const int k00[] = {0, 0}, m20[] = {2, 0}, m11[] = {1, 1}, m02[] = {0, 2};
  const int m10[] = {1, 0}, m01[] = {0, 1};
  const Series Q = Series::monomial(2, k00, m20, 0.5) + Series::monomial(2, k00, m11, 0.25) +
                   Series::monomial(2, k00, m02, 1.0);
  double worst = 0.0;
  bool q_identical = true;
  std::uniform_real_distribution<double> drift(-1e-9, 1e-9);
  for (int t = 0; t < 10; ++t) {
    // Small average drift in the actions makes the frequency correction nontrivial.
    const Series P = test::random_angle_series(rng, 2, 4, 4, 1e-8) +
                     Series::monomial(2, k00, m10, drift(rng)) +
                     Series::monomial(2, k00, m01, drift(rng));
    NormalForm N = form_of(golden(10));
    StepParams p = practical_params(N, P, eta, r, 1.0);
    N.omega = extend_certificate(N.omega, static_cast<int>(p.K));
    StepOptions opt;
    opt.lie_tol_rel = 1e-20;
    const double I0[] = {eta * r / 2, -eta * r / 3};
    test::ConjugationCheck chk;
    if (t % 2 == 0) {
      const StepResult out = kam_step(N, P, p, opt);
      chk = test::conjugation_defect(N, P, std::nullopt, out.next, out.P_next,
                                     out.transform.shift, I0, 16);
    } else {
      const StepResultQ out = kam_step_q(N, P, Q, 2.0, p, opt);
      q_identical = q_identical && out.Q.size() == Q.size();
      for (std::size_t i = 0; q_identical && i < Q.size(); ++i) {
        q_identical = out.Q.terms()[i].first == Q.terms()[i].first &&
                      out.Q.terms()[i].second.value == Q.terms()[i].second.value;
        for (int l = 0; q_identical && l < kMaxDim; ++l) {
          q_identical = out.Q.terms()[i].second.d[l] == Q.terms()[i].second.d[l];
        }
      }
      chk = test::conjugation_defect(N, P, Q, out.next, out.P_next, out.transform.shift, I0, 16);
    }
    worst = std::max(worst, chk.defect / p.epsilon);
  }
  return {worst <= 1e-8 && q_identical,
          "max defect/eps " + fmt(worst) + " over 10 instances on 16x16, Q " +
              (q_identical ? "bit-identical" : "modified")};
}

Verdict bracket_q(const fs::path& work) {
  const fs::path out = work / "bracket_q";
  const auto o = run_config(R"({"kind": "iterate", "mode": "theorem2", "eps": 1e-14,
      "overrides": {"eta": 0.1, "delta": 3e-6, "max_iter": 5}})", out);
  if (o.exit_code != 0) return {false, "run failed: " + o.message};
  const json m = json::parse(slurp(out / "manifest.json"));
  int compliant = 0, steps = 0;
  double worst = 0.0;
  bool ok = true;
  for (const auto& st : m.at("report").at("steps")) {
    ++steps;
    const json& rep = st.at("report");
    if (!rep.at("compliant").get<bool>()) continue;
    ++compliant;
    const double n = rep.at("bracket_q").at("norm"), b = rep.at("bracket_q").at("bound");
    worst = std::max(worst, n / b);
    ok = ok && n <= b;
  }
  return {ok && steps == 5 && compliant > 0,
          std::to_string(steps) + " steps, " + std::to_string(compliant) +
              " compliant, max |{Q,F}|/bound " + fmt(worst)};
}

Verdict invariance(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = work / "invariance";
  const auto o = run_config(R"({"kind": "iterate", "mode": "theorem2", "eps": 1e-6})", out);
  const double secs = seconds_since(t0);
  if (o.exit_code != 0) return {false, "run failed: " + o.message};
  const json m = json::parse(slurp(out / "manifest.json"));
  const double res = m.at("torus").at("invariance_residual");
  return {res <= 1e-9 && secs < 60.0, "residual " + fmt(res) + ", " + fmt(secs) + " s"};
}

Verdict scaling(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = work / "scaling";
  const auto o = run_config(R"({"kind": "scaling", "modes": ["theorem2", "theorem1"],
      "eps_list": [1e-7, 3.1622776601683795e-7, 1e-6, 3.1622776601683795e-6, 1e-5,
                   3.1622776601683795e-5, 1e-4]})", out);
  const double secs = seconds_since(t0);
  if (o.exit_code != 0) return {false, "run failed: " + o.message};
  const json sl = json::parse(slurp(out / "slopes.json"));
  const double d2 = sl.at("distance").at("theorem2").at("slope");
  const double b1 = sl.at("bound").at("theorem1").at("slope");
  const auto rows = read_csv(out / "scaling.csv");
  const int cm = column(rows[0], "mode"), cd = column(rows[0], "distance"),
            cb = column(rows[0], "bound");
  int t2 = 0, below = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][cm] != "theorem2") continue;
    ++t2;
    if (!rows[i][cd].empty() && std::stod(rows[i][cd]) <= std::stod(rows[i][cb])) ++below;
  }
  return {d2 >= 0.9 && d2 <= 1.1 && std::abs(b1 - 0.5) <= 1e-12 && t2 == 7 && below == t2 &&
              secs < 600.0,
          "theorem2 distance slope " + fmt(d2) + ", theorem1 bound slope " +
              std::to_string(b1) + ", " + std::to_string(below) + "/" + std::to_string(t2) +
              " theorem2 distances below bound, " + fmt(secs) + " s"};
}

Verdict truncation(const fs::path& work) {
  // Direct route: adaptive truncation on random inputs.
  std::mt19937_64 rng(109);
  bool direct = true;
  for (int t = 0; t < 20; ++t) {
    const Series P = test::random_series(rng, 2, 400, 1, 30, 4, 1e-6);
    StepParams p;
    p.eta = 0.1;
    p.sigma = 0.01;
    p.r = 0.1;
    p.s = 0.2;
    p.epsilon = weighted_norm(P, p.r, p.s);
    const Approximation a = russmann_truncate(P, p);
    direct = direct && a.error <= 8 * p.eta * p.eta * p.epsilon;
  }
  // Run route: every step of the default benchmark.
  const auto rows = read_csv(work / "invariance" / "iterations.csv");
  if (rows.size() < 2) return {false, "no iteration rows"};
  const int ce = column(rows[0], "truncation_error"), cb = column(rows[0], "truncation_budget"),
            ck = column(rows[0], "K_formula_ok");
  int steps = 0, within = 0, formula = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ++steps;
    if (std::stod(rows[i][ce]) <= std::stod(rows[i][cb])) ++within;
    if (rows[i][ck] == "1" || rows[i][ck] == "true") ++formula;
  }
  return {direct && within == steps,
          "random inputs " + std::string(direct ? "within" : "over") + " 8 eta^2 eps, " +
              std::to_string(within) + "/" + std::to_string(steps) +
              " benchmark steps within budget, K formula sufficed in " + std::to_string(formula) +
              "/" + std::to_string(steps)};
}

Verdict reproducible(const fs::path& work) {
  const std::string text = R"({"kind": "iterate", "eps": 1e-7, "output": "repro"})";
  const fs::path a = work / "repro_a", b = work / "repro_b";
  if (run_config(text, a).exit_code != 0 || run_config(text, b).exit_code != 0) {
    return {false, "run failed"};
  }
  json ma = json::parse(slurp(a / "manifest.json")), mb = json::parse(slurp(b / "manifest.json"));
  int compared = 0;
  for (const auto& name : ma.at("files")) {
    const std::string f = name.get<std::string>();
    if (slurp(a / f) != slurp(b / f)) return {false, f + " differs"};
    ++compared;
  }
  ma.erase("header");
  mb.erase("header");
  if (ma.dump() != mb.dump()) return {false, "manifest body differs"};
  return {true, std::to_string(compared) + " artifacts byte-identical, manifest equal outside header"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "kam_acceptance";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--work") work = argv[i + 1];
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"algebra suite", algebra},
      {"homological oracle", homological},
      {"one-step exactness", one_step},
      {"contraction", contraction},
      {"conjugation identity", conjugation},
      {"{Q,F} bound", [&] { return bracket_q(work); }},
      {"invariance a-posteriori", [&] { return invariance(work); }},
      {"scaling exponents", [&] { return scaling(work); }},
      {"truncation budget", [&] { return truncation(work); }},
      {"reproducibility", [&] { return reproducible(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": "
              << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
