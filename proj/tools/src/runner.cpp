#include "kam_cli/runner.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "kam_cli/output.hpp"
#include "kam_cli/verify.hpp"

namespace kam::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Prepared {
  IntegrableSystem sys;
  FrequencyVector omega;
  PerturbationSetup setup;
  IterationSchedule schedule;
};

Prepared prepare(const RunConfig& c, kam::Mode mode, double eps) {
  IntegrableSystem sys = integrable_system(c);
  const FrequencyVector omega = frequency_vector(c);
  const Series f = eps * perturbation_template(c);
  const PerturbationSetup probe = parameterize(sys, f, omega, 1.0, c.s, mode);
  const double r =
      choose_radius(mode, eps, omega.alpha, c.s, omega.nu(), probe.M, c.overrides.delta);
  PerturbationSetup setup = parameterize(sys, f, omega, r, c.s, mode);
  ScheduleOverrides ov = schedule_overrides(c);
  ov.M = setup.M;
  IterationSchedule schedule =
      build_schedule({r, c.s, c.overrides.h_domain}, omega, setup.eps, mode, ov);
  return {std::move(sys), omega, std::move(setup), std::move(schedule)};
}

json setup_json(const PerturbationSetup& s) {
  return {{"mode", kam::to_string(s.mode)},
          {"r", s.r},
          {"s", s.s},
          {"eps", s.eps},
          {"eps_f", s.eps_f},
          {"M", s.M},
          {"p0", s.p0}};
}

double min_margin(const StepReport& r) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : r.margins) m = std::min(m, c.margin);
  return m;
}

const std::vector<std::string> kIterationHeader = {
    "i",          "sigma",         "s",          "K",
    "K_formula",  "K_formula_ok",  "h",          "r",
    "eps_schedule", "eps_measured", "eps_out",   "ratio",
    "ratio_bound", "min_margin",   "compliant",  "truncation_error",
    "truncation_budget", "lie_tail"};

std::vector<std::string> iteration_row(int i, double sigma, double s, long long K, double h,
                                       double r, double eps_schedule, double eps_measured,
                                       const StepReport& rep) {
  return {std::to_string(i),
          format_double(sigma),
          format_double(s),
          std::to_string(K),
          std::to_string(rep.K_formula),
          rep.K_formula_sufficed ? "1" : "0",
          format_double(h),
          format_double(r),
          format_double(eps_schedule),
          format_double(eps_measured),
          format_double(rep.eps_out),
          format_double(rep.contraction_ratio),
          format_double(rep.contraction_bound),
          format_double(min_margin(rep)),
          rep.compliant ? "1" : "0",
          format_double(rep.truncation_error),
          format_double(rep.truncation_budget),
          format_double(rep.lie_tail)};
}

CsvTable iteration_table(const ConvergenceReport& rep) {
  CsvTable t(kIterationHeader);
  for (const auto& st : rep.steps) {
    t.add_row(iteration_row(st.index, st.sigma, st.s, st.K, st.h, st.r, st.eps_schedule,
                            st.eps_measured, st.report));
  }
  return t;
}

struct Assertion {
  std::string name;
  bool passed = true;
  std::string detail;
};

json assertions_json(const std::vector<Assertion>& as) {
  json out = json::array();
  for (const auto& a : as) out.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  return out;
}

// Contraction whenever every margin of the step holds.
std::vector<Assertion> step_assertions(const ConvergenceReport& rep) {
  std::vector<Assertion> out;
  for (const auto& st : rep.steps) {
    const auto& r = st.report;
    if (!r.compliant) continue;
    Assertion a;
    a.name = "contraction step " + std::to_string(st.index);
    a.passed = r.eps_out <= r.contraction_bound * r.eps_in * (1.0 + 1e-12);
    a.detail = "ratio " + format_double(r.contraction_ratio) + " vs " +
               format_double(r.contraction_bound);
    out.push_back(std::move(a));
  }
  return out;
}

int truncation_formula_count(const ConvergenceReport& rep, int* total) {
  int ok = 0;
  for (const auto& st : rep.steps) {
    ++*total;
    if (st.report.K_formula_sufficed) ++ok;
  }
  return ok;
}

class Artifacts {
 public:
  Artifacts(const RunConfig& c, fs::path dir) : dir_(std::move(dir)) {
    manifest_ = {{"header", manifest_header()}, {"kind", to_string(c.kind)}, {"config", echo_config(c)}};
  }

  json& manifest() { return manifest_; }
  void file(const std::string& name, const std::string& content) {
    write_atomic(dir_ / name, content);
    manifest_["files"].push_back(name);
  }
  void finish(const Outcome& o) {
    manifest_["status"] = o.exit_code == kExitOk ? "ok" : "failed";
    manifest_["exit_code"] = o.exit_code;
    manifest_["message"] = o.message;
    if (!o.inequality.empty()) manifest_["binding_inequality"] = o.inequality;
    write_atomic(dir_ / "manifest.json", dump_json(manifest_));
  }

 private:
  fs::path dir_;
  json manifest_;
};

Outcome run_step(const RunConfig& c, Artifacts& art, std::ostream& log) {
  Prepared p = prepare(c, c.mode, c.eps);
  const StepOptions opts = run_options(c).step;
  const StepParams params = p.schedule.step_params(0, p.setup.eps);
  NormalForm N = p.setup.N;
  const int degree = p.setup.P.fourier_degree();
  if (N.omega.K_verified < degree) N.omega = extend_certificate(N.omega, degree);
  StepReport rep;
  Series P_next;
  if (p.setup.Q) {
    StepResultQ r = kam_step_q(N, p.setup.P, *p.setup.Q, p.schedule.M, params, opts);
    rep = r.report;
    P_next = r.P_next;
  } else {
    StepResult r = kam_step(N, p.setup.P, params, opts);
    rep = r.report;
    P_next = r.P_next;
  }
  CsvTable t(kIterationHeader);
  t.add_row(iteration_row(0, params.sigma, params.s, params.K, params.h, params.r,
                          p.schedule.eps[0], p.setup.eps, rep));
  art.file("iterations.csv", t.str());
  auto& m = art.manifest();
  m["setup"] = setup_json(p.setup);
  m["schedule"] = to_json(p.schedule);
  m["step"] = to_json(rep);
  log << "step: |P| = " << p.setup.eps << " -> " << rep.eps_out << " (ratio "
      << rep.contraction_ratio << ", bound " << rep.contraction_bound << ")\n";
  if (c.strict && rep.compliant &&
      rep.eps_out > rep.contraction_bound * rep.eps_in * (1.0 + 1e-12)) {
    return {kExitVerifyFailed, "contraction assertion failed in a compliant step", {}};
  }
  return {kExitOk, "step completed", {}};
}

Outcome run_iterate(const RunConfig& c, Artifacts& art, std::ostream& log) {
  Prepared p = prepare(c, c.mode, c.eps);
  auto& m = art.manifest();
  m["setup"] = setup_json(p.setup);
  m["schedule"] = to_json(p.schedule);
  RunResult res;
  try {
    res = run_iteration(p.setup.N, p.setup.P, p.setup.Q, p.schedule, run_options(c));
  } catch (const IterationError& e) {
    m["report"] = to_json(e.report());
    art.file("iterations.csv", iteration_table(e.report()).str());
    throw;
  }
  art.file("iterations.csv", iteration_table(res.report).str());
  m["report"] = to_json(res.report);
  m["torus"] = to_json(res.torus);
  const double distance = torus_distance(res.torus, p.setup, p.sys);
  m["distance"] = distance;
  int total = 0;
  const int ok = truncation_formula_count(res.report, &total);
  m["truncation"] = {{"steps", total}, {"K_formula_sufficed", ok}};
  const auto assertions = step_assertions(res.report);
  m["assertions"] = assertions_json(assertions);
  log << "iterate: " << res.report.steps.size() << " steps, stop "
      << to_string(res.report.stop) << ", residual " << res.torus.invariance_residual
      << ", distance " << distance << "\n";
  if (c.strict) {
    for (const auto& a : assertions) {
      if (!a.passed) return {kExitVerifyFailed, "assertion failed: " + a.name, {}};
    }
  }
  return {kExitOk, "iteration completed", {}};
}

std::string slope_field(const SlopeFit& f) { return format_double(f.slope); }

json fit_json(const SlopeFit& f) {
  return {{"slope", f.slope},
          {"intercept", f.intercept},
          {"stderr", f.stderr_slope},
          {"points", f.points}};
}

Outcome run_scaling(const RunConfig& c, Artifacts& art, std::ostream& log) {
  const IntegrableSystem sys = integrable_system(c);
  const FrequencyVector omega = frequency_vector(c);
  ScalingConfig sc;
  sc.overrides = schedule_overrides(c);
  sc.run = run_options(c);
  sc.h_domain = c.overrides.h_domain;
  sc.est1_c = c.overrides.est1_c;
  const ScalingResult res =
      scaling_experiment(sys, perturbation_template(c), omega, c.s, c.eps_list, c.modes, sc);

  CsvTable t({"eps", "mode", "r", "distance", "bound", "slope_fit_group", "iters", "residual"});
  json failed = json::array();
  std::vector<Assertion> assertions;
  int total = 0, ok = 0;
  for (const auto& row : res.rows) {
    t.add_row({format_double(row.eps), kam::to_string(row.mode), format_double(row.r),
               row.ok ? format_double(row.distance) : "", format_double(row.bound), row.group,
               std::to_string(row.iterations), row.ok ? format_double(row.residual) : ""});
    if (!row.ok) {
      failed.push_back({{"eps", row.eps}, {"mode", kam::to_string(row.mode)}, {"error", row.error}});
      continue;
    }
    ok += truncation_formula_count(row.run.report, &total);
    if (row.mode == kam::Mode::theorem2) {
      Assertion a;
      a.name = "distance <= bound at eps " + format_double(row.eps);
      a.passed = row.distance <= row.bound;
      a.detail = format_double(row.distance) + " vs " + format_double(row.bound);
      assertions.push_back(std::move(a));
    }
  }
  art.file("scaling.csv", t.str());

  json distance = json::object(), bound = json::object();
  for (const auto& [mode, fit] : res.distance_slopes) distance[kam::to_string(mode)] = fit_json(fit);
  for (const auto& [mode, fit] : res.bound_slopes) bound[kam::to_string(mode)] = fit_json(fit);
  const json slopes = {{"distance", distance}, {"bound", bound}, {"failed_rows", failed}};
  art.file("slopes.json", dump_json(slopes));
  auto& m = art.manifest();
  m["slopes"] = slopes;
  m["truncation"] = {{"steps", total}, {"K_formula_sufficed", ok}};
  m["assertions"] = assertions_json(assertions);
  for (const auto& [mode, fit] : res.distance_slopes) {
    log << "scaling: " << kam::to_string(mode) << " distance slope " << slope_field(fit) << " +- "
        << fit.stderr_slope << " over " << fit.points << " rows\n";
  }
  if (!failed.empty()) log << "scaling: " << failed.size() << " rows failed and were excluded\n";
  if (c.strict) {
    for (const auto& a : assertions) {
      if (!a.passed) return {kExitVerifyFailed, "assertion failed: " + a.name, {}};
    }
  }
  return {kExitOk, "scaling completed", {}};
}

Outcome run_verify_kind(const RunConfig& c, Artifacts& art, std::ostream& log) {
  const VerifyReport rep = run_verify(c.test_hook);
  const json j = rep.to_json();
  art.file("verify.json", dump_json(j));
  art.manifest()["verify"] = j;
  for (const auto& p : rep.properties) {
    log << (p.passed ? "PASS " : "FAIL ") << p.name << " value " << p.value << " bound "
        << p.bound << "\n";
  }
  if (rep.passed()) return {kExitOk, "all properties passed", {}};
  std::string names;
  for (const auto& n : rep.failed()) names += (names.empty() ? "" : ", ") + n;
  return {kExitVerifyFailed, "failed properties: " + names, {}};
}

}  // namespace

Outcome run(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  Artifacts art(config, out_dir);
  art.file("config.json", dump_json(echo_config(config)));
  Outcome o;
  try {
    switch (config.kind) {
      case RunKind::step:
        o = run_step(config, art, log);
        break;
      case RunKind::iterate:
        o = run_iterate(config, art, log);
        break;
      case RunKind::scaling:
        o = run_scaling(config, art, log);
        break;
      case RunKind::verify:
        o = run_verify_kind(config, art, log);
        break;
    }
  } catch (const IterationError& e) {
    o = {e.exit_code(), e.what(), e.inequality()};
  } catch (const ThresholdError& e) {
    o = {kExitThreshold, e.what(), e.inequality()};
  } catch (const ConfigError& e) {
    o = {kExitConfig, e.what(), {}};
  } catch (const std::exception& e) {
    o = {kExitNumerical, e.what(), {}};
  }
  if (o.exit_code != kExitOk) {
    log << "error: " << o.message << "\n";
    if (!o.inequality.empty()) log << "binding inequality: " << o.inequality << "\n";
  }
  art.finish(o);
  return o;
}

Outcome run_file(const fs::path& config_path, const std::string& kind_override,
                 const std::string& out_override, bool strict_flag, std::ostream& log) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    log << "error: cannot read " << config_path.string() << "\n";
    return {kExitConfig, "cannot read " + config_path.string(), {}};
  }
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  try {
    json j;
    try {
      j = json::parse(buf.str());
    } catch (const json::parse_error& e) {
      throw ConfigError("/", std::string("malformed JSON: ") + e.what());
    }
    if (!kind_override.empty()) j["kind"] = kind_override;
    if (!out_override.empty()) j["output"] = out_override;
    if (strict_flag) j["strict"] = true;
    cfg = parse_config(j);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return {kExitConfig, e.what(), {}};
  }
  return run(cfg, cfg.output, log);
}

}  // namespace kam::cli
