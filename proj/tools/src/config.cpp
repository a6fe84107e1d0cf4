#include "kam_cli/config.hpp"

#include <cmath>
#include <set>

namespace kam::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& path, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(path + "/" + key, "unknown key");
  }
}

double get_number(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(path + "/" + key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path + "/" + key, "must be finite");
  return x;
}

int get_int(const json& j, const std::string& key, const std::string& path, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + "/" + key, "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& j, const std::string& key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(path + "/" + key, "expected a boolean");
  return v.get<bool>();
}

std::string get_string(const json& j, const std::string& key, const std::string& path,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

template <class T>
std::vector<T> get_array(const json& j, const std::string& key, const std::string& path) {
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(path + "/" + key, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = path + "/" + key + "/" + std::to_string(i);
    if constexpr (std::is_same_v<T, int>) {
      if (!v[i].is_number_integer()) throw ConfigError(p, "expected an integer");
    } else {
      if (!v[i].is_number()) throw ConfigError(p, "expected a number");
    }
    out.push_back(v[i].get<T>());
  }
  return out;
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

RunKind kind_from_string(const std::string& s, const std::string& path) {
  if (s == "step") return RunKind::step;
  if (s == "iterate") return RunKind::iterate;
  if (s == "scaling") return RunKind::scaling;
  if (s == "verify") return RunKind::verify;
  throw ConfigError(path, "unknown run kind '" + s + "' (step|iterate|scaling|verify)");
}

kam::Mode parse_mode(const std::string& s, const std::string& path) {
  try {
    return mode_from_string(s);
  } catch (const Error&) {
    throw ConfigError(path, "unknown mode '" + s + "' (theorem1|theorem2)");
  }
}

SystemSpec parse_system(const json& j, const std::string& path) {
  reject_unknown(j, path, {"dimension", "h", "f"});
  SystemSpec s;
  s.dimension = get_int(j, "dimension", path, s.dimension);
  require(s.dimension >= 1 && s.dimension <= kMaxDim, path + "/dimension",
          "must lie in [1, " + std::to_string(kMaxDim) + "]");
  s.h = get_string(j, "h", path, s.h);
  require(s.h == "quadratic" || s.h == "mixed_quadratic", path + "/h",
          "unknown integrable system '" + s.h + "' (quadratic|mixed_quadratic)");
  require(s.h != "mixed_quadratic" || s.dimension == 2, path + "/h",
          "mixed_quadratic requires dimension 2");
  if (j.contains("f")) {
    const json& f = j.at("f");
    require(f.is_array(), path + "/f", "expected an array of modes");
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string p = path + "/f/" + std::to_string(i);
      reject_unknown(f[i], p, {"k", "m", "amplitude", "kind"});
      require(f[i].contains("k"), p + "/k", "missing");
      FourierMode m;
      m.k = get_array<int>(f[i], "k", p);
      require(static_cast<int>(m.k.size()) == s.dimension, p + "/k",
              "length must equal the dimension");
      if (f[i].contains("m")) {
        m.m = get_array<int>(f[i], "m", p);
        require(static_cast<int>(m.m.size()) == s.dimension, p + "/m",
                "length must equal the dimension");
        for (int e : m.m) require(e >= 0, p + "/m", "exponents must be nonnegative");
      }
      m.amplitude = get_number(f[i], "amplitude", p, 1.0);
      const std::string kind = get_string(f[i], "kind", p, "cos");
      require(kind == "cos" || kind == "sin", p + "/kind", "expected cos or sin");
      m.sine = kind == "sin";
      s.f.push_back(std::move(m));
    }
  } else if (s.dimension == 2) {
    s.f = {FourierMode{{1, 0}, {}, 1.0, false}, FourierMode{{1, 1}, {}, 1.0, false}};
  } else {
    std::vector<int> k(s.dimension, 0);
    k[0] = 1;
    s.f = {FourierMode{k, {}, 1.0, false}};
  }
  return s;
}

FrequencySpec parse_frequency(const json& j, const std::string& path, int n) {
  reject_unknown(j, path, {"fixture", "omega", "alpha", "tau", "K_certify"});
  FrequencySpec f;
  f.fixture = get_string(j, "fixture", path, f.fixture);
  require(f.fixture == "quadratic_irrational", path + "/fixture",
          "unknown fixture '" + f.fixture + "' (quadratic_irrational)");
  if (j.contains("omega")) {
    f.omega = get_array<double>(j, "omega", path);
    require(static_cast<int>(f.omega.size()) == n, path + "/omega",
            "length must equal the dimension");
  } else {
    f.omega = quadratic_irrational_frequency(n);
  }
  f.alpha = get_number(j, "alpha", path, f.alpha);
  require(f.alpha > 0.0, path + "/alpha", "must be positive");
  f.tau = get_number(j, "tau", path, f.tau);
  require(f.tau >= n - 1, path + "/tau", "must be at least n - 1");
  f.K_certify = get_int(j, "K_certify", path, f.K_certify);
  require(f.K_certify >= 1, path + "/K_certify", "must be at least 1");
  return f;
}

Overrides parse_overrides(const json& j, const std::string& path) {
  reject_unknown(j, path,
                 {"eta", "c_K", "gamma", "delta", "implicit", "stop_tol", "max_iter", "d_max",
                  "grid_size", "h_domain", "est1_c", "integral", "series_crosscheck"});
  Overrides o;
  if (j.contains("eta") && !j.at("eta").is_null()) {
    o.eta = get_number(j, "eta", path, 0.0);
    require(*o.eta > 0.0 && *o.eta < 0.125, path + "/eta", "must satisfy 0 < eta < 1/8");
  }
  o.c_K = get_number(j, "c_K", path, o.c_K);
  require(o.c_K > 0.0, path + "/c_K", "must be positive");
  o.gamma = get_number(j, "gamma", path, o.gamma);
  require(o.gamma > 0.0, path + "/gamma", "must be positive");
  o.delta = get_number(j, "delta", path, o.delta);
  require(o.delta > 0.0, path + "/delta", "must be positive");
  if (j.contains("implicit")) {
    const json& im = j.at("implicit");
    const std::string p = path + "/implicit";
    reject_unknown(im, p, {"eps_alpha", "eps_hr", "r_alpha", "estim2", "bracket_q"});
    auto& c = o.implicit;
    c.eps_alpha = get_number(im, "eps_alpha", p, c.eps_alpha);
    c.eps_hr = get_number(im, "eps_hr", p, c.eps_hr);
    c.r_alpha = get_number(im, "r_alpha", p, c.r_alpha);
    c.estim2 = get_number(im, "estim2", p, c.estim2);
    c.bracket_q = get_number(im, "bracket_q", p, c.bracket_q);
    for (const char* key : {"eps_alpha", "eps_hr", "r_alpha", "estim2", "bracket_q"}) {
      if (im.contains(key)) require(im.at(key).get<double>() > 0.0, p + "/" + key, "must be positive");
    }
  }
  o.stop_tol = get_number(j, "stop_tol", path, o.stop_tol);
  require(o.stop_tol >= 0.0 && o.stop_tol < 1.0, path + "/stop_tol", "must lie in [0, 1)");
  o.max_iter = get_int(j, "max_iter", path, o.max_iter);
  require(o.max_iter >= 1 && o.max_iter <= 200, path + "/max_iter", "must lie in [1, 200]");
  o.d_max = get_int(j, "d_max", path, o.d_max);
  require(o.d_max >= 2 && o.d_max <= 16, path + "/d_max", "must lie in [2, 16]");
  o.grid_size = get_int(j, "grid_size", path, o.grid_size);
  require(o.grid_size == 0 || (o.grid_size >= 8 && o.grid_size <= 4096), path + "/grid_size",
          "must be 0 (automatic) or lie in [8, 4096]");
  o.h_domain = get_number(j, "h_domain", path, o.h_domain);
  require(o.h_domain > 0.0 && o.h_domain <= 1.0, path + "/h_domain", "must lie in (0, 1]");
  o.est1_c = get_number(j, "est1_c", path, o.est1_c);
  require(o.est1_c > 0.0, path + "/est1_c", "must be positive");
  o.integral = get_string(j, "integral", path, o.integral);
  require(o.integral == "series" || o.integral == "gauss_legendre", path + "/integral",
          "expected series or gauss_legendre");
  o.series_crosscheck = get_bool(j, "series_crosscheck", path, o.series_crosscheck);
  return o;
}

}  // namespace

const char* to_string(RunKind k) {
  switch (k) {
    case RunKind::step:
      return "step";
    case RunKind::iterate:
      return "iterate";
    case RunKind::scaling:
      return "scaling";
    case RunKind::verify:
      return "verify";
  }
  return "?";
}

RunConfig parse_config(const json& j) {
  reject_unknown(j, "",
                 {"kind", "system", "frequency", "s", "eps", "eps_list", "mode", "modes",
                  "overrides", "output", "strict", "test_hook"});
  RunConfig c;
  if (j.contains("kind")) c.kind = kind_from_string(get_string(j, "kind", "", ""), "/kind");
  c.system = parse_system(j.contains("system") ? j.at("system") : json::object(), "/system");
  c.frequency = parse_frequency(j.contains("frequency") ? j.at("frequency") : json::object(),
                                "/frequency", c.system.dimension);
  c.s = get_number(j, "s", "", c.s);
  require(c.s > 0.0 && c.s <= 1.0, "/s", "must lie in (0, 1]");
  c.eps = get_number(j, "eps", "", c.eps);
  require(c.eps >= 0.0, "/eps", "must be nonnegative");
  if (j.contains("eps_list")) {
    c.eps_list = get_array<double>(j, "eps_list", "");
    require(!c.eps_list.empty(), "/eps_list", "must not be empty");
    for (std::size_t i = 0; i < c.eps_list.size(); ++i) {
      require(c.eps_list[i] > 0.0, "/eps_list/" + std::to_string(i), "must be positive");
    }
  } else {
    for (int i = 0; i <= 6; ++i) c.eps_list.push_back(std::pow(10.0, -7.0 + 0.5 * i));
  }
  if (j.contains("mode")) c.mode = parse_mode(get_string(j, "mode", "", ""), "/mode");
  if (j.contains("modes")) {
    const json& m = j.at("modes");
    require(m.is_array() && !m.empty(), "/modes", "expected a nonempty array");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string p = "/modes/" + std::to_string(i);
      require(m[i].is_string(), p, "expected a string");
      c.modes.push_back(parse_mode(m[i].get<std::string>(), p));
    }
  } else {
    c.modes = {kam::Mode::theorem2, kam::Mode::theorem1};
  }
  c.overrides = parse_overrides(j.contains("overrides") ? j.at("overrides") : json::object(),
                                "/overrides");
  c.output = get_string(j, "output", "", c.output);
  require(!c.output.empty(), "/output", "must not be empty");
  c.strict = get_bool(j, "strict", "", c.strict);
  c.test_hook = get_string(j, "test_hook", "", c.test_hook);
  require(c.test_hook == "none" || c.test_hook == "bracket_sign", "/test_hook",
          "expected none or bracket_sign");
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

json echo_config(const RunConfig& c) {
  json f = json::array();
  for (const auto& m : c.system.f) {
    json e = {{"k", m.k}, {"amplitude", m.amplitude}, {"kind", m.sine ? "sin" : "cos"}};
    if (!m.m.empty()) e["m"] = m.m;
    f.push_back(std::move(e));
  }
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(kam::to_string(m));
  const auto& o = c.overrides;
  const auto& im = o.implicit;
  return {
      {"kind", to_string(c.kind)},
      {"system", {{"dimension", c.system.dimension}, {"h", c.system.h}, {"f", f}}},
      {"frequency",
       {{"fixture", c.frequency.fixture},
        {"omega", c.frequency.omega},
        {"alpha", c.frequency.alpha},
        {"tau", c.frequency.tau},
        {"K_certify", c.frequency.K_certify}}},
      {"s", c.s},
      {"eps", c.eps},
      {"eps_list", c.eps_list},
      {"mode", kam::to_string(c.mode)},
      {"modes", modes},
      {"overrides",
       {{"eta", o.eta ? json(*o.eta) : json(nullptr)},
        {"c_K", o.c_K},
        {"gamma", o.gamma},
        {"delta", o.delta},
        {"implicit",
         {{"eps_alpha", im.eps_alpha},
          {"eps_hr", im.eps_hr},
          {"r_alpha", im.r_alpha},
          {"estim2", im.estim2},
          {"bracket_q", im.bracket_q}}},
        {"stop_tol", o.stop_tol},
        {"max_iter", o.max_iter},
        {"d_max", o.d_max},
        {"grid_size", o.grid_size},
        {"h_domain", o.h_domain},
        {"est1_c", o.est1_c},
        {"integral", o.integral},
        {"series_crosscheck", o.series_crosscheck}}},
      {"output", c.output},
      {"strict", c.strict},
      {"test_hook", c.test_hook},
  };
}

Series perturbation_template(const RunConfig& c) {
  const int n = c.system.dimension;
  Series f(n, c.overrides.d_max, true);
  for (const auto& m : c.system.f) {
    f = f + (m.sine ? Series::sine(n, m.k, m.amplitude, m.m, c.overrides.d_max)
                    : Series::cosine(n, m.k, m.amplitude, m.m, c.overrides.d_max));
  }
  return f;
}

FrequencyVector frequency_vector(const RunConfig& c) {
  const FrequencyVector seed{c.frequency.omega, c.frequency.alpha, c.frequency.tau, 0, {}, 0.0};
  return extend_certificate(seed, c.frequency.K_certify);
}

IntegrableSystem integrable_system(const RunConfig& c) {
  return IntegrableSystem::by_name(c.system.h, c.system.dimension);
}

ScheduleOverrides schedule_overrides(const RunConfig& c) {
  ScheduleOverrides ov;
  ov.eta = c.overrides.eta;
  ov.c_K = c.overrides.c_K;
  ov.gamma = c.overrides.gamma;
  ov.delta = c.overrides.delta;
  ov.max_iter = c.overrides.max_iter;
  ov.implicit = c.overrides.implicit;
  return ov;
}

RunOptions run_options(const RunConfig& c) {
  RunOptions ro;
  ro.stop_tol = c.overrides.stop_tol;
  ro.grid_size = c.overrides.grid_size;
  ro.est1_c = c.overrides.est1_c;
  ro.series_crosscheck = c.overrides.series_crosscheck;
  ro.step.strict = c.strict;
  ro.step.integral = c.overrides.integral == "gauss_legendre" ? IntegralMethod::gauss_legendre
                                                              : IntegralMethod::series;
  return ro;
}

}  // namespace kam::cli
