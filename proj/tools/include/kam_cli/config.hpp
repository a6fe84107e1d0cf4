#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kam/application.hpp"

namespace kam::cli {

enum class RunKind { step, iterate, scaling, verify };

const char* to_string(RunKind k);

/// One term a cos(k.q) p^m (or a sin) of the perturbation template.
struct FourierMode {
  std::vector<int> k;
  std::vector<int> m;  // empty means p-independent
  double amplitude = 1.0;
  bool sine = false;
};

struct SystemSpec {
  int dimension = 2;
  std::string h = "quadratic";  // quadratic | mixed_quadratic
  std::vector<FourierMode> f;          // default: cos q1 + cos(q1 + q2) when n = 2
};

struct FrequencySpec {
  std::string fixture = "quadratic_irrational";  // ignored when omega is given
  std::vector<double> omega;
  double alpha = 0.25;
  double tau = 1.2;
  int K_certify = 10;
};

struct Overrides {
  std::optional<double> eta;
  double c_K = 1.0;
  double gamma = 0.25;
  double delta = 0.1;
  ImplicitConstants implicit;
  double stop_tol = 1e-30;
  int max_iter = 40;
  int d_max = 4;
  int grid_size = 0;
  double h_domain = 1.0;
  double est1_c = 1.0;
  std::string integral = "series";  // series | gauss_legendre
  bool series_crosscheck = false;
};

struct RunConfig {
  RunKind kind = RunKind::iterate;
  SystemSpec system;
  FrequencySpec frequency;
  double s = 1.0;
  double eps = 1e-6;
  std::vector<double> eps_list;  // scaling sweep; default half decades 1e-7 .. 1e-4
  kam::Mode mode = kam::Mode::theorem2;
  std::vector<kam::Mode> modes;  // scaling sweep; default both
  Overrides overrides;
  std::string output = "kam-out";
  bool strict = false;
  std::string test_hook = "none";  // none | bracket_sign
};

/// Schema violation; `path()` is the JSON pointer style location.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Fills defaults and validates ranges. Unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text);

/// The effective configuration with every default spelled out.
nlohmann::json echo_config(const RunConfig& c);

/// f = sum of the template modes, each scaled by its amplitude.
Series perturbation_template(const RunConfig& c);
FrequencyVector frequency_vector(const RunConfig& c);
IntegrableSystem integrable_system(const RunConfig& c);
ScheduleOverrides schedule_overrides(const RunConfig& c);
RunOptions run_options(const RunConfig& c);

}  // namespace kam::cli
