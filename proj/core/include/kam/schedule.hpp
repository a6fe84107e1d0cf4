#pragma once

// The iteration: schedule of step parameters, the driver that applies the
// KAM step until the perturbation is negligible, and the checks on the
// resulting torus.

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "kam/diophantine.hpp"
#include "kam/embedding.hpp"
#include "kam/errors.hpp"
#include "kam/kam_step.hpp"

namespace kam {

/// Radii of the initial domain D_{r,s} x O_h.
struct DomainParams {
  double r = 1.0;
  double s = 1.0;
  double h = 1.0;

  void validate() const;
};

enum class Mode { theorem1, theorem2 };

const char* to_string(Mode m);
Mode mode_from_string(const std::string& text);

/// Everything the caller may change about the schedule. Unset eta means the
/// conservative choice 10^-1 4^-nu.
struct ScheduleOverrides {
  std::optional<double> eta;
  double c_K = 1.0;
  double gamma = 0.25;
  double delta = 0.1;
  int max_iter = 40;
  double M = 1.0;  // Hessian bound, used in theorem2 mode
  ImplicitConstants implicit;
};

struct ThresholdMargin {
  std::string name;
  int step = -1;  // -1 for theorem level conditions
  double value = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound / value
};

struct IterationSchedule {
  Mode mode = Mode::theorem1;
  bool default_eta = true;
  double eta = 0.0;
  double kappa = 0.0;
  double nu = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  double alpha = 0.0;
  double M = 1.0;
  double c_K = 1.0;
  double eps0 = 0.0;
  double r = 0.0;
  double s = 0.0;
  double h_domain = 0.0;
  int n = 0;
  ImplicitConstants implicit;

  std::vector<double> sigma;
  std::vector<double> s_i;
  std::vector<long long> K;
  std::vector<double> h;
  std::vector<double> eps;
  std::vector<double> r_i;

  std::vector<ThresholdMargin> theorem_margins;
  std::vector<ThresholdMargin> step_margins;  // predicted, from the schedule itself
  double largest_eps0 = 0.0;                  // gamma alpha r s^nu
  bool geometric_decrease = true;
  double decrease_ratio_hr = 0.0;   // eps_{i+1}/(h_{i+1} r_{i+1}) over eps_i/(h_i r_i)
  double decrease_ratio_h2r = 0.0;

  int steps() const { return static_cast<int>(sigma.size()); }
  StepParams step_params(int i, double measured_eps) const;
};

/// Builds the sequences and checks the theorem level thresholds. Threshold
/// violations raise ThresholdError naming the inequality; with the default eta a
/// failed geometric decrease check raises too, with an eta override it is
/// recorded only.
IterationSchedule build_schedule(const DomainParams& dom, const FrequencyVector& omega,
                                 double eps0, Mode mode, const ScheduleOverrides& overrides = {});

struct RunOptions {
  double stop_tol = 1e-30;  // relative to the initial measured norm
  StepOptions step;
  int grid_size = 0;        // 0 picks 4x the generator degree
  int residual_grid = 32;
  bool compose = true;
  bool series_crosscheck = false;
  double est1_c = 1.0;
  ComposeOptions compose_options;
};

struct TorusResult {
  Embedding embedding;
  std::vector<double> phi;           // phi(omega) at the anchor
  std::vector<double> phi_jacobian;  // d phi / d omega, row-major
  double strip = 0.0;                // s/2
  double weighted_dist = 0.0;        // |W(Phi - Phi_0)| on |Im theta| < s/2
  double phi_dist = 0.0;             // |phi - Id|
  double invariance_residual = 0.0;
  std::optional<double> series_crosscheck;  // relative grid vs series difference
};

struct Est1Margins {
  double embedding_value = 0.0;
  double embedding_bound = 0.0;
  double embedding_ratio = 0.0;
  double phi_value = 0.0;
  double phi_bound = 0.0;
  double phi_ratio = 0.0;
  double phi_lipschitz_value = 0.0;  // alpha s^nu |D phi - Id| from jets
  double phi_lipschitz_ratio = 0.0;
  std::optional<double> phi_lipschitz_fd;  // from multi-anchor differences
};

enum class StopReason { tolerance, max_iter, zero_perturbation };
const char* to_string(StopReason r);

struct StepRecord {
  int index = 0;
  double sigma = 0.0;
  double s = 0.0;
  long long K = 0;
  double h = 0.0;
  double r = 0.0;
  double eps_schedule = 0.0;
  double eps_measured = 0.0;
  bool schedule_bound_held = true;
  StepReport report;
};

struct ConvergenceReport {
  std::vector<StepRecord> steps;
  std::vector<double> ratios;
  StopReason stop = StopReason::max_iter;
  double final_eps = 0.0;
  double accumulated_tails = 0.0;
  int certified_K = 0;
  Est1Margins est1;
  std::string failure;  // set when a step aborted
};

struct RunResult {
  TorusResult torus;
  ConvergenceReport report;
  std::vector<KamTransform> transforms;
  NormalForm final_normal_form;
};

/// Applies kam_step (or kam_step_q when Q is given) with parameters from
/// the schedule, extending the Diophantine certificate as the Fourier
/// degree grows. A failing step rethrows with the partial report inside
/// IterationError.
RunResult run_iteration(const NormalForm& N0, const Series& P0, const std::optional<Series>& Q0,
                        const IterationSchedule& schedule, const RunOptions& options = {});

class IterationError : public Error {
 public:
  IterationError(const std::string& what, ConvergenceReport report, int exit_code,
                 std::string inequality = {})
      : Error(what),
        report_(std::move(report)),
        exit_code_(exit_code),
        inequality_(std::move(inequality)) {}
  const ConvergenceReport& report() const { return report_; }
  int exit_code() const { return exit_code_; }
  /// Name of the violated inequality when a threshold failed, else empty.
  const std::string& inequality() const { return inequality_; }

 private:
  ConvergenceReport report_;
  int exit_code_;
  std::string inequality_;
};

Est1Margins check_est1(const TorusResult& result, double eps0, double r, double s, double alpha,
                       double nu, double c);

/// Multi-anchor estimate of alpha s^nu |phi - Id|_L from finite differences
/// between phi at nearby anchors.
double phi_lipschitz_fd(const std::vector<std::vector<double>>& anchors,
                        const std::vector<std::vector<double>>& phis);

nlohmann::json to_json(const IterationSchedule& s);
nlohmann::json to_json(const ConvergenceReport& r);
nlohmann::json to_json(const TorusResult& t);

}  // namespace kam
