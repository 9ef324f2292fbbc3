#pragma once

// Orchestration: builds and solves guessing-probability relaxations, merges
// them with the closed-form strategies, and runs parameter sweeps.

#include <functional>
#include <string>
#include <vector>

#include "bilocert/bounds.hpp"
#include "bilocert/momentgen.hpp"
#include "bilocert/scenario.hpp"
#include "bilocert/sdpsolver.hpp"

namespace bilocert {

struct CertifyOptions {
  std::string level;        // empty: model default
  double tol = 1e-7;
  double psd_shift = 0.0;
  std::string export_sdpa;  // when set, the instance is written here
};

struct CertificationReport {
  std::string scenario_name;  // "<bob>-<outer>" or "external"
  EveModel eve = EveModel::SE;
  GuessTarget target;
  double v = 0.0, c = 0.0, p_indist = 1.0;
  double delta = 0.0, theta = 0.0;  // NaN when not applicable
  double brgp = 0.0;                // NaN unless Bob is a single 4-outcome BSM
  double p_guess_sdp = 0.0;
  double hmin_certified = 0.0;
  BoundReport analytic;
  double gap = 0.0;  // analytic.hmin_upper - hmin_certified, >= -1e-6
  SolveStatus solver_status = SolveStatus::numerical_failure;
  int iterations = 0;
  double sdp_gap = 0.0;
  int matrix_size = 0;
  int var_count = 0;
  std::string level;

  std::string to_json() const;
};

CertificationReport certify(const BilocalScenario& scenario, EveModel eve,
                            const GuessTarget& target,
                            const CertifyOptions& options = {});

// Certification of an externally supplied behavior; analytic side restricted
// to the behavior-only strategies (uniform, informed).
CertificationReport certify_behavior(const Behavior& behavior, EveModel eve,
                                     const GuessTarget& target,
                                     const CertifyOptions& options = {});

std::string csv_header();
std::string csv_row(const CertificationReport& report);

// BILOCERT_THREADS caps sweep parallelism (default: logical cores).
int worker_threads();
void parallel_for(int count, const std::function<void(int)>& body);

// lo, lo+step, ... up to hi inclusive (within half a step).
std::vector<double> grid_range(double lo, double hi, double step);

// One certify call per grid point; per-point failures are recorded in the
// report (solver_status) and the sweep continues. Results follow grid order.
std::vector<CertificationReport> sweep_visibility(
    const BilocalScenario& base, EveModel eve, const GuessTarget& target,
    const std::vector<double>& v_grid, const CertifyOptions& options = {});

std::vector<CertificationReport> sweep_experimental(
    const BilocalScenario& base, EveModel eve, const GuessTarget& target,
    const std::vector<double>& p_grid, double v, double c,
    const CertifyOptions& options = {});

std::vector<CertificationReport> sweep_tilted(
    EveModel eve, BobKind bob, const GuessTarget& target,
    const std::vector<double>& delta_grid, const std::vector<double>& theta_grid,
    const CertifyOptions& options = {});

struct TiltedMaximum {
  CertificationReport best;
  std::vector<CertificationReport> coarse;
};

// Coarse grid over the tilt angles followed by golden-section refinement
// (coordinate-wise for the rotated 2x4 variant).
TiltedMaximum maximize_tilted(EveModel eve, BobKind bob,
                              const GuessTarget& target, int coarse_points,
                              int refine_evals,
                              const CertifyOptions& options = {});

// Single-source CHSH cross-checks on the same machinery.
double chsh_tsirelson(double tol = 1e-9);
double chsh_guessing_hmin(double tol = 1e-8);

}  // namespace bilocert
