#include "bilocert/certify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "bilocert/qcore.hpp"

namespace bilocert {

namespace {

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

int target_space(const Behavior& behavior, const GuessTarget& target) {
  return (target.a ? behavior.A : 1) * (target.b ? behavior.B : 1) *
         (target.c ? behavior.C : 1);
}

CertificationReport skeleton(const BilocalScenario& scenario, EveModel eve,
                             const GuessTarget& target) {
  CertificationReport rep;
  rep.scenario_name = bob_kind_name(scenario.strategy.bob.kind) + "-" +
                      outer_kind_name(scenario.strategy.outer.kind);
  rep.eve = eve;
  rep.target = target;
  rep.v = scenario.noise.v;
  rep.c = scenario.noise.c;
  rep.p_indist = scenario.noise.p_indist;
  rep.delta = scenario.strategy.outer.kind == OuterKind::tilted
                  ? scenario.strategy.outer.delta
                  : nan_value();
  rep.theta = scenario.strategy.bob.kind == BobKind::rotated_2x4
                  ? scenario.strategy.bob.theta
                  : nan_value();
  rep.brgp = nan_value();
  rep.p_guess_sdp = nan_value();
  rep.hmin_certified = nan_value();
  rep.gap = nan_value();
  rep.sdp_gap = nan_value();
  return rep;
}

// Pinned data at extremal parameters can leave the cone without an interior;
// a tiny shift restores one and only enlarges the feasible set, so the bound
// direction is preserved.
SdpSolution solve_relaxed(const SdpInstance& instance, SolveOptions sopt) {
  SdpSolution sol = solve(instance, sopt);
  for (double shift : {1e-9, 1e-8, 1e-7}) {
    if (sol.status == SolveStatus::optimal) break;
    if (shift <= sopt.psd_shift) continue;
    sopt.psd_shift = shift;
    SdpSolution retry = solve(instance, sopt);
    if (retry.status == SolveStatus::optimal ||
        sol.status != SolveStatus::max_iter) {
      sol = std::move(retry);
    }
  }
  return sol;
}

// Builds, optionally exports and solves the relaxation, then fills the SDP
// side of the report. Expects rep.analytic to be set already.
void run_sdp(CertificationReport& rep, const Behavior& behavior, EveModel eve,
             const GuessTarget& target, const CertifyOptions& options) {
  LevelSpec level = options.level.empty() ? default_level(eve)
                                          : LevelSpec::parse(options.level);
  rep.level = level.str();
  MomentProblem problem = build_guessing_problem(behavior, eve, target, level);
  rep.matrix_size = problem.size;
  rep.var_count = problem.var_count;
  SdpInstance instance = realify(problem);
  if (!options.export_sdpa.empty()) {
    std::ofstream out(options.export_sdpa);
    if (!out) throw std::runtime_error("cannot write " + options.export_sdpa);
    write_sdpa(instance, out);
  }
  SolveOptions sopt;
  sopt.tol = options.tol;
  sopt.psd_shift = options.psd_shift;
  SdpSolution sol = solve_relaxed(instance, sopt);
  rep.solver_status = sol.status;
  rep.iterations = sol.iterations;
  rep.sdp_gap = sol.gap;
  if (sol.status == SolveStatus::optimal || sol.status == SolveStatus::max_iter) {
    // The relaxation optimum provably sits in [1/N, 1]; clamping removes
    // sub-tolerance solver undershoot without weakening the bound.
    const double floor_p = 1.0 / target_space(behavior, target);
    rep.p_guess_sdp = std::clamp(sol.objective, floor_p, 1.0);
    rep.hmin_certified = -std::log2(rep.p_guess_sdp);
    rep.gap = rep.analytic.hmin_upper - rep.hmin_certified;
    if (sol.status == SolveStatus::optimal && rep.gap < -1e-6) {
      throw std::runtime_error(
          "certified min-entropy exceeds the analytic upper bound by " +
          std::to_string(-rep.gap) + " bits");
    }
  }
}

}  // namespace

std::string CertificationReport::to_json() const {
  nlohmann::json j;
  j["scenario"] = scenario_name;
  j["eve_model"] = eve_model_name(eve);
  j["target"] = target.name();
  j["v"] = v;
  j["c"] = c;
  j["p_indist"] = p_indist;
  j["delta"] = delta;
  j["theta"] = theta;
  j["brgp"] = brgp;
  j["p_guess_sdp"] = p_guess_sdp;
  j["hmin_certified"] = hmin_certified;
  j["analytic"] = nlohmann::json::parse(analytic.to_json());
  j["gap"] = gap;
  j["solver_status"] = to_string(solver_status);
  j["iterations"] = iterations;
  j["sdp_gap"] = sdp_gap;
  j["matrix_size"] = matrix_size;
  j["var_count"] = var_count;
  j["level"] = level;
  return j.dump(2);
}

CertificationReport certify(const BilocalScenario& scenario, EveModel eve,
                            const GuessTarget& target,
                            const CertifyOptions& options) {
  scenario.validate();
  target.validate();
  Behavior behavior = compute_behavior(scenario);
  CertificationReport rep = skeleton(scenario, eve, target);
  if (behavior.Y == 1 && behavior.B == 4) rep.brgp = brgp_value(behavior);
  rep.analytic = best_analytic_bound(scenario, eve, target);
  run_sdp(rep, behavior, eve, target, options);
  return rep;
}

CertificationReport certify_behavior(const Behavior& behavior, EveModel eve,
                                     const GuessTarget& target,
                                     const CertifyOptions& options) {
  behavior.validate();
  target.validate();
  CertificationReport rep;
  rep.scenario_name = "external";
  rep.eve = eve;
  rep.target = target;
  auto meta_or_nan = [&](const char* key) {
    auto it = behavior.meta.find(key);
    return it != behavior.meta.end() ? it->second : nan_value();
  };
  rep.v = meta_or_nan("v");
  rep.c = meta_or_nan("c");
  rep.p_indist = meta_or_nan("p_indist");
  rep.delta = nan_value();
  rep.theta = nan_value();
  rep.brgp = behavior.Y == 1 && behavior.B == 4 ? brgp_value(behavior)
                                                : nan_value();
  rep.p_guess_sdp = nan_value();
  rep.hmin_certified = nan_value();
  rep.gap = nan_value();
  rep.sdp_gap = nan_value();
  BoundReport uni = uniform_guess(behavior, target);
  BoundReport inf = informed_guess(behavior, target);
  rep.analytic = inf.p_guess_lower >= uni.p_guess_lower ? inf : uni;
  run_sdp(rep, behavior, eve, target, options);
  return rep;
}

std::string csv_header() {
  return "scenario,eve_model,target,v,c,p_indist,delta,theta,brgp,p_guess_sdp,"
         "hmin_certified,hmin_analytic,gap,solver_status,iterations";
}

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

std::string csv_row(const CertificationReport& r) {
  std::ostringstream out;
  out << r.scenario_name << ',' << eve_model_name(r.eve) << ','
      << r.target.name() << ',' << fmt(r.v) << ',' << fmt(r.c) << ','
      << fmt(r.p_indist) << ',' << fmt(r.delta) << ',' << fmt(r.theta) << ','
      << fmt(r.brgp) << ',' << fmt(r.p_guess_sdp) << ','
      << fmt(r.hmin_certified) << ',' << fmt(r.analytic.hmin_upper) << ','
      << fmt(r.gap) << ',' << to_string(r.solver_status) << ',' << r.iterations;
  return out.str();
}

int worker_threads() {
  if (const char* env = std::getenv("BILOCERT_THREADS")) {
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (end != env && n >= 1) return static_cast<int>(std::min<long>(n, 256));
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int count, const std::function<void(int)>& body) {
  if (count <= 0) return;
  const int workers = std::min(worker_threads(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr first_error;
  auto run = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> grid_range(double lo, double hi, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    double x = lo + k * step;
    if (x > hi + step * 1e-6) break;
    grid.push_back(std::min(x, hi));
  }
  return grid;
}

namespace {

CertificationReport failure_report(const BilocalScenario& scenario,
                                   EveModel eve, const GuessTarget& target,
                                   const CertifyOptions& options) {
  CertificationReport rep = skeleton(scenario, eve, target);
  rep.level = options.level.empty() ? default_level(eve).str() : options.level;
  rep.solver_status = SolveStatus::numerical_failure;
  try {
    Behavior behavior = compute_behavior(scenario);
    if (behavior.Y == 1 && behavior.B == 4) rep.brgp = brgp_value(behavior);
    rep.analytic = best_analytic_bound(scenario, eve, target);
  } catch (...) {
    // Leave the analytic side empty; the point is still reported.
  }
  return rep;
}

std::vector<CertificationReport> sweep_scenarios(
    const std::vector<BilocalScenario>& points, EveModel eve,
    const GuessTarget& target, const CertifyOptions& options) {
  std::vector<CertificationReport> results(points.size());
  parallel_for(static_cast<int>(points.size()), [&](int i) {
    try {
      results[i] = certify(points[i], eve, target, options);
    } catch (...) {
      results[i] = failure_report(points[i], eve, target, options);
    }
  });
  return results;
}

}  // namespace

std::vector<CertificationReport> sweep_visibility(
    const BilocalScenario& base, EveModel eve, const GuessTarget& target,
    const std::vector<double>& v_grid, const CertifyOptions& options) {
  std::vector<BilocalScenario> points;
  points.reserve(v_grid.size());
  for (double v : v_grid) {
    BilocalScenario s = base;
    s.noise.v = v;
    if (s.noise_second) s.noise_second->v = v;
    points.push_back(s);
  }
  return sweep_scenarios(points, eve, target, options);
}

std::vector<CertificationReport> sweep_experimental(
    const BilocalScenario& base, EveModel eve, const GuessTarget& target,
    const std::vector<double>& p_grid, double v, double c,
    const CertifyOptions& options) {
  std::vector<BilocalScenario> points;
  points.reserve(p_grid.size());
  for (double p : p_grid) {
    BilocalScenario s = base;
    s.noise.v = v;
    s.noise.c = c;
    s.noise.p_indist = p;
    if (s.noise_second) *s.noise_second = s.noise;
    points.push_back(s);
  }
  return sweep_scenarios(points, eve, target, options);
}

std::vector<CertificationReport> sweep_tilted(
    EveModel eve, BobKind bob, const GuessTarget& target,
    const std::vector<double>& delta_grid, const std::vector<double>& theta_grid,
    const CertifyOptions& options) {
  std::vector<double> thetas = bob == BobKind::rotated_2x4
                                   ? theta_grid
                                   : std::vector<double>{0.0};
  if (thetas.empty()) thetas.push_back(0.0);
  std::vector<BilocalScenario> points;
  points.reserve(delta_grid.size() * thetas.size());
  for (double delta : delta_grid) {
    for (double theta : thetas) {
      BilocalScenario s;
      s.strategy.outer.kind = OuterKind::tilted;
      s.strategy.outer.delta = delta;
      s.strategy.bob.kind = bob;
      s.strategy.bob.theta = bob == BobKind::rotated_2x4 ? theta : 0.0;
      points.push_back(s);
    }
  }
  return sweep_scenarios(points, eve, target, options);
}

namespace {

double report_value(const CertificationReport& r) {
  return std::isfinite(r.hmin_certified)
             ? r.hmin_certified
             : -std::numeric_limits<double>::infinity();
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
  return g;
}

CertificationReport golden_max(
    const std::function<CertificationReport(double)>& f, double lo, double hi,
    int evals, CertificationReport incumbent) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a);
  double x2 = a + phi * (b - a);
  CertificationReport r1 = f(x1);
  CertificationReport r2 = f(x2);
  CertificationReport best = std::move(incumbent);
  if (report_value(r1) > report_value(best)) best = r1;
  if (report_value(r2) > report_value(best)) best = r2;
  for (int k = 2; k < evals; ++k) {
    if (report_value(r1) < report_value(r2)) {
      a = x1;
      x1 = x2;
      r1 = r2;
      x2 = a + phi * (b - a);
      r2 = f(x2);
      if (report_value(r2) > report_value(best)) best = r2;
    } else {
      b = x2;
      x2 = x1;
      r2 = r1;
      x1 = b - phi * (b - a);
      r1 = f(x1);
      if (report_value(r1) > report_value(best)) best = r1;
    }
  }
  return best;
}

}  // namespace

TiltedMaximum maximize_tilted(EveModel eve, BobKind bob,
                              const GuessTarget& target, int coarse_points,
                              int refine_evals, const CertifyOptions& options) {
  const double pi = std::acos(-1.0);
  const bool two_d = bob == BobKind::rotated_2x4;
  const int nd = std::max(coarse_points, 3);
  std::vector<double> dgrid = linspace(0.0, pi / 2, nd);
  std::vector<double> tgrid =
      two_d ? linspace(0.0, pi / 4, std::max(nd / 2 + 1, 3))
            : std::vector<double>{0.0};

  TiltedMaximum out;
  out.coarse = sweep_tilted(eve, bob, target, dgrid, tgrid, options);
  int best = -1;
  for (int i = 0; i < static_cast<int>(out.coarse.size()); ++i) {
    if (best < 0 || report_value(out.coarse[i]) > report_value(out.coarse[best])) {
      best = i;
    }
  }
  if (best < 0 || !std::isfinite(report_value(out.coarse[best]))) {
    throw std::runtime_error("tilted sweep produced no usable points");
  }
  out.best = out.coarse[best];

  auto eval = [&](double delta, double theta) {
    BilocalScenario s;
    s.strategy.outer.kind = OuterKind::tilted;
    s.strategy.outer.delta = delta;
    s.strategy.bob.kind = bob;
    s.strategy.bob.theta = two_d ? theta : 0.0;
    try {
      return certify(s, eve, target, options);
    } catch (...) {
      return failure_report(s, eve, target, options);
    }
  };

  const double dstep = dgrid.size() > 1 ? dgrid[1] - dgrid[0] : 0.0;
  const double tstep = tgrid.size() > 1 ? tgrid[1] - tgrid[0] : 0.0;
  double d0 = out.best.delta;
  double t0 = two_d ? out.best.theta : 0.0;

  const int d_evals = two_d ? refine_evals / 2 : refine_evals;
  if (d_evals >= 2 && dstep > 0.0) {
    out.best = golden_max([&](double d) { return eval(d, t0); },
                          std::max(0.0, d0 - dstep),
                          std::min(pi / 2, d0 + dstep), d_evals, out.best);
    d0 = out.best.delta;
  }
  if (two_d && refine_evals - d_evals >= 2 && tstep > 0.0) {
    out.best = golden_max([&](double t) { return eval(d0, t); },
                          std::max(0.0, t0 - tstep),
                          std::min(pi / 4, t0 + tstep), refine_evals - d_evals,
                          out.best);
  }
  return out;
}

double chsh_tsirelson(double tol) {
  std::vector<PartySpec> parties = {
      {'A', 2, 2, OpKind::involution},
      {'B', 2, 2, OpKind::involution},
  };
  auto gens = generate_monomials(parties, LevelSpec::parse("1+AB"));
  auto ab = [](int x, int y) {
    return Monomial::word({{'A', x, 0, OpKind::involution},
                           {'B', y, 0, OpKind::involution}});
  };
  std::vector<ObjectiveTerm> objective = {
      {1.0, ab(0, 0)}, {1.0, ab(0, 1)}, {1.0, ab(1, 0)}, {-1.0, ab(1, 1)}};
  MomentProblem problem =
      assemble_problem(std::move(gens), DagKind::none, nullptr, objective);
  SolveOptions sopt;
  sopt.tol = tol;
  SdpSolution sol = solve(realify(problem), sopt);
  if (sol.status != SolveStatus::optimal) {
    throw std::runtime_error(std::string("CHSH bound solve failed: ") +
                             to_string(sol.status));
  }
  return sol.objective;
}

double chsh_guessing_hmin(double tol) {
  // Ideal CHSH point: maximally entangled state, A measures z then x, B the
  // two diagonal combinations.
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<CMat> a_ops = {pauli_z(), pauli_x()};
  std::vector<CMat> b_ops = {s * (pauli_z() + pauli_x()),
                             s * (pauli_z() - pauli_x())};
  DensityMatrix rho = DensityMatrix::checked(bell_projector(0));
  double p[2][2][2][2];
  for (int x = 0; x < 2; ++x) {
    auto [pa0, pa1] = eigenprojectors_pm(a_ops[x]);
    std::vector<CMat> pa = {pa0, pa1};
    for (int y = 0; y < 2; ++y) {
      auto [pb0, pb1] = eigenprojectors_pm(b_ops[y]);
      std::vector<CMat> pb = {pb0, pb1};
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          p[x][y][a][b] = born_probability(rho, {pa[a], pb[b]});
        }
      }
    }
  }

  KnownOracle oracle = [p](const Monomial& m) -> std::optional<double> {
    if (m.zero || !m.scalars.empty()) return std::nullopt;
    int xa = -1, oa = -1, yb = -1, ob = -1;
    for (const OpSym& op : m.ops) {
      if (op.party == 'A' && xa < 0) {
        xa = op.setting;
        oa = op.outcome;
      } else if (op.party == 'B' && yb < 0) {
        yb = op.setting;
        ob = op.outcome;
      } else {
        return std::nullopt;
      }
    }
    if (xa < 0 && yb < 0) return 1.0;
    if (xa < 0) return p[0][yb][0][ob] + p[0][yb][1][ob];
    if (yb < 0) return p[xa][0][oa][0] + p[xa][0][oa][1];
    return p[xa][yb][oa][ob];
  };

  std::vector<PartySpec> parties = {
      {'A', 2, 2, OpKind::projector},
      {'B', 2, 2, OpKind::projector},
      {'E', 1, 4, OpKind::projector},
  };
  auto gens = generate_monomials(parties, LevelSpec::parse("2"));
  std::vector<ObjectiveTerm> objective;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (auto& term : expand_outcome_product({{'A', 0, a, 2},
                                                {'B', 0, b, 2},
                                                {'E', 0, 2 * a + b, 4}})) {
        objective.push_back(std::move(term));
      }
    }
  }
  MomentProblem problem =
      assemble_problem(std::move(gens), DagKind::none, oracle, objective);
  SolveOptions sopt;
  sopt.tol = tol;
  SdpSolution sol = solve_relaxed(realify(problem), sopt);
  if (sol.status != SolveStatus::optimal) {
    throw std::runtime_error(std::string("CHSH guessing solve failed: ") +
                             to_string(sol.status));
  }
  return -std::log2(std::clamp(sol.objective, 0.25, 1.0));
}

}  // namespace bilocert
