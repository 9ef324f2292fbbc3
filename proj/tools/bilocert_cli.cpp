// Command-line surface: reference tables, sweeps, analytic bounds, and the
// experimental-counts pipeline. Exit codes: 0 success, 1 acceptance mismatch,
// 2 usage or parse error, 3 numerical non-convergence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bilocert/bounds.hpp"
#include "bilocert/certify.hpp"
#include "bilocert/ingest.hpp"
#include "bilocert/scenario.hpp"

namespace {

using namespace bilocert;

double parse_double(const std::string& text, const char* what) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (...) {
    pos = std::string::npos;
  }
  if (pos != text.size() || text.empty()) {
    throw std::invalid_argument(std::string("bad ") + what + " value '" +
                                text + "'");
  }
  return v;
}

// "lo:hi:step" inclusive grid, or a single value.
std::vector<double> parse_grid(const std::string& text, const char* what) {
  if (text.find(':') == std::string::npos) {
    return {parse_double(text, what)};
  }
  std::istringstream in(text);
  std::string lo, hi, step;
  if (!std::getline(in, lo, ':') || !std::getline(in, hi, ':') ||
      !std::getline(in, step) || step.find(':') != std::string::npos) {
    throw std::invalid_argument(std::string("bad ") + what +
                                " grid (expected lo:hi:step)");
  }
  return grid_range(parse_double(lo, what), parse_double(hi, what),
                    parse_double(step, what));
}

GuessTarget parse_target(const std::string& text) {
  if (text == "abc") return GuessTarget::abc();
  if (text == "ac") return GuessTarget::ac();
  throw std::invalid_argument("unknown target: " + text);
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    if (!content.empty() && content.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!content.empty() && content.back() != '\n') out << '\n';
}

std::string reports_csv(const std::vector<CertificationReport>& rows) {
  std::ostringstream s;
  s << csv_header() << '\n';
  for (const auto& r : rows) s << csv_row(r) << '\n';
  return s.str();
}

std::string reports_json(const std::vector<CertificationReport>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(nlohmann::json::parse(r.to_json()));
  return arr.dump(2);
}

struct Table1Flags {
  double tol = 1e-7;
  std::string level;
  std::string out;
  std::string format = "json";
  std::string export_dir;
};

int cmd_table1(const Table1Flags& flags) {
  struct Cell {
    EveModel eve;
    BobKind bob;
    GuessTarget target;
    double expected;
  };
  const std::vector<Cell> cells = {
      {EveModel::SE, BobKind::bsm_1x4, GuessTarget::abc(), 1.41},
      {EveModel::SE, BobKind::separable_2x2, GuessTarget::abc(), 1.41},
      {EveModel::DE, BobKind::bsm_1x4, GuessTarget::abc(), 3.00},
      {EveModel::DE, BobKind::separable_2x2, GuessTarget::abc(), 2.41},
      {EveModel::SE, BobKind::bsm_1x4, GuessTarget::ac(), 1.41},
      {EveModel::SE, BobKind::separable_2x2, GuessTarget::ac(), 1.41},
      {EveModel::DE, BobKind::bsm_1x4, GuessTarget::ac(), 1.41},
      {EveModel::DE, BobKind::separable_2x2, GuessTarget::ac(), 1.41},
  };

  if (!flags.export_dir.empty()) {
    std::filesystem::create_directories(flags.export_dir);
  }
  std::vector<CertificationReport> reports(cells.size());
  parallel_for(static_cast<int>(cells.size()), [&](int i) {
    const Cell& cell = cells[i];
    BilocalScenario scenario;
    scenario.strategy.bob.kind = cell.bob;
    CertifyOptions options;
    options.level = flags.level;
    options.tol = flags.tol;
    if (!flags.export_dir.empty()) {
      options.export_sdpa = flags.export_dir + "/table1_" +
                            eve_model_name(cell.eve) + "_" +
                            bob_kind_name(cell.bob) + "_" +
                            cell.target.name() + ".dat-s";
    }
    reports[i] = certify(scenario, cell.eve, cell.target, options);
  });

  auto cell_text = [&](int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.4f", reports[i].hmin_certified);
    return std::string(buf);
  };
  std::cout << "target      se-1x4    se-2x2    de-1x4    de-2x2\n";
  std::cout << "abc    " << cell_text(0) << "  " << cell_text(1) << "  "
            << cell_text(2) << "  " << cell_text(3) << '\n';
  std::cout << "ac     " << cell_text(4) << "  " << cell_text(5) << "  "
            << cell_text(6) << "  " << cell_text(7) << '\n';

  bool pass = true;
  for (size_t i = 0; i < cells.size(); ++i) {
    const double got = reports[i].hmin_certified;
    const double diff = got - cells[i].expected;
    if (!(std::abs(diff) <= 0.02)) {
      pass = false;
      std::cout << "MISMATCH " << cells[i].target.name() << " "
                << eve_model_name(cells[i].eve) << "-"
                << bob_kind_name(cells[i].bob) << ": got " << got
                << " expected " << cells[i].expected << " (diff " << diff
                << ", status " << to_string(reports[i].solver_status) << ")\n";
    }
  }

  if (!flags.out.empty()) {
    if (flags.format == "csv") {
      write_output(flags.out, reports_csv(reports));
    } else {
      nlohmann::json j;
      j["cells"] = nlohmann::json::parse(reports_json(reports));
      j["pass"] = pass;
      write_output(flags.out, j.dump(2));
    }
  }
  return pass ? 0 : 1;
}

struct SweepFlags {
  std::string scenario = "se";
  std::string bob = "1x4";
  std::string outer = "standard";
  double delta = 0.0;
  double theta = 0.0;
  double v = 1.0;
  double c = 0.0;
  std::string indist = "1";
  std::string target = "abc";
  std::string visibility;
  std::string level;
  double tol = 1e-7;
  std::string out;
  std::string format = "csv";
};

int cmd_sweep(const SweepFlags& flags) {
  const EveModel eve = eve_model_from_name(flags.scenario);
  const GuessTarget target = parse_target(flags.target);

  BilocalScenario base;
  base.strategy.bob.kind = bob_kind_from_name(flags.bob);
  base.strategy.bob.theta = flags.theta;
  base.strategy.outer.kind = outer_kind_from_name(flags.outer);
  base.strategy.outer.delta = flags.delta;
  base.noise.v = flags.v;
  base.noise.c = flags.c;

  const bool p_sweep = flags.indist.find(':') != std::string::npos;
  base.noise.p_indist = p_sweep ? 1.0 : parse_double(flags.indist, "indist");

  CertifyOptions options;
  options.level = flags.level;
  options.tol = flags.tol;

  std::vector<CertificationReport> rows;
  if (!flags.visibility.empty() && p_sweep) {
    throw std::invalid_argument("choose one grid: --visibility or --indist");
  } else if (!flags.visibility.empty()) {
    auto grid = parse_grid(flags.visibility, "visibility");
    if (grid.empty()) throw std::invalid_argument("empty visibility grid");
    rows = sweep_visibility(base, eve, target, grid, options);
  } else if (p_sweep) {
    auto grid = parse_grid(flags.indist, "indist");
    if (grid.empty()) throw std::invalid_argument("empty indist grid");
    rows = sweep_experimental(base, eve, target, grid, flags.v, flags.c,
                              options);
  } else {
    throw std::invalid_argument(
        "sweep needs --visibility or an --indist range");
  }

  write_output(flags.out,
               flags.format == "json" ? reports_json(rows) : reports_csv(rows));

  bool any_solved = false;
  for (const auto& r : rows) {
    if (r.solver_status != SolveStatus::numerical_failure) any_solved = true;
  }
  return any_solved ? 0 : 3;
}

struct BoundFlags {
  std::string strategy;
  std::string bob = "1x4";
  std::string outer = "standard";
  double delta = 0.0;
  double theta = 0.0;
  double v = 1.0;
  double c = 0.0;
  double indist = 1.0;
  std::string target = "abc";
  std::string out;
};

int cmd_bound(const BoundFlags& flags) {
  const GuessTarget target = parse_target(flags.target);
  BilocalScenario scenario;
  scenario.strategy.bob.kind = bob_kind_from_name(flags.bob);
  scenario.strategy.bob.theta = flags.theta;
  scenario.strategy.outer.kind = outer_kind_from_name(flags.outer);
  scenario.strategy.outer.delta = flags.delta;
  scenario.noise.v = flags.v;
  scenario.noise.c = flags.c;
  scenario.noise.p_indist = flags.indist;
  scenario.validate();

  const Behavior behavior = compute_behavior(scenario);
  auto run_one = [&](const std::string& name) -> BoundReport {
    if (name == "uniform") return uniform_guess(behavior, target);
    if (name == "informed") return informed_guess(behavior, target);
    if (name == "bell-projection" || name == "node-vulnerability") {
      return node_vulnerability_attack(scenario, target);
    }
    throw std::invalid_argument("unknown strategy: " + name);
  };

  if (!flags.strategy.empty()) {
    write_output(flags.out, run_one(flags.strategy).to_json());
    return 0;
  }
  nlohmann::json j;
  j["uniform"] = nlohmann::json::parse(run_one("uniform").to_json());
  j["informed"] = nlohmann::json::parse(run_one("informed").to_json());
  if (scenario.strategy.bob.kind != BobKind::rotated_2x4) {
    j["bell_projection"] =
        nlohmann::json::parse(run_one("bell-projection").to_json());
  }
  write_output(flags.out, j.dump(2));
  return 0;
}

struct ProjectFlags {
  std::string counts;
  double tol = 1e-7;
  long seed = 12345;
  std::string out;
  bool then_certify = false;
  std::string scenario = "se";
  std::string target = "abc";
  std::string level;
};

int cmd_project(const ProjectFlags& flags) {
  CountsTable counts = CountsTable::from_csv_file(flags.counts);
  ProjectionResult result =
      project_ns(counts, 1e-9, static_cast<uint32_t>(flags.seed));

  nlohmann::json j;
  j["projection"] = nlohmann::json::parse(result.to_json());
  if (flags.then_certify && result.converged) {
    CertifyOptions options;
    options.level = flags.level;
    options.tol = flags.tol;
    CertificationReport rep =
        certify_behavior(result.behavior, eve_model_from_name(flags.scenario),
                         parse_target(flags.target), options);
    j["certification"] = nlohmann::json::parse(rep.to_json());
  }
  write_output(flags.out, j.dump(2));
  return result.converged ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "bilocert: certified randomness bounds in the bilocal network"};
  app.require_subcommand(1);

  Table1Flags t1;
  CLI::App* table1 = app.add_subcommand(
      "table1", "Reference min-entropy table at maximal visibility");
  table1->add_option("--tol", t1.tol, "SDP convergence tolerance");
  table1->add_option("--level", t1.level, "relaxation level override");
  table1->add_option("--out", t1.out, "write results to this path");
  table1->add_option("--format", t1.format, "output format")
      ->check(CLI::IsMember({"json", "csv"}));
  table1->add_option("--export-sdpa", t1.export_dir,
                     "write one .dat-s instance per cell into this directory");

  SweepFlags sw;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Certify along a visibility or indistinguishability grid");
  sweep->add_option("--scenario", sw.scenario, "eavesdropper model")
      ->check(CLI::IsMember({"se", "de"}));
  sweep->add_option("--bob", sw.bob, "joining measurement variant")
      ->check(CLI::IsMember({"1x4", "2x2", "2x4"}));
  sweep->add_option("--strategy-outer", sw.outer, "outer measurement family")
      ->check(CLI::IsMember({"standard", "tilted"}));
  sweep->add_option("--delta", sw.delta, "tilt angle");
  sweep->add_option("--theta", sw.theta, "joining rotation angle");
  sweep->add_option("--v", sw.v, "visibility (fixed when sweeping --indist)");
  sweep->add_option("--c", sw.c, "colored-noise fraction");
  sweep->add_option("--indist", sw.indist,
                    "indistinguishability, scalar or lo:hi:step grid");
  sweep->add_option("--target", sw.target, "guessing target")
      ->check(CLI::IsMember({"abc", "ac"}));
  sweep->add_option("--visibility", sw.visibility, "visibility grid lo:hi:step");
  sweep->add_option("--level", sw.level, "relaxation level override");
  sweep->add_option("--tol", sw.tol, "SDP convergence tolerance");
  sweep->add_option("--out", sw.out, "write results to this path");
  sweep->add_option("--format", sw.format, "output format")
      ->check(CLI::IsMember({"json", "csv"}));

  BoundFlags bd;
  CLI::App* bound =
      app.add_subcommand("bound", "Closed-form eavesdropping bounds");
  bound->add_option("--strategy", bd.strategy, "single strategy to evaluate")
      ->check(CLI::IsMember({"uniform", "informed", "bell-projection",
                             "node-vulnerability"}));
  bound->add_option("--bob", bd.bob, "joining measurement variant")
      ->check(CLI::IsMember({"1x4", "2x2", "2x4"}));
  bound->add_option("--strategy-outer", bd.outer, "outer measurement family")
      ->check(CLI::IsMember({"standard", "tilted"}));
  bound->add_option("--delta", bd.delta, "tilt angle");
  bound->add_option("--theta", bd.theta, "joining rotation angle");
  bound->add_option("--v", bd.v, "visibility");
  bound->add_option("--c", bd.c, "colored-noise fraction");
  bound->add_option("--indist", bd.indist, "indistinguishability");
  bound->add_option("--target", bd.target, "guessing target")
      ->check(CLI::IsMember({"abc", "ac"}));
  bound->add_option("--out", bd.out, "write results to this path");

  ProjectFlags pj;
  CLI::App* project = app.add_subcommand(
      "project", "Project coincidence counts onto the no-signaling set");
  project->add_option("counts", pj.counts, "counts CSV path")->required();
  project->add_option("--tol", pj.tol, "SDP tolerance for --then-certify");
  project->add_option("--seed", pj.seed, "multi-start seed");
  project->add_option("--out", pj.out, "write results to this path");
  project->add_flag("--then-certify", pj.then_certify,
                    "certify the projected behavior");
  project->add_option("--scenario", pj.scenario, "eavesdropper model")
      ->check(CLI::IsMember({"se", "de"}));
  project->add_option("--target", pj.target, "guessing target")
      ->check(CLI::IsMember({"abc", "ac"}));
  project->add_option("--level", pj.level, "relaxation level override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (table1->parsed()) return cmd_table1(t1);
    if (sweep->parsed()) return cmd_sweep(sw);
    if (bound->parsed()) return cmd_bound(bd);
    if (project->parsed()) return cmd_project(pj);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
