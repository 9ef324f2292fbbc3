#include "bilocert/sdpsolver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace bilocert {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_dense(const std::vector<SparseEntry>& entries, int n) {
  MatrixXd m = MatrixXd::Zero(n, n);
  for (const SparseEntry& e : entries) {
    m(e.i, e.j) += e.v;
    if (e.i != e.j) m(e.j, e.i) += e.v;
  }
  return m;
}

double sparse_dot(const std::vector<SparseEntry>& entries, const MatrixXd& z) {
  double total = 0.0;
  for (const SparseEntry& e : entries) {
    total += e.v * (e.i == e.j ? z(e.i, e.i) : 2.0 * z(e.i, e.j));
  }
  return total;
}

void add_scaled(MatrixXd& m, const std::vector<SparseEntry>& entries, double s) {
  for (const SparseEntry& e : entries) {
    m(e.i, e.j) += s * e.v;
    if (e.i != e.j) m(e.j, e.i) += s * e.v;
  }
}

// Largest step alpha with P + alpha * dP PSD; P must be positive definite.
double max_step(const MatrixXd& p, const MatrixXd& dp) {
  Eigen::LLT<MatrixXd> chol(p);
  if (chol.info() != Eigen::Success) return 0.0;
  MatrixXd a = chol.matrixL().solve(dp);
  MatrixXd g = chol.matrixL().solve(a.transpose()).transpose();
  MatrixXd sym = 0.5 * (g + g.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  double lmin = eig.eigenvalues().minCoeff();
  if (lmin >= -1e-14) return 1e20;
  return -1.0 / lmin;
}

struct Scaling {
  MatrixXd w;     // NT scaling point: w * s * w = x
  MatrixXd sinv;  // s^{-1}
};

Scaling nt_scaling(const MatrixXd& s, const MatrixXd& x) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  VectorXd d = es.eigenvalues().cwiseMax(1e-300);
  MatrixXd shalf = es.eigenvectors() * d.cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose();
  MatrixXd sihalf = es.eigenvectors() * d.cwiseSqrt().cwiseInverse().asDiagonal() *
                    es.eigenvectors().transpose();
  MatrixXd t = shalf * x * shalf;
  t = (0.5 * (t + t.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXd> et(t);
  VectorXd e = et.eigenvalues().cwiseMax(1e-300);
  MatrixXd thalf = et.eigenvectors() * e.cwiseSqrt().asDiagonal() *
                   et.eigenvectors().transpose();
  Scaling out;
  out.w = sihalf * thalf * sihalf;
  out.w = (0.5 * (out.w + out.w.transpose())).eval();
  out.sinv = es.eigenvectors() * d.cwiseInverse().asDiagonal() *
             es.eigenvectors().transpose();
  return out;
}

SdpInstance half_instance(const SdpInstance& full) {
  SdpInstance half;
  half.n = full.n / 2;
  half.c = full.c;
  half.objective_constant = full.objective_constant;
  auto take = [&](const std::vector<SparseEntry>& in) {
    std::vector<SparseEntry> out;
    for (const SparseEntry& e : in) {
      if (e.i < half.n && e.j < half.n) out.push_back(e);
    }
    return out;
  };
  half.f0 = take(full.f0);
  half.fi.reserve(full.fi.size());
  for (const auto& f : full.fi) half.fi.push_back(take(f));
  return half;
}

SdpSolution solve_core(const SdpInstance& inst, const SolveOptions& options,
                       bool allow_phase1);

// Maximizes t subject to F(y) - t I PSD; a negative optimum certifies that no
// PSD point exists.
bool certify_infeasible(const SdpInstance& inst, const SolveOptions& options) {
  SdpInstance phase1 = inst;
  phase1.objective_constant = 0.0;
  phase1.c.assign(inst.m() + 1, 0.0);
  phase1.c.back() = 1.0;
  std::vector<SparseEntry> minus_i;
  for (int i = 0; i < inst.n; ++i) minus_i.push_back({i, i, -1.0});
  phase1.fi.push_back(std::move(minus_i));
  SolveOptions opts = options;
  opts.psd_shift = 0.0;
  SdpSolution sol = solve_core(phase1, opts, false);
  return sol.status == SolveStatus::optimal && sol.objective < -10.0 * options.tol;
}

SdpSolution solve_core(const SdpInstance& inst, const SolveOptions& options,
                       bool allow_phase1) {
  const int n = inst.n;
  const int m = inst.m();
  SdpSolution sol;
  sol.y.assign(m, 0.0);

  MatrixXd f0 = to_dense(inst.f0, n);
  if (options.psd_shift != 0.0) {
    f0 += options.psd_shift * MatrixXd::Identity(n, n);
  }
  const double f0_norm = f0.norm();
  double c_norm = 0.0;
  for (double ci : inst.c) c_norm = std::max(c_norm, std::abs(ci));

  if (m == 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(f0, Eigen::EigenvaluesOnly);
    sol.min_eigenvalue = eig.eigenvalues().minCoeff();
    sol.objective = inst.objective_constant;
    sol.dual_objective = inst.objective_constant;
    sol.gap = 0.0;
    sol.status = sol.min_eigenvalue >= -10.0 * options.tol
                     ? SolveStatus::optimal
                     : SolveStatus::infeasible;
    return sol;
  }

  double s0 = 1.0 + f0_norm;
  double x0 = 1.0 + c_norm;
  MatrixXd s = s0 * MatrixXd::Identity(n, n);
  MatrixXd x = x0 * MatrixXd::Identity(n, n);
  VectorXd y = VectorXd::Zero(m);
  VectorXd c(m);
  for (int i = 0; i < m; ++i) c(i) = inst.c[i];

  const double huge = 1e14 * (1.0 + f0_norm + c_norm);
  bool diverged = false;
  double best_mu = std::numeric_limits<double>::infinity();
  int stalled = 0;

  for (int iter = 0; iter < options.max_iter; ++iter) {
    MatrixXd rp = f0 - s;
    for (int i = 0; i < m; ++i) add_scaled(rp, inst.fi[i], y(i));
    VectorXd rd(m);
    for (int i = 0; i < m; ++i) rd(i) = -c(i) - sparse_dot(inst.fi[i], x);

    const double gap = (s.cwiseProduct(x)).sum();
    const double mu = gap / n;
    const double primal = c.dot(y) + inst.objective_constant;
    const double dual_f0 = sparse_dot(inst.f0, x) +
                           options.psd_shift * x.trace() +
                           inst.objective_constant;
    const double pr = rp.norm() / (1.0 + f0_norm);
    const double dr = rd.lpNorm<Eigen::Infinity>() / (1.0 + c_norm);
    const double gr = std::abs(gap) / (1.0 + std::abs(primal) + std::abs(dual_f0));

    IterationStat stat;
    stat.primal = primal;
    stat.dual = primal + gap;
    stat.mu = mu;
    stat.primal_residual = pr;
    stat.dual_residual = dr;
    sol.trace.push_back(stat);
    sol.iterations = iter;
    sol.objective = primal;
    sol.dual_objective = dual_f0;
    sol.gap = gap;

    if (pr <= options.tol && dr <= options.tol && gr <= options.tol) {
      sol.status = SolveStatus::optimal;
      break;
    }
    if (!rp.allFinite() || !rd.allFinite() || y.lpNorm<Eigen::Infinity>() > huge) {
      diverged = true;
      break;
    }
    if (mu < 0.9 * best_mu) {
      best_mu = mu;
      stalled = 0;
    } else if (++stalled >= 8) {
      break;
    }

    Scaling nt = nt_scaling(s, x);
    MatrixXd wrw = nt.w * rp * nt.w;

    // Schur complement M_ij = Tr(F_i W F_j W).
    MatrixXd schur(m, m);
    for (int i = 0; i < m; ++i) {
      MatrixXd v = MatrixXd::Zero(n, n);
      for (const SparseEntry& e : inst.fi[i]) {
        v.noalias() += e.v * nt.w.col(e.i) * nt.w.row(e.j);
        if (e.i != e.j) v.noalias() += e.v * nt.w.col(e.j) * nt.w.row(e.i);
      }
      for (int j = i; j < m; ++j) {
        schur(i, j) = sparse_dot(inst.fi[j], v);
        schur(j, i) = schur(i, j);
      }
    }
    Eigen::LLT<MatrixXd> chol;
    double ridge = 0.0;
    const double base = std::max(schur.trace() / m, 1e-300);
    for (int attempt = 0; attempt < 8; ++attempt) {
      MatrixXd reg = schur;
      if (ridge > 0.0) reg += ridge * MatrixXd::Identity(m, m);
      chol.compute(reg);
      if (chol.info() == Eigen::Success) break;
      ridge = ridge == 0.0 ? 1e-14 * base : 100.0 * ridge;
    }
    if (chol.info() != Eigen::Success) {
      diverged = true;
      break;
    }

    auto direction = [&](double sigma_mu, MatrixXd& ds, MatrixXd& dx,
                         VectorXd& dy) {
      MatrixXd z = -x - wrw;
      if (sigma_mu != 0.0) z += sigma_mu * nt.sinv;
      VectorXd rhs(m);
      for (int i = 0; i < m; ++i) rhs(i) = sparse_dot(inst.fi[i], z) - rd(i);
      dy = chol.solve(rhs);
      ds = rp;
      for (int i = 0; i < m; ++i) add_scaled(ds, inst.fi[i], dy(i));
      dx = z - nt.w * ds * nt.w + wrw;
      dx = (0.5 * (dx + dx.transpose())).eval();
    };

    // Predictor.
    MatrixXd ds_aff, dx_aff;
    VectorXd dy_aff;
    direction(0.0, ds_aff, dx_aff, dy_aff);
    double ap = std::min(1.0, max_step(s, ds_aff));
    double ad = std::min(1.0, max_step(x, dx_aff));
    double mu_aff =
        ((s + ap * ds_aff).cwiseProduct(x + ad * dx_aff)).sum() / n;
    double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0);

    // Corrector.
    MatrixXd ds, dx;
    VectorXd dy;
    direction(sigma * mu, ds, dx, dy);
    ap = std::min(1.0, 0.98 * max_step(s, ds));
    ad = std::min(1.0, 0.98 * max_step(x, dx));
    if (ap <= 1e-14 && ad <= 1e-14) {
      diverged = pr > 100.0 * options.tol;
      break;
    }

    y += ap * dy;
    s += ap * ds;
    x += ad * dx;
    s = (0.5 * (s + s.transpose())).eval();
    x = (0.5 * (x + x.transpose())).eval();
    if (!s.allFinite() || !x.allFinite() || !y.allFinite()) {
      diverged = true;
      break;
    }
  }

  for (int i = 0; i < m; ++i) sol.y[i] = y(i);
  {
    MatrixXd fy = f0;
    for (int i = 0; i < m; ++i) add_scaled(fy, inst.fi[i], y(i));
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(fy, Eigen::EigenvaluesOnly);
    sol.min_eigenvalue = eig.eigenvalues().minCoeff();
  }

  if (sol.status != SolveStatus::optimal) {
    bool never_feasible =
        sol.trace.empty() ||
        sol.trace.back().primal_residual > 100.0 * options.tol;
    if (allow_phase1 && never_feasible && certify_infeasible(inst, options)) {
      sol.status = SolveStatus::infeasible;
    } else if (diverged) {
      sol.status = SolveStatus::numerical_failure;
    } else {
      sol.status = SolveStatus::max_iter;
    }
  }
  return sol;
}

}  // namespace

void SdpInstance::validate() const {
  if (n <= 0) throw std::invalid_argument("sdp: non-positive dimension");
  if (c.size() != fi.size()) throw std::invalid_argument("sdp: objective size mismatch");
  if (duplicate_halves && n % 2 != 0) {
    throw std::invalid_argument("sdp: duplicate_halves requires even dimension");
  }
  auto check = [&](const std::vector<SparseEntry>& entries) {
    for (const SparseEntry& e : entries) {
      if (e.i < 0 || e.j < e.i || e.j >= n) {
        throw std::invalid_argument("sdp: entry outside upper triangle");
      }
      if (!std::isfinite(e.v)) throw std::invalid_argument("sdp: non-finite entry");
    }
  };
  check(f0);
  for (const auto& f : fi) check(f);
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

SdpSolution solve(const SdpInstance& instance, const SolveOptions& options) {
  instance.validate();
  if (instance.duplicate_halves) {
    return solve_core(half_instance(instance), options, true);
  }
  return solve_core(instance, options, true);
}

VerifyReport verify(const SdpInstance& instance, const SdpSolution& solution,
                    double tol) {
  instance.validate();
  VerifyReport report;
  const int n = instance.n;
  if (static_cast<int>(solution.y.size()) != instance.m()) {
    report.message = "solution length mismatch";
    return report;
  }
  MatrixXd fy = to_dense(instance.f0, n);
  for (int i = 0; i < instance.m(); ++i) {
    add_scaled(fy, instance.fi[i], solution.y[i]);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(fy, Eigen::EigenvaluesOnly);
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.objective = instance.objective_constant;
  for (int i = 0; i < instance.m(); ++i) {
    report.objective += instance.c[i] * solution.y[i];
  }
  report.objective_mismatch = std::abs(report.objective - solution.objective);
  std::ostringstream msg;
  report.ok = true;
  if (report.min_eigenvalue < -10.0 * tol) {
    report.ok = false;
    msg << "F(y) has eigenvalue " << report.min_eigenvalue << "; ";
  }
  if (report.objective_mismatch > 10.0 * tol * (1.0 + std::abs(report.objective))) {
    report.ok = false;
    msg << "objective mismatch " << report.objective_mismatch << "; ";
  }
  report.message = msg.str();
  return report;
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<SparseEntry> sorted_entries(std::vector<SparseEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const SparseEntry& a, const SparseEntry& b) {
              return std::tie(a.i, a.j) < std::tie(b.i, b.j);
            });
  return entries;
}

}  // namespace

void write_sdpa(const SdpInstance& instance, std::ostream& out) {
  instance.validate();
  out << "* bilocert moment relaxation export\n";
  out << "* objective_constant = " << fmt17(instance.objective_constant) << "\n";
  if (instance.duplicate_halves) out << "* duplicate_halves = 1\n";
  out << instance.m() << "\n1\n" << instance.n << "\n";
  for (int i = 0; i < instance.m(); ++i) {
    out << (i ? " " : "") << fmt17(-instance.c[i]);
  }
  if (instance.m() == 0) out << "0";
  out << "\n";
  for (const SparseEntry& e : sorted_entries(instance.f0)) {
    if (e.v == 0.0) continue;
    out << "0 1 " << e.i + 1 << " " << e.j + 1 << " " << fmt17(-e.v) << "\n";
  }
  for (int k = 0; k < instance.m(); ++k) {
    for (const SparseEntry& e : sorted_entries(instance.fi[k])) {
      if (e.v == 0.0) continue;
      out << k + 1 << " 1 " << e.i + 1 << " " << e.j + 1 << " " << fmt17(e.v)
          << "\n";
    }
  }
}

std::string write_sdpa(const SdpInstance& instance) {
  std::ostringstream out;
  write_sdpa(instance, out);
  return out.str();
}

SdpInstance read_sdpa(std::istream& in) {
  SdpInstance instance;
  std::vector<std::string> tokens;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '*' || line[first] == '"') {
      if (saw_header) continue;
      std::istringstream cs(line.substr(first + 1));
      std::string key, eq;
      double value = 0.0;
      if (cs >> key >> eq >> value && eq == "=") {
        if (key == "objective_constant") instance.objective_constant = value;
        if (key == "duplicate_halves") instance.duplicate_halves = value != 0.0;
      }
      continue;
    }
    saw_header = true;
    for (char& ch : line) {
      if (ch == ',' || ch == '(' || ch == ')' || ch == '{' || ch == '}') ch = ' ';
    }
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  size_t pos = 0;
  auto next = [&]() -> double {
    if (pos >= tokens.size()) throw std::runtime_error("sdpa: truncated file");
    try {
      return std::stod(tokens[pos++]);
    } catch (const std::exception&) {
      throw std::runtime_error("sdpa: bad token '" + tokens[pos - 1] + "'");
    }
  };
  const int m = static_cast<int>(next());
  const int nblock = static_cast<int>(next());
  if (m < 0) throw std::runtime_error("sdpa: negative mDIM");
  if (nblock != 1) throw std::runtime_error("sdpa: only single-block files supported");
  const int n = static_cast<int>(next());
  if (n <= 0) throw std::runtime_error("sdpa: diagonal blocks unsupported");
  instance.n = n;
  instance.c.resize(m);
  instance.fi.assign(m, {});
  for (int i = 0; i < m; ++i) instance.c[i] = -next();
  if (m == 0) next();  // placeholder objective entry
  while (pos < tokens.size()) {
    const int matno = static_cast<int>(next());
    const int blkno = static_cast<int>(next());
    const int i = static_cast<int>(next()) - 1;
    const int j = static_cast<int>(next()) - 1;
    const double v = next();
    if (blkno != 1) throw std::runtime_error("sdpa: bad block index");
    if (matno < 0 || matno > m) throw std::runtime_error("sdpa: bad matrix index");
    if (i < 0 || j < i || j >= n) throw std::runtime_error("sdpa: bad entry position");
    if (matno == 0) {
      instance.f0.push_back({i, j, -v});
    } else {
      instance.fi[matno - 1].push_back({i, j, v});
    }
  }
  instance.validate();
  return instance;
}

SdpInstance read_sdpa(const std::string& text) {
  std::istringstream in(text);
  return read_sdpa(in);
}

}  // namespace bilocert
