#pragma once

// Dense primal-dual interior-point solver for small real standard-form SDPs
//
//   maximize   c . y    subject to   F(y) = F0 + sum_i y_i F_i  PSD,
//
// with the Lagrangian dual  minimize Tr(F0 X)  s.t.  Tr(F_i X) = -c_i, X PSD.

#include <iosfwd>
#include <string>
#include <vector>

namespace bilocert {

// Upper-triangle entry (i <= j) of a symmetric matrix.
struct SparseEntry {
  int i = 0;
  int j = 0;
  double v = 0.0;
};

struct SdpInstance {
  int n = 0;                                // PSD matrix dimension
  std::vector<SparseEntry> f0;              // constant block
  std::vector<std::vector<SparseEntry>> fi; // one block per variable
  std::vector<double> c;                    // objective, same length as fi
  double objective_constant = 0.0;
  // The matrix is block-diagonal with two identical n/2 blocks (a realified
  // real problem); the solver then works on a single block.
  bool duplicate_halves = false;

  int m() const { return static_cast<int>(fi.size()); }
  void validate() const;
};

// max_iter covers both the iteration cap and a detected progress stall; the
// best iterate is returned either way.
enum class SolveStatus { optimal, max_iter, infeasible, numerical_failure };

const char* to_string(SolveStatus status);

struct SolveOptions {
  double tol = 1e-7;
  int max_iter = 200;
  // Relaxes the cone to F(y) >= -psd_shift * I. For maximization relaxations
  // this only enlarges the feasible set, so bounds stay valid; it restores an
  // interior when pinned data sits exactly on the boundary.
  double psd_shift = 0.0;
};

struct IterationStat {
  double primal = 0.0;  // c.y (+ constant)
  double dual = 0.0;    // primal + Tr(S X), a valid upper bound for PSD S, X
  double mu = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct SdpSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  std::vector<double> y;
  double objective = 0.0;       // c.y + objective_constant
  double dual_objective = 0.0;  // Tr(F0 X) + objective_constant
  double gap = 0.0;             // Tr(S X) at termination
  int iterations = 0;
  double min_eigenvalue = 0.0;  // of F(y), single block
  std::vector<IterationStat> trace;
};

SdpSolution solve(const SdpInstance& instance, const SolveOptions& options = {});

struct VerifyReport {
  bool ok = false;
  double min_eigenvalue = 0.0;
  double objective = 0.0;
  double objective_mismatch = 0.0;
  std::string message;
};

// Independent recomputation of F(y) spectrum and objective; flags violations
// beyond 10 * tol.
VerifyReport verify(const SdpInstance& instance, const SdpSolution& solution,
                    double tol);

// SDPA sparse format (".dat-s"). The exported problem is the equivalent
// minimization min (-c).x s.t. sum_i x_i F_i - (-F0) PSD, so our optimum
// equals minus the SDPA optimum. objective_constant travels in a comment.
void write_sdpa(const SdpInstance& instance, std::ostream& out);
std::string write_sdpa(const SdpInstance& instance);
SdpInstance read_sdpa(std::istream& in);
SdpInstance read_sdpa(const std::string& text);

}  // namespace bilocert
