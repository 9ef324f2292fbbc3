#pragma once

// Experimental-data pipeline: coincidence counts to empirical behaviors, and
// maximum-likelihood projection onto the no-signaling-plus-independence set.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "bilocert/scenario.hpp"

namespace bilocert {

// Coincidence counts N(abc|xz) for the single-setting four-outcome joining
// measurement: a, c, x, z binary; b in 0..3 (frozen Bell order).
struct CountsTable {
  // Flattened over (x, z, a, b, c), row-major.
  std::array<int64_t, 64> n{};

  static size_t index(int x, int z, int a, int b, int c);
  int64_t& at(int x, int z, int a, int b, int c);
  int64_t at(int x, int z, int a, int b, int c) const;
  int64_t slice_total(int x, int z) const;

  // Nonnegative entries, every (x, z) slice with a positive total.
  void validate() const;

  // CSV with header "x,z,a,b,c,count"; missing cells default to zero,
  // duplicate cells are rejected.
  static CountsTable from_csv(std::istream& in);
  static CountsTable from_csv(const std::string& text);
  static CountsTable from_csv_file(const std::string& path);
};

// Per-slice relative frequencies. The result is normalized but may signal;
// callers should validate(normalization_only = true).
Behavior empirical_behavior(const CountsTable& counts);

// (ns_residual, independence_residual): the largest absolute no-signaling
// violation over all marginal equalities, and the largest absolute deviation
// of p(ac|xz) from p(a|x) p(c|z) (marginals averaged over the other settings).
std::pair<double, double> ns_residuals(const Behavior& behavior);

struct ProjectionResult {
  Behavior behavior;
  double log_likelihood = 0.0;
  double ns_residual = 0.0;
  double independence_residual = 0.0;
  int64_t iterations = 0;
  bool converged = false;
  uint32_t seed = 0;

  std::string to_json() const;
};

// Maximum-likelihood projection of the counts onto distributions that are
// no-signaling with independent outer marginals: penalty continuation on the
// product constraint with projected gradient ascent over the no-signaling
// polytope, eight perturbed starts from the given seed, best log-likelihood
// wins (ties by start index). `tol` is the inner-loop relative objective
// change at which a penalty phase stops.
ProjectionResult project_ns(const CountsTable& counts, double tol = 1e-9,
                            uint32_t seed = 12345);

}  // namespace bilocert
