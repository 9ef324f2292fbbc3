#pragma once

// Explicit quantum realizations of the guessing scenario used to validate
// moment problems: every pinned cell must match the realized moment, every
// cell sharing a variable must agree on its value, and the realized matrix
// must be PSD. Two constructions are provided: a trivial eavesdropper (first
// outcome always) and a classically correlated one that measures a flag
// recording the Bell component emitted by its accessible source(s).

#include <complex>
#include <map>
#include <stdexcept>
#include <vector>

#include "bilocert/bounds.hpp"
#include "bilocert/momentgen.hpp"
#include "bilocert/qcore.hpp"
#include "bilocert/scenario.hpp"

namespace realize {

struct NetworkRealization {
  bilocert::CMat rho;
  // ops[party][setting][outcome], lifted to the full space.
  std::map<char, std::vector<std::vector<bilocert::CMat>>> ops;
};

struct Moments {
  double worst_pin = 0.0;
  double worst_var = 0.0;
  double min_eig = 0.0;
  double objective = 0.0;
  std::vector<std::complex<double>> var_values;
  std::vector<bool> var_seen;
};

inline bilocert::CMat word_matrix(const NetworkRealization& r,
                                  const std::vector<bilocert::OpSym>& word) {
  bilocert::CMat m = bilocert::identity(static_cast<int>(r.rho.rows()));
  for (const bilocert::OpSym& s : word) {
    const auto& povm = r.ops.at(s.party);
    m = m * povm[s.setting][s.outcome];
  }
  return m;
}

inline std::complex<double> scalar_value(const NetworkRealization& r,
                                         const bilocert::ScalarSym& s) {
  std::complex<double> v = (r.rho * word_matrix(r, s.ops)).trace();
  return s.conj ? std::conj(v) : v;
}

// Evaluates every cell of problem on the realization and cross-checks the
// symbolic structure against the realized values.
inline Moments evaluate(const bilocert::MomentProblem& problem,
                        const NetworkRealization& r) {
  using bilocert::CMat;
  const int n = problem.size;
  std::vector<CMat> w(n), rho_wdag(n);
  std::vector<std::complex<double>> col_scalar(n, 1.0), row_scalar(n, 1.0);
  for (int i = 0; i < n; ++i) {
    w[i] = word_matrix(r, problem.generators[i].ops);
    rho_wdag[i] = r.rho * w[i].adjoint();
    for (const bilocert::ScalarSym& s : problem.generators[i].scalars) {
      std::complex<double> v = scalar_value(r, s);
      col_scalar[i] *= v;
      row_scalar[i] *= std::conj(v);
    }
  }

  Moments out;
  out.var_values.assign(problem.var_count, 0.0);
  out.var_seen.assign(problem.var_count, false);
  CMat gamma = CMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      std::complex<double> val =
          (w[j].transpose().cwiseProduct(rho_wdag[i])).sum() * row_scalar[i] *
          col_scalar[j];
      gamma(i, j) = val;
      gamma(j, i) = std::conj(val);
      const auto& cell = problem.at(i, j);
      if (cell.var < 0) {
        out.worst_pin = std::max(out.worst_pin, std::abs(val - cell.coeff));
        continue;
      }
      std::complex<double> u = val / cell.coeff;
      if (cell.conj) u = std::conj(u);
      if (!out.var_seen[cell.var]) {
        out.var_seen[cell.var] = true;
        out.var_values[cell.var] = u;
      } else {
        out.worst_var =
            std::max(out.worst_var, std::abs(u - out.var_values[cell.var]));
      }
    }
  }
  out.min_eig = bilocert::min_eigenvalue(gamma);

  std::complex<double> obj = problem.objective_constant;
  for (const auto& e : problem.objective) {
    if (e.var < 0) {
      obj += e.coeff;
      continue;
    }
    std::complex<double> u = out.var_values[e.var];
    obj += e.coeff * (e.conj ? std::conj(u) : u);
  }
  out.objective = obj.real();
  return out;
}

struct EveShape {
  int n_e = 1;
  int n_f = 1;  // 1 for SE (no F party)
};

// Outcome cardinalities of the eavesdropper parties as the built problem
// defines them (retained projectors cover outcomes 0..N-2).
inline EveShape eve_shape(const bilocert::MomentProblem& problem) {
  EveShape shape;
  int max_e = -1, max_f = -1;
  for (const bilocert::Monomial& g : problem.generators) {
    for (const bilocert::OpSym& s : g.ops) {
      if (s.party == 'E') max_e = std::max(max_e, s.outcome);
      if (s.party == 'F') max_f = std::max(max_f, s.outcome);
    }
    for (const bilocert::ScalarSym& sc : g.scalars) {
      for (const bilocert::OpSym& s : sc.ops) {
        if (s.party == 'E') max_e = std::max(max_e, s.outcome);
        if (s.party == 'F') max_f = std::max(max_f, s.outcome);
      }
    }
  }
  if (max_e < 0) throw std::runtime_error("problem has no E symbols");
  shape.n_e = max_e + 2;
  if (max_f >= 0) shape.n_f = max_f + 2;
  return shape;
}

// Layout: A(2) x B1(2) x B2(2) x C(2) x ancE(4) x ancF(4), dim 256. The state
// is sum_{k,l} lam_k lam_l P_k(A,B1) P_l(B2,C) |k><k|_ancE |l><l|_ancF, so the
// ancillas hold classical flags of the Bell components of their source.
// SE's single eavesdropper measures both flags; DE's E and F measure their
// own wing's flag only, preserving the wing split.
inline NetworkRealization correlated_eve(const bilocert::BilocalScenario& sc,
                                         bilocert::EveModel eve,
                                         const EveShape& shape) {
  using namespace bilocert;
  NetworkRealization r;
  CMat rho1 = noisy_state(sc.noise.v, sc.noise.c).mat;
  CMat rho2 = noisy_state(sc.second().v, sc.second().c).mat;
  r.rho = CMat::Zero(256, 256);
  for (int k = 0; k < 4; ++k) {
    double lam1 = (rho1 * bell_projector(k)).trace().real();
    if (lam1 <= 0.0) continue;
    for (int l = 0; l < 4; ++l) {
      double lam2 = (rho2 * bell_projector(l)).trace().real();
      if (lam2 <= 0.0) continue;
      CMat flag = CMat::Zero(16, 16);
      flag(4 * k + l, 4 * k + l) = 1.0;
      r.rho += lam1 * lam2 *
               kron(kron(bell_projector(k), bell_projector(l)), flag);
    }
  }

  OuterMeasurements om = outer_measurements(sc.strategy.outer);
  auto bm = bob_measurements(sc.strategy.bob, sc.noise.p_indist);
  auto lift_a = [](const CMat& m) { return kron(m, identity(128)); };
  auto lift_b = [](const CMat& m) {
    return kron(identity(2), kron(m, identity(32)));
  };
  auto lift_c = [](const CMat& m) {
    return kron(identity(8), kron(m, identity(16)));
  };
  for (int x = 0; x < 2; ++x) {
    r.ops['A'].push_back({});
    r.ops['C'].push_back({});
    for (const CMat& m : om.alice[x].elements) r.ops['A'][x].push_back(lift_a(m));
    for (const CMat& m : om.charlie[x].elements)
      r.ops['C'][x].push_back(lift_c(m));
  }
  for (size_t y = 0; y < bm.size(); ++y) {
    r.ops['B'].push_back({});
    for (const CMat& m : bm[y].elements) r.ops['B'][y].push_back(lift_b(m));
  }

  if (eve == EveModel::SE) {
    std::vector<CMat> es(shape.n_e, CMat::Zero(256, 256));
    for (int k = 0; k < 16; ++k) {
      CMat flag = CMat::Zero(16, 16);
      flag(k, k) = 1.0;
      es[k % shape.n_e] += kron(identity(16), flag);
    }
    r.ops['E'].push_back(std::move(es));
    return r;
  }
  std::vector<CMat> es(shape.n_e, CMat::Zero(256, 256));
  std::vector<CMat> fs(shape.n_f, CMat::Zero(256, 256));
  for (int k = 0; k < 4; ++k) {
    CMat eflag = CMat::Zero(4, 4), fflag = CMat::Zero(4, 4);
    eflag(k, k) = 1.0;
    fflag(k, k) = 1.0;
    es[k % shape.n_e] += kron(identity(16), kron(eflag, identity(4)));
    fs[k % shape.n_f] += kron(identity(64), fflag);
  }
  r.ops['E'].push_back(std::move(es));
  r.ops['F'].push_back(std::move(fs));
  return r;
}

// 16-dimensional realization where every eavesdropper outputs outcome 0.
inline NetworkRealization trivial_eve(const bilocert::BilocalScenario& sc,
                                      bilocert::EveModel eve,
                                      const EveShape& shape) {
  using namespace bilocert;
  NetworkRealization r;
  CMat rho1 = noisy_state(sc.noise.v, sc.noise.c).mat;
  CMat rho2 = noisy_state(sc.second().v, sc.second().c).mat;
  r.rho = kron(rho1, rho2);

  OuterMeasurements om = outer_measurements(sc.strategy.outer);
  auto bm = bob_measurements(sc.strategy.bob, sc.noise.p_indist);
  for (int x = 0; x < 2; ++x) {
    r.ops['A'].push_back({});
    r.ops['C'].push_back({});
    for (const CMat& m : om.alice[x].elements)
      r.ops['A'][x].push_back(kron(m, identity(8)));
    for (const CMat& m : om.charlie[x].elements)
      r.ops['C'][x].push_back(kron(identity(8), m));
  }
  for (size_t y = 0; y < bm.size(); ++y) {
    r.ops['B'].push_back({});
    for (const CMat& m : bm[y].elements)
      r.ops['B'][y].push_back(kron(identity(2), kron(m, identity(2))));
  }
  auto trivial = [](int count) {
    std::vector<CMat> out;
    for (int e = 0; e < count; ++e) {
      out.push_back(e == 0 ? bilocert::identity(16)
                           : bilocert::CMat::Zero(16, 16));
    }
    return std::vector<std::vector<bilocert::CMat>>{out};
  };
  r.ops['E'] = trivial(shape.n_e);
  if (eve == EveModel::DE) r.ops['F'] = trivial(shape.n_f);
  return r;
}

}  // namespace realize
