#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "bilocert/bounds.hpp"
#include "bilocert/momentgen.hpp"
#include "bilocert/qcore.hpp"
#include "bilocert/scenario.hpp"
#include "support/realization.hpp"

using namespace bilocert;

namespace {

OpSym inv(char party, int setting) { return {party, setting, 0, OpKind::involution}; }
OpSym proj(char party, int setting, int outcome) {
  return {party, setting, outcome, OpKind::projector};
}

Eigen::MatrixXd dense(const std::vector<SparseEntry>& entries, int n) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (const SparseEntry& e : entries) {
    out(e.i, e.j) = e.v;
    out(e.j, e.i) = e.v;
  }
  return out;
}

Behavior behavior_of(BobKind bob, double v, double c = 0.0, double p = 1.0) {
  BilocalScenario sc;
  sc.noise.v = v;
  sc.noise.c = c;
  sc.noise.p_indist = p;
  sc.strategy.bob.kind = bob;
  return compute_behavior(sc);
}

}  // namespace

TEST_CASE("canonicalize basics") {
  Monomial idem = canonicalize(Monomial::word({proj('A', 0, 0), proj('A', 0, 0)}));
  CHECK(idem == Monomial::word({proj('A', 0, 0)}));

  Monomial ortho = canonicalize(Monomial::word({proj('A', 0, 0), proj('A', 0, 1)}));
  CHECK(ortho.zero);

  Monomial comm = canonicalize(Monomial::word({proj('C', 1, 0), proj('A', 0, 0)}));
  CHECK(comm == Monomial::word({proj('A', 0, 0), proj('C', 1, 0)}));

  Monomial invol = canonicalize(Monomial::word({inv('A', 0), inv('A', 0)}));
  CHECK(invol == Monomial::identity());

  // Same-party different-setting order is preserved.
  Monomial seq = canonicalize(Monomial::word({proj('A', 1, 0), proj('A', 0, 0)}));
  CHECK(seq == Monomial::word({proj('A', 1, 0), proj('A', 0, 0)}));
}

TEST_CASE("generate monomials counts") {
  std::vector<PartySpec> parties = {
      {'A', 2, 2, OpKind::projector},
      {'B', 1, 4, OpKind::projector},
  };
  LevelSpec l1 = LevelSpec::parse("1");
  auto singles = generate_monomials(parties, l1);
  CHECK(singles.size() == 6);  // 1 + 2 + 3

  LevelSpec l1ab = LevelSpec::parse("1+AB");
  auto crossed = generate_monomials(parties, l1ab);
  CHECK(crossed.size() == 12);  // 1 + 2 + 3 + 2*3
  for (const Monomial& m : crossed) CHECK_FALSE(m.zero);

  CHECK_THROWS(LevelSpec::parse("NOPE"));
  CHECK_THROWS(LevelSpec::parse("0"));
  CHECK_THROWS(LevelSpec::parse("2;foo=A"));
  CHECK_THROWS(LevelSpec::parse("2;ext=A,*C"));

  LevelSpec round = LevelSpec::parse("2+ABE-AC;ext=A,E*CF");
  CHECK(round.str() == "2+ABE-AC;ext=A,E*CF");
}

TEST_CASE("worked four-generator chain example") {
  Monomial qa = Monomial::word({inv('A', 0), inv('A', 1)});
  Monomial qc = Monomial::word({inv('C', 0), inv('C', 1)});
  Monomial col;
  col.scalars.push_back(ScalarSym{{inv('A', 0), inv('A', 1)}, false});

  MomentProblem prob = assemble_problem({Monomial::identity(), qa, qc, col},
                                        DagKind::bilocal_se, {}, {});
  CHECK(prob.size == 4);
  CHECK(prob.raw_var_count == 7);
  CHECK(prob.var_count == 4);

  // Diagonals of the operator rows collapse to <1> = 1.
  for (int i = 0; i < 3; ++i) {
    CHECK(prob.at(i, i).var == -1);
    CHECK(prob.at(i, i).coeff == std::complex<double>(1.0));
  }

  // v1 = v3: the pure-scalar column repeats the base moment.
  CHECK(prob.at(0, 1).var == prob.at(0, 3).var);
  CHECK(prob.at(0, 1).conj == prob.at(0, 3).conj);
  // v5 = v7: both are |<Q>|^2.
  CHECK(prob.at(1, 3).var == prob.at(3, 3).var);
  // v4 = v6*: factorization of the cross moment onto the extension entry.
  CHECK(prob.at(1, 2).var == prob.at(2, 3).var);
  CHECK(prob.at(1, 2).conj != prob.at(2, 3).conj);
  // v2 stays independent.
  CHECK(prob.at(0, 2).var != prob.at(0, 1).var);
  CHECK(prob.at(0, 2).var != prob.at(1, 2).var);
  CHECK(prob.at(0, 2).var != prob.at(1, 3).var);

  // Only linear identifications: |<Q>|^2 is not tied to the square of <Q>.
  CHECK(prob.at(1, 3).var != prob.at(0, 1).var);

  int factor_links = 0;
  for (const IdLink& link : prob.links) {
    if (link.kind == "factorization") ++factor_links;
  }
  CHECK(factor_links == 1);
  CHECK(prob.links.size() == 3);

  auto links = factorization_identities({Monomial::identity(), qa, qc, col},
                                        DagKind::bilocal_se);
  CHECK(links.size() == 3);
}

TEST_CASE("wing factorization with eavesdropper operators") {
  Monomial ae = Monomial::word({proj('A', 0, 0), proj('E', 0, 0)});
  Monomial cf = Monomial::word({proj('C', 0, 0), proj('F', 0, 0)});
  Monomial col;
  col.scalars.push_back(ScalarSym{cf.ops, false});
  MomentProblem prob = assemble_problem({Monomial::identity(), ae, cf, col},
                                        DagKind::bilocal_de, {}, {});
  // <AE CF> is identified with <AE><CF>.
  CHECK(prob.at(1, 2).var == prob.at(1, 3).var);

  // Under the SE split the same moment carries E and stays unidentified.
  MomentProblem se = assemble_problem({Monomial::identity(), ae, cf, col},
                                      DagKind::bilocal_se, {}, {});
  CHECK(se.at(1, 2).var != se.at(1, 3).var);
}

TEST_CASE("behavior oracle") {
  Behavior beh = behavior_of(BobKind::bsm_1x4, 1.0);
  KnownOracle oracle = behavior_oracle(beh);

  auto pa = oracle(Monomial::word({proj('A', 0, 0)}));
  REQUIRE(pa.has_value());
  CHECK(*pa == doctest::Approx(0.5).epsilon(1e-12));

  auto joint = oracle(Monomial::word({proj('A', 0, 0), proj('B', 0, 0),
                                      proj('C', 0, 0)}));
  REQUIRE(joint.has_value());
  CHECK(*joint == doctest::Approx(beh.at(0, 0, 0, 0, 0, 0)).epsilon(1e-12));

  CHECK_FALSE(oracle(Monomial::word({proj('A', 0, 0), proj('A', 1, 0)})));
  CHECK_FALSE(oracle(Monomial::word({proj('E', 0, 0)})));
  CHECK_FALSE(oracle(Monomial::word({proj('A', 0, 0), proj('E', 0, 0)})));
}

TEST_CASE("outcome product expansion eliminates last outcomes") {
  // Retained outcome: a plain word.
  auto plain = expand_outcome_product({{'A', 0, 0, 2}});
  REQUIRE(plain.size() == 1);
  CHECK(plain[0].coeff == doctest::Approx(1.0));
  CHECK(plain[0].monomial == Monomial::word({proj('A', 0, 0)}));

  // Last outcome of a binary party: 1 - A0.
  auto last = expand_outcome_product({{'A', 0, 1, 2}});
  REQUIRE(last.size() == 2);
  double const_coeff = 0.0, a0_coeff = 0.0;
  for (const auto& t : last) {
    if (t.monomial == Monomial::identity()) const_coeff += t.coeff;
    if (t.monomial == Monomial::word({proj('A', 0, 0)})) a0_coeff += t.coeff;
  }
  CHECK(const_coeff == doctest::Approx(1.0));
  CHECK(a0_coeff == doctest::Approx(-1.0));

  // Two eliminated outcomes: (1 - A0)(1 - C0) has four signed terms.
  auto both = expand_outcome_product({{'A', 0, 1, 2}, {'C', 0, 1, 2}});
  CHECK(both.size() == 4);
  double sum = 0.0;
  for (const auto& t : both) sum += t.coeff;
  CHECK(sum == doctest::Approx(0.0));

  // Four-outcome party: 1 - B0 - B1 - B2.
  auto bsm = expand_outcome_product({{'B', 0, 3, 4}});
  CHECK(bsm.size() == 4);
}

TEST_CASE("realization consistency of built problems") {
  struct Config {
    EveModel eve;
    BobKind bob;
    GuessTarget target;
    double v, c, p;
    const char* level;
  };
  const Config configs[] = {
      {EveModel::SE, BobKind::bsm_1x4, GuessTarget::ac(), 0.8, 0.2, 1.0,
       "2;ext=A,C"},
      {EveModel::SE, BobKind::separable_2x2, GuessTarget::abc(), 1.0, 0.0, 1.0,
       "2+ABC;ext=A,C"},
      {EveModel::DE, BobKind::bsm_1x4, GuessTarget::abc(), 0.9, 0.0, 1.0,
       "2+ABE+BCF;ext=A,E,AE,C,F,CF"},
      {EveModel::DE, BobKind::bsm_1x4, GuessTarget::ac(), 1.0, 0.0, 1.0,
       "2+ABE+BCF;ext=A,E,AE,C,F,CF,E*CF,F*AE"},
      {EveModel::DE, BobKind::separable_2x2, GuessTarget::abc(), 0.85, 0.3, 1.0,
       "2+ABE+BCF;ext=E,AE,F,CF"},
  };
  for (const Config& cfg : configs) {
    CAPTURE(cfg.level);
    BilocalScenario sc;
    sc.noise.v = cfg.v;
    sc.noise.c = cfg.c;
    sc.noise.p_indist = cfg.p;
    sc.strategy.bob.kind = cfg.bob;
    Behavior beh = compute_behavior(sc);
    MomentProblem prob =
        build_guessing_problem(beh, cfg.eve, cfg.target, LevelSpec::parse(cfg.level));
    CHECK_FALSE(prob.trivially_infeasible);
    realize::EveShape shape = realize::eve_shape(prob);

    realize::NetworkRealization triv = realize::trivial_eve(sc, cfg.eve, shape);
    realize::Moments mt = realize::evaluate(prob, triv);
    CHECK(mt.worst_pin <= 1e-9);
    CHECK(mt.worst_var <= 1e-10);
    CHECK(mt.min_eig >= -1e-9);

    realize::NetworkRealization corr = realize::correlated_eve(sc, cfg.eve, shape);
    realize::Moments mc = realize::evaluate(prob, corr);
    CHECK(mc.worst_pin <= 1e-9);
    CHECK(mc.worst_var <= 1e-10);
    CHECK(mc.min_eig >= -1e-9);

    // The strategies are valid attacks, so their success stays at or below
    // the best analytic lower bound's ceiling of 1 and at least 0.
    CHECK(mt.objective >= -1e-12);
    CHECK(mc.objective >= -1e-12);
    CHECK(mt.objective <= 1.0 + 1e-12);
    CHECK(mc.objective <= 1.0 + 1e-12);

    if (cfg.v < 1.0) {
      // The correlated construction must actually correlate the flag: some
      // variable takes a value away from 0 and 1.
      bool nontrivial = false;
      for (int i = 0; i < prob.var_count; ++i) {
        if (!mc.var_seen[i]) continue;
        double mag = std::abs(mc.var_values[i]);
        if (mag > 0.01 && mag < 0.99) nontrivial = true;
      }
      CHECK(nontrivial);
    }
  }
}

TEST_CASE("degenerate behavior and model guards") {
  Behavior uniform = behavior_of(BobKind::bsm_1x4, 0.0);
  CHECK_THROWS_AS(build_guessing_problem(uniform, EveModel::WE,
                                         GuessTarget::abc(),
                                         LevelSpec::parse("2;ext=A")),
                  std::invalid_argument);

  // Level 1 cannot express the three-party objective.
  CHECK_THROWS_AS(build_guessing_problem(uniform, EveModel::SE,
                                         GuessTarget::ac(), LevelSpec::parse("1")),
                  std::runtime_error);
}

TEST_CASE("realify embeds hermitian problems") {
  // Real problem: block-diagonal duplicate with the objective unchanged.
  Behavior beh = behavior_of(BobKind::bsm_1x4, 0.7);
  MomentProblem prob = build_guessing_problem(beh, EveModel::SE, GuessTarget::ac(),
                                              LevelSpec::parse("2;ext=A,C"));
  SdpInstance inst = realify(prob);
  CHECK_NOTHROW(inst.validate());
  CHECK(inst.duplicate_halves);
  CHECK(inst.n == 2 * prob.size);
  CHECK(inst.m() == prob.var_count);

  // 1x1 pinned <1> = 1.
  MomentProblem one;
  one.size = 1;
  one.cells.assign(1, {});
  one.at(0, 0).coeff = 1.0;
  SdpInstance ione = realify(one);
  CHECK(ione.n == 2);
  CHECK(ione.m() == 0);
  CHECK((dense(ione.f0, 2) - Eigen::MatrixXd::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() == doctest::Approx(0.0));

  // Complex 2x2 toy: off-diagonal i*t with t = t_re + i*t_im embeds into a
  // 4x4 with skew entries; PSD exactly while |t| <= 1.
  MomentProblem toy;
  toy.size = 2;
  toy.cells.assign(3, {});
  toy.at(0, 0).coeff = 1.0;
  toy.at(1, 1).coeff = 1.0;
  toy.at(0, 1).coeff = std::complex<double>(0.0, 1.0);
  toy.at(0, 1).var = 0;
  toy.var_count = 1;
  toy.var_self_adjoint.assign(1, false);
  toy.var_names.assign(1, "t");
  SdpInstance itoy = realify(toy);
  CHECK_NOTHROW(itoy.validate());
  CHECK_FALSE(itoy.duplicate_halves);
  CHECK(itoy.n == 4);
  CHECK(itoy.m() == 2);

  auto eval = [&](double re, double im) {
    Eigen::MatrixXd f = dense(itoy.f0, 4) + re * dense(itoy.fi[0], 4) +
                        im * dense(itoy.fi[1], 4);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(f);
    return eig.eigenvalues().minCoeff();
  };
  CHECK(eval(0.0, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(eval(0.0, 1.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(eval(0.0, 1.1) < 0.0);
  CHECK(eval(0.6, 0.8) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("product extension columns appear and stay consistent") {
  std::vector<PartySpec> parties = {
      {'A', 2, 2, OpKind::projector},
      {'E', 1, 3, OpKind::projector},
      {'C', 2, 2, OpKind::projector},
      {'F', 1, 3, OpKind::projector},
  };
  LevelSpec pure = LevelSpec::parse("1;ext=C");
  auto base = generate_monomials(parties, pure);
  auto with_pure = scalar_extension_set(base, pure);
  CHECK(with_pure.size() > base.size());

  LevelSpec prod = LevelSpec::parse("1;ext=E*C");
  auto with_prod = scalar_extension_set(base, prod);
  // Two E projectors times two C words.
  CHECK(with_prod.size() == base.size() + 4);
  bool found = false;
  for (size_t i = base.size(); i < with_prod.size(); ++i) {
    const Monomial& m = with_prod[i];
    REQUIRE(m.scalars.size() == 1);
    if (!m.ops.empty() && m.ops[0].party == 'E' &&
        m.scalars[0].ops[0].party == 'C') {
      found = true;
    }
  }
  CHECK(found);

  LevelSpec empty = LevelSpec::parse("1");
  CHECK(scalar_extension_set(base, empty).size() == base.size());
}

TEST_CASE("default levels express their objectives") {
  for (EveModel eve : {EveModel::SE, EveModel::DE}) {
    LevelSpec level = default_level(eve);
    for (BobKind bob : {BobKind::bsm_1x4, BobKind::separable_2x2}) {
      Behavior beh = behavior_of(bob, 0.9);
      for (GuessTarget t : {GuessTarget::abc(), GuessTarget::ac()}) {
        CHECK_NOTHROW(build_guessing_problem(beh, eve, t, level));
      }
    }
  }
}
