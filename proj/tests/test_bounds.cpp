#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "bilocert/bounds.hpp"
#include "bilocert/qcore.hpp"
#include "bilocert/scenario.hpp"

using namespace bilocert;

namespace {

BilocalScenario make_scenario(BobKind bob, double v, double c = 0.0,
                              double p = 1.0) {
  BilocalScenario sc;
  sc.noise.v = v;
  sc.noise.c = c;
  sc.noise.p_indist = p;
  sc.strategy.bob.kind = bob;
  return sc;
}

// Reference maximum over the raw tensor, independent of the production code
// path: enumerate every joint outcome, group by the non-target part.
double brute_force_informed(const Behavior& beh, const GuessTarget& t) {
  double total = 0.0;
  int groups_a = t.a ? 1 : beh.A;
  int groups_b = t.b ? 1 : beh.B;
  int groups_c = t.c ? 1 : beh.C;
  for (int ga = 0; ga < groups_a; ++ga) {
    for (int gb = 0; gb < groups_b; ++gb) {
      for (int gc = 0; gc < groups_c; ++gc) {
        double best = 0.0;
        for (int a = 0; a < (t.a ? beh.A : 1); ++a) {
          for (int b = 0; b < (t.b ? beh.B : 1); ++b) {
            for (int c = 0; c < (t.c ? beh.C : 1); ++c) {
              best = std::max(best, beh.at(0, 0, 0, t.a ? a : ga, t.b ? b : gb,
                                           t.c ? c : gc));
            }
          }
        }
        total += best;
      }
    }
  }
  return total;
}

}  // namespace

TEST_CASE("guess target validation and names") {
  CHECK(GuessTarget::abc().name() == "abc");
  CHECK(GuessTarget::ac().name() == "ac");
  GuessTarget none;
  CHECK_THROWS(none.validate());
  GuessTarget only_b{false, true, false};
  CHECK(only_b.name() == "b");
  CHECK_NOTHROW(only_b.validate());
}

TEST_CASE("uniform guess counts the target outcome space") {
  Behavior b14 = compute_behavior(make_scenario(BobKind::bsm_1x4, 1.0));
  BoundReport r = uniform_guess(b14, GuessTarget::abc());
  CHECK(r.p_guess_lower == doctest::Approx(1.0 / 16.0));
  CHECK(r.hmin_upper == doctest::Approx(4.0));

  Behavior b22 = compute_behavior(make_scenario(BobKind::separable_2x2, 1.0));
  CHECK(uniform_guess(b22, GuessTarget::abc()).hmin_upper ==
        doctest::Approx(3.0));
  CHECK(uniform_guess(b22, GuessTarget::ac()).hmin_upper ==
        doctest::Approx(2.0));
  CHECK(uniform_guess(b14, GuessTarget::ac()).p_guess_lower ==
        doctest::Approx(0.25));
}

TEST_CASE("informed guess at maximal visibility") {
  Behavior b14 = compute_behavior(make_scenario(BobKind::bsm_1x4, 1.0));
  CHECK(informed_guess(b14, GuessTarget::abc()).p_guess_lower ==
        doctest::Approx(0.125).epsilon(1e-9));
  CHECK(informed_guess(b14, GuessTarget::ac()).hmin_upper ==
        doctest::Approx(-std::log2(0.375)).epsilon(1e-9));

  Behavior b22 = compute_behavior(make_scenario(BobKind::separable_2x2, 1.0));
  CHECK(informed_guess(b22, GuessTarget::abc()).p_guess_lower ==
        doctest::Approx(0.1875).epsilon(1e-9));
  CHECK(informed_guess(b22, GuessTarget::ac()).hmin_upper ==
        doctest::Approx(-std::log2(0.375)).epsilon(1e-9));
}

TEST_CASE("informed guess equals the brute-force tensor maximum") {
  std::mt19937 rng(20240815);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  GuessTarget targets[] = {GuessTarget::abc(), GuessTarget::ac(),
                           {true, false, false}, {false, true, false}};
  for (int trial = 0; trial < 12; ++trial) {
    BobKind bob = trial % 2 ? BobKind::bsm_1x4 : BobKind::separable_2x2;
    Behavior beh = compute_behavior(
        make_scenario(bob, uni(rng), uni(rng), uni(rng)));
    for (const GuessTarget& t : targets) {
      double ref = brute_force_informed(beh, t);
      CHECK(informed_guess(beh, t).p_guess_lower ==
            doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("post projection state") {
  DensityMatrix rho2 = DensityMatrix::checked(
      kron(bell_projector(3), bell_projector(3)));
  std::vector<CMat> projectors;
  for (int e = 0; e < 4; ++e) {
    projectors.push_back(kron(identity(2), kron(bell_projector(e), identity(2))));
  }
  auto branches = post_projection_state(rho2, projectors);
  REQUIRE(branches.size() == 4);
  double total = 0.0;
  for (const auto& [w, state] : branches) {
    CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(state.mat.trace().real() == doctest::Approx(1.0).epsilon(1e-12));
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  // A product state projected on an eigenbasis of one factor keeps a single
  // branch of full weight.
  CMat zero_state = CMat::Zero(2, 2);
  zero_state(0, 0) = 1.0;
  DensityMatrix prod = DensityMatrix::checked(kron(zero_state, zero_state));
  std::vector<CMat> zbasis;
  CMat e00 = CMat::Zero(2, 2), e11 = CMat::Zero(2, 2);
  e00(0, 0) = 1.0;
  e11(1, 1) = 1.0;
  zbasis.push_back(kron(e00, identity(2)));
  zbasis.push_back(kron(e11, identity(2)));
  auto single = post_projection_state(prod, zbasis);
  REQUIRE(single.size() == 1);
  CHECK(single[0].first == doctest::Approx(1.0));
}

TEST_CASE("node vulnerability attack") {
  for (BobKind bob : {BobKind::bsm_1x4, BobKind::separable_2x2}) {
    for (GuessTarget t : {GuessTarget::abc(), GuessTarget::ac()}) {
      BoundReport r = node_vulnerability_attack(make_scenario(bob, 1.0), t);
      CHECK(r.p_guess_lower == doctest::Approx(0.375).epsilon(1e-9));
      CHECK(r.hmin_upper == doctest::Approx(-std::log2(0.375)).epsilon(1e-9));
    }
  }

  // Fully mixed sources: the projection still tells Eve Bob's outcome, so the
  // bound is 1/4 (uniform over the outer outcomes only).
  BoundReport mixed = node_vulnerability_attack(
      make_scenario(BobKind::bsm_1x4, 0.0), GuessTarget::abc());
  CHECK(mixed.p_guess_lower == doctest::Approx(0.25).epsilon(1e-9));

  CHECK_THROWS(node_vulnerability_attack(
      make_scenario(BobKind::rotated_2x4, 1.0), GuessTarget::abc()));
}

TEST_CASE("bound ordering and report invariants") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    BobKind bob = trial % 2 ? BobKind::bsm_1x4 : BobKind::separable_2x2;
    BilocalScenario sc = make_scenario(bob, uni(rng), uni(rng), uni(rng));
    Behavior beh = compute_behavior(sc);
    for (GuessTarget t : {GuessTarget::abc(), GuessTarget::ac()}) {
      BoundReport u = uniform_guess(beh, t);
      BoundReport i = informed_guess(beh, t);
      BoundReport n = node_vulnerability_attack(sc, t);
      CHECK(u.p_guess_lower <= i.p_guess_lower + 1e-12);
      CHECK(i.p_guess_lower <= n.p_guess_lower + 1e-12);
      for (const BoundReport* r : {&u, &i, &n}) {
        CHECK(r->p_guess_lower > 0.0);
        CHECK(r->p_guess_lower <= 1.0 + 1e-12);
        CHECK(r->hmin_upper ==
              doctest::Approx(-std::log2(r->p_guess_lower)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("node vulnerability branches remix to the original behavior") {
  BilocalScenario sc = make_scenario(BobKind::bsm_1x4, 0.83, 0.2, 1.0);
  Behavior beh = compute_behavior(sc);
  DensityMatrix rho4 = DensityMatrix::checked(
      kron(noisy_state(sc.noise.v, sc.noise.c).mat,
           noisy_state(sc.noise.v, sc.noise.c).mat));
  std::vector<CMat> projectors;
  for (int e = 0; e < 4; ++e) {
    projectors.push_back(kron(identity(2), kron(bell_projector(e), identity(2))));
  }
  Behavior mixed = Behavior::zeros(beh.X, beh.Y, beh.Z, beh.A, beh.B, beh.C);
  for (const auto& [w, state] : post_projection_state(rho4, projectors)) {
    Behavior branch = compute_behavior_from_state(state, sc.strategy);
    for (size_t i = 0; i < mixed.p.size(); ++i) mixed.p[i] += w * branch.p[i];
  }
  for (size_t i = 0; i < mixed.p.size(); ++i) {
    CHECK(mixed.p[i] == doctest::Approx(beh.p[i]).epsilon(1e-10));
  }
}

TEST_CASE("best analytic bound per eavesdropper model") {
  BilocalScenario sc = make_scenario(BobKind::bsm_1x4, 1.0);
  CHECK(best_analytic_bound(sc, EveModel::SE, GuessTarget::abc()).p_guess_lower ==
        doctest::Approx(0.375).epsilon(1e-9));
  CHECK(best_analytic_bound(sc, EveModel::DE, GuessTarget::abc()).p_guess_lower ==
        doctest::Approx(0.125).epsilon(1e-9));
  CHECK(best_analytic_bound(sc, EveModel::WE, GuessTarget::abc()).p_guess_lower ==
        doctest::Approx(0.125).epsilon(1e-9));

  // Tilted outer measurements push the DE informed guess to 1/16.
  BilocalScenario tilted = sc;
  tilted.strategy.outer.kind = OuterKind::tilted;
  double best = 1.0;
  for (double d = 0.1; d < 0.8; d += 0.05) {
    tilted.strategy.outer.delta = d;
    best = std::min(
        best,
        best_analytic_bound(tilted, EveModel::DE, GuessTarget::abc()).p_guess_lower);
  }
  CHECK(best == doctest::Approx(1.0 / 16.0).epsilon(1e-3));
}

TEST_CASE("bound report json") {
  Behavior beh = compute_behavior(make_scenario(BobKind::bsm_1x4, 1.0));
  std::string text = uniform_guess(beh, GuessTarget::ac()).to_json();
  CHECK(text.find("\"strategy\"") != std::string::npos);
  CHECK(text.find("\"p_guess\"") != std::string::npos);
  CHECK(text.find("\"hmin\"") != std::string::npos);
}

TEST_CASE("eve model names round-trip") {
  CHECK(eve_model_name(EveModel::SE) == "se");
  CHECK(eve_model_name(EveModel::WE) == "we");
  CHECK(eve_model_name(EveModel::DE) == "de");
  CHECK(eve_model_from_name("de") == EveModel::DE);
  CHECK_THROWS(eve_model_from_name("xx"));
}
