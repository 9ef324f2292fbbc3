#include "bilocert/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace bilocert {

std::string eve_model_name(EveModel eve) {
  switch (eve) {
    case EveModel::SE: return "se";
    case EveModel::WE: return "we";
    case EveModel::DE: return "de";
  }
  throw std::invalid_argument("eve_model_name: unknown model");
}

EveModel eve_model_from_name(const std::string& name) {
  if (name == "se") return EveModel::SE;
  if (name == "we") return EveModel::WE;
  if (name == "de") return EveModel::DE;
  throw std::invalid_argument("unknown eavesdropper model: " + name);
}

void GuessTarget::validate() const {
  if (!a && !b && !c) throw std::invalid_argument("GuessTarget: empty target");
}

std::string GuessTarget::name() const {
  std::string s;
  if (a) s += 'a';
  if (b) s += 'b';
  if (c) s += 'c';
  return s;
}

std::string BoundReport::to_json() const {
  nlohmann::json j;
  j["strategy"] = strategy;
  j["p_guess"] = p_guess_lower;
  j["hmin"] = hmin_upper;
  j["details"] = details.empty() ? nlohmann::json::object()
                                 : nlohmann::json::parse(details);
  return j.dump(2);
}

namespace {

BoundReport make_report(std::string strategy, double p_guess, nlohmann::json details) {
  BoundReport r;
  r.strategy = std::move(strategy);
  r.p_guess_lower = p_guess;
  r.hmin_upper = -std::log2(p_guess);
  r.details = details.dump();
  return r;
}

// Best deterministic guess of the target outcomes given the non-target
// outcomes, on a joint settings-0 distribution q(a,b,c).
double informed_value(const std::vector<double>& q, int A, int B, int C,
                      const GuessTarget& target) {
  std::map<std::tuple<int, int, int>, double> best;
  for (int a = 0; a < A; ++a)
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        std::tuple<int, int, int> key{target.a ? -1 : a, target.b ? -1 : b,
                                      target.c ? -1 : c};
        double& slot = best[key];
        slot = std::max(slot, q[(static_cast<size_t>(a) * B + b) * C + c]);
      }
  double total = 0;
  for (const auto& [key, value] : best) total += value;
  return total;
}

std::vector<double> settings0_slice(const Behavior& behavior) {
  std::vector<double> q;
  q.reserve(static_cast<size_t>(behavior.A) * behavior.B * behavior.C);
  for (int a = 0; a < behavior.A; ++a)
    for (int b = 0; b < behavior.B; ++b)
      for (int c = 0; c < behavior.C; ++c) q.push_back(behavior.at(0, 0, 0, a, b, c));
  return q;
}

}  // namespace

BoundReport uniform_guess(const Behavior& behavior, const GuessTarget& target) {
  target.validate();
  long n = 1;
  if (target.a) n *= behavior.A;
  if (target.b) n *= behavior.B;
  if (target.c) n *= behavior.C;
  return make_report("uniform", 1.0 / static_cast<double>(n),
                     {{"n_outcomes", n}});
}

BoundReport informed_guess(const Behavior& behavior, const GuessTarget& target) {
  target.validate();
  behavior.validate();
  double p = informed_value(settings0_slice(behavior), behavior.A, behavior.B,
                            behavior.C, target);
  return make_report("informed", p, {{"target", target.name()}});
}

std::vector<std::pair<double, DensityMatrix>> post_projection_state(
    const DensityMatrix& rho, const std::vector<CMat>& projectors) {
  std::vector<std::pair<double, DensityMatrix>> branches;
  for (const CMat& proj : projectors) {
    if (proj.rows() != rho.dim || proj.cols() != rho.dim)
      throw std::invalid_argument("post_projection_state: dimension mismatch");
    CMat reduced = proj * rho.mat * proj;
    double weight = reduced.trace().real();
    if (weight < 1e-14) continue;
    branches.emplace_back(weight, DensityMatrix::checked(reduced / weight));
  }
  return branches;
}

BoundReport node_vulnerability_attack(const BilocalScenario& scenario,
                                      const GuessTarget& target) {
  scenario.validate();
  target.validate();
  const BobKind kind = scenario.strategy.bob.kind;
  if (kind != BobKind::bsm_1x4 && kind != BobKind::separable_2x2)
    throw std::invalid_argument(
        "node_vulnerability_attack: joining measurement must be Bell-diagonal");

  DensityMatrix rho1 = noisy_state(scenario.noise.v, scenario.noise.c);
  DensityMatrix rho2 = noisy_state(scenario.second().v, scenario.second().c);
  DensityMatrix rho4 = DensityMatrix::checked(kron(rho1.mat, rho2.mat));

  std::vector<CMat> projectors;
  for (int k = 0; k < 4; ++k)
    projectors.push_back(kron_all({identity(2), bell_projector(k), identity(2)}));

  OuterMeasurements outer = outer_measurements(scenario.strategy.outer);
  std::vector<Povm> bob =
      bob_measurements(scenario.strategy.bob, scenario.noise.p_indist);
  const int B = bob.front().outcomes();

  double total = 0;
  nlohmann::json branch_json = nlohmann::json::array();
  for (const auto& [weight, state] : post_projection_state(rho4, projectors)) {
    std::vector<double> q(static_cast<size_t>(2) * B * 2, 0.0);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < 2; ++c)
          q[(static_cast<size_t>(a) * B + b) * 2 + c] = born_probability(
              state, {outer.alice[0].elements[a], bob[0].elements[b],
                      outer.charlie[0].elements[c]});
    double branch_p = informed_value(q, 2, B, 2, target);
    branch_json.push_back({{"weight", weight}, {"p_guess", branch_p}});
    total += weight * branch_p;
  }
  return make_report("node_vulnerability", total, {{"branches", branch_json}});
}

BoundReport best_analytic_bound(const BilocalScenario& scenario, EveModel eve,
                                const GuessTarget& target) {
  scenario.validate();
  target.validate();
  Behavior behavior = compute_behavior(scenario);
  std::vector<BoundReport> candidates;
  candidates.push_back(uniform_guess(behavior, target));
  candidates.push_back(informed_guess(behavior, target));
  const BobKind kind = scenario.strategy.bob.kind;
  if (eve == EveModel::SE &&
      (kind == BobKind::bsm_1x4 || kind == BobKind::separable_2x2))
    candidates.push_back(node_vulnerability_attack(scenario, target));
  return *std::max_element(candidates.begin(), candidates.end(),
                           [](const BoundReport& lhs, const BoundReport& rhs) {
                             return lhs.p_guess_lower < rhs.p_guess_lower;
                           });
}

}  // namespace bilocert
