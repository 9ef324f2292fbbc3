#pragma once

// Closed-form eavesdropping strategies. Each one lower-bounds the guessing
// probability of the target outcomes at settings fixed to zero, i.e.
// upper-bounds the certifiable min-entropy.

#include <string>

#include "bilocert/scenario.hpp"

namespace bilocert {

enum class EveModel { SE, WE, DE };

std::string eve_model_name(EveModel eve);  // "se", "we", "de"
EveModel eve_model_from_name(const std::string& name);

// Non-empty subset of the observed parties whose settings-0 outcomes are to
// be guessed.
struct GuessTarget {
  bool a = false;
  bool b = false;
  bool c = false;

  void validate() const;
  std::string name() const;  // e.g. "abc", "ac"

  static GuessTarget abc() { return {true, true, true}; }
  static GuessTarget ac() { return {true, false, true}; }
};

struct BoundReport {
  std::string strategy;
  double p_guess_lower = 0.0;
  double hmin_upper = 0.0;  // -log2(p_guess_lower)
  std::string details;      // JSON blob with strategy-specific data

  std::string to_json() const;
};

// 1/N over the joint target outcome space.
BoundReport uniform_guess(const Behavior& behavior, const GuessTarget& target);

// sum_bbar max_abar p(abar, bbar | settings 0), i.e. the best deterministic
// guess conditioned on the non-target outcomes. Ties in the max are broken
// toward the lowest outcome index (affects `details` only, not the value).
BoundReport informed_guess(const Behavior& behavior, const GuessTarget& target);

// Branch decomposition rho -> { (Tr(P_e rho), P_e rho P_e / Tr(P_e rho)) },
// dropping branches of weight < 1e-14. Projectors act on the full space.
std::vector<std::pair<double, DensityMatrix>> post_projection_state(
    const DensityMatrix& rho, const std::vector<CMat>& projectors);

// Bell-projection attack on the central node: project the two inbound qubits
// onto the Bell basis, then informed-guess each branch. Requires a joining
// measurement diagonal in the Bell basis (bsm_1x4 or separable_2x2).
BoundReport node_vulnerability_attack(const BilocalScenario& scenario,
                                      const GuessTarget& target);

// Best applicable analytic bound. SE takes the max over uniform, informed and
// (when supported) the node-vulnerability attack; DE and WE take the max over
// uniform and informed.
BoundReport best_analytic_bound(const BilocalScenario& scenario, EveModel eve,
                                const GuessTarget& target);

}  // namespace bilocert
