#pragma once

// Symbolic moment matrices for networks of commuting measurement algebras:
// canonical monomials, scalar-extension columns, factorization identities
// from the network structure, and reduction to a real SDP instance.

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bilocert/bounds.hpp"
#include "bilocert/scenario.hpp"
#include "bilocert/sdpsolver.hpp"

namespace bilocert {

enum class OpKind { projector, involution };

// One measurement-operator symbol. Projector parties keep outcomes
// 0..outcomes-2 per setting (the last outcome is eliminated); involution
// parties carry one symbol per setting with outcome fixed to 0.
struct OpSym {
  char party = 'A';
  int setting = 0;
  int outcome = 0;
  OpKind kind = OpKind::projector;
};

bool operator==(const OpSym& a, const OpSym& b);
bool operator<(const OpSym& a, const OpSym& b);

// Expectation factor <W> (conj = false) or conj(<W>) (conj = true); ops is a
// canonical word, empty meaning <1>.
struct ScalarSym {
  std::vector<OpSym> ops;
  bool conj = false;
};

bool operator==(const ScalarSym& a, const ScalarSym& b);
bool operator<(const ScalarSym& a, const ScalarSym& b);

// Operator word times a multiset of expectation factors; zero absorbs all.
struct Monomial {
  std::vector<OpSym> ops;
  std::vector<ScalarSym> scalars;
  bool zero = false;

  static Monomial identity() { return {}; }
  static Monomial word(std::vector<OpSym> ops);
};

bool operator==(const Monomial& a, const Monomial& b);
bool operator<(const Monomial& a, const Monomial& b);

// Sorts parties stably (within-party order preserved), applies idempotence,
// same-setting orthogonality and involution cancellation, and sorts scalar
// factors. Commutation is only used across parties.
Monomial canonicalize(Monomial raw);
Monomial adjoint(const Monomial& m);
std::string to_string(const Monomial& m);

struct PartySpec {
  char party = 'A';
  int settings = 1;
  int outcomes = 2;
  OpKind kind = OpKind::projector;
};

// Generating set description. Base words are all canonical nonzero words up
// to base_length over the retained symbols, minus any length-2 cross-party
// pair whose party set is listed in excluded_pairs. extra_classes adds words
// with exactly one symbol per listed party ("ABE" etc.). extension_classes
// selects which base words Q (by exact party set, non-observable, length >= 2
// or unobservable singles) get adjoined as <Q>*1 columns.
//
// Text form: "<base_length>[+CLASS...][-PAIR...][;ext=CLASS,...]",
// e.g. "2+ABE;ext=A,E,AE".
struct LevelSpec {
  int base_length = 2;
  std::vector<std::string> extra_classes;
  std::vector<std::string> excluded_pairs;
  std::vector<std::string> extension_classes;
  // "OP*SC" entries in the ext list: one S<Q> column per base word S with
  // party set OP and base word Q with party set SC.
  std::vector<std::pair<std::string, std::string>> product_extensions;

  static LevelSpec parse(const std::string& text);
  std::string str() const;
};

std::vector<Monomial> generate_monomials(const std::vector<PartySpec>& parties,
                                         const LevelSpec& level);

// Appends one <Q>*1 column per base word whose exact party set is listed in
// level.extension_classes and for which skip (when given) returns false,
// plus one S<Q> column per level.product_extensions pairing.
std::vector<Monomial> scalar_extension_set(
    std::vector<Monomial> base, const LevelSpec& level,
    const std::function<bool(const Monomial&)>& skip = {});

enum class DagKind { none, bilocal_se, bilocal_de };

// Linear identification between raw cell variables: raw[from] equals
// raw[to] (conj = false) or conj(raw[to]) (conj = true).
struct IdLink {
  int from = 0;
  int to = 0;
  bool conj = false;
  std::string kind;  // scalar_collapse | conj_pair | factorization | known_collapse
};

// Returns a known expectation value for an operator word, when it has one.
using KnownOracle = std::function<std::optional<double>(const Monomial&)>;

struct ObjectiveTerm {
  double coeff = 0.0;
  Monomial monomial;  // operator word, no scalar factors
};

// One projector factor Pi_{outcome|setting} of a party with the given outcome
// cardinality.
struct OutcomeFactor {
  char party = 'A';
  int setting = 0;
  int outcome = 0;
  int outcomes = 2;
};

// Signed-word expansion of the ordered product of the factors, with each
// last outcome eliminated as identity minus the retained projectors.
std::vector<ObjectiveTerm> expand_outcome_product(
    const std::vector<OutcomeFactor>& factors);

struct MomentProblem {
  std::vector<Monomial> generators;
  int size = 0;

  // Raw layer: one variable per distinct cell expression before reductions.
  int raw_var_count = 0;
  std::vector<IdLink> links;

  // Reduced layer: cell = coeff (var < 0) or coeff * var / conj(var).
  struct Cell {
    std::complex<double> coeff{0.0, 0.0};
    int var = -1;
    bool conj = false;
  };
  std::vector<Cell> cells;  // upper triangle, row-major
  int var_count = 0;
  std::vector<bool> var_self_adjoint;
  std::vector<std::string> var_names;

  struct ObjectiveEntry {
    std::complex<double> coeff{0.0, 0.0};
    int var = -1;
    bool conj = false;
  };
  std::vector<ObjectiveEntry> objective;
  double objective_constant = 0.0;

  int pinned_cells = 0;
  int pruned_rows = 0;
  bool trivially_infeasible = false;

  const Cell& at(int i, int j) const;
  Cell& at(int i, int j);
};

// Builds the full moment matrix over the generators, assigns raw variables,
// emits identification links (dag factorization plus scalar collapses),
// folds known values, prunes rows with pinned-zero diagonal, and maps the
// objective terms. Throws std::runtime_error when an objective monomial is
// not representable at this level.
MomentProblem assemble_problem(std::vector<Monomial> generators, DagKind dag,
                               const KnownOracle& known,
                               const std::vector<ObjectiveTerm>& objective);

// Identification links only (no knowns, no objective).
std::vector<IdLink> factorization_identities(
    const std::vector<Monomial>& generators, DagKind dag);

// True when <word> is a product of at most one projector per party, all
// parties in {A, B, C}; such moments are probabilities of the behavior
// (absent parties marginalized at setting 0).
bool observable_word(const Monomial& m);
KnownOracle behavior_oracle(const Behavior& behavior);

LevelSpec default_level(EveModel eve);

// Moment relaxation of the guessing probability at settings x=z=0 (and y=0)
// for the given eavesdropper structure. WE is not supported.
MomentProblem build_guessing_problem(const Behavior& behavior, EveModel eve,
                                     const GuessTarget& target,
                                     const LevelSpec& level);

// Hermitian PSD condition to real symmetric PSD via the block embedding
// [[Re, -Im], [Im, Re]]; complex variables split into (real, imaginary)
// parts. A real-valued problem maps to a block-diagonal duplicate with the
// objective unchanged.
SdpInstance realify(const MomentProblem& problem);

}  // namespace bilocert
