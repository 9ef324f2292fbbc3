#pragma once

// Physical layer of the bilocal network: two-qubit source states under noise,
// the measurement strategies of the three stations, and the resulting
// conditional behavior p(abc|xyz).

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bilocert/qcore.hpp"

namespace bilocert {

// Source noise parameters, all in [0,1]:
//   v        visibility of the singlet component
//   c        colored fraction of the non-singlet component
//   p_indist partial indistinguishability of the joining measurement
struct NoiseModel {
  double v = 1.0;
  double c = 0.0;
  double p_indist = 1.0;

  void validate() const;
};

enum class OuterKind { standard, tilted };

struct OuterVariant {
  OuterKind kind = OuterKind::standard;
  double delta = 0.0;  // tilt angle, used by `tilted` only, in [0, pi/2]
};

enum class BobKind { bsm_1x4, separable_2x2, rotated_2x4 };

struct BobVariant {
  BobKind kind = BobKind::bsm_1x4;
  double theta = 0.0;  // rotation angle, used by `rotated_2x4` only, in [0, pi/2]
};

struct MeasurementStrategy {
  OuterVariant outer;
  BobVariant bob;

  void validate() const;
};

std::string outer_kind_name(OuterKind kind);  // "standard", "tilted"
std::string bob_kind_name(BobKind kind);      // "1x4", "2x2", "2x4"
OuterKind outer_kind_from_name(const std::string& name);
BobKind bob_kind_from_name(const std::string& name);

struct BilocalScenario {
  NoiseModel noise;
  MeasurementStrategy strategy;
  // Optional asymmetric second source; defaults to `noise`.
  std::optional<NoiseModel> noise_second;

  const NoiseModel& second() const { return noise_second ? *noise_second : noise; }
  void validate() const;
};

// Conditional distribution p(abc|xyz), stored flat in row-major order over
// (x, y, z, a, b, c).
struct Behavior {
  int X = 0, Y = 0, Z = 0;  // setting cardinalities
  int A = 0, B = 0, C = 0;  // outcome cardinalities
  std::vector<double> p;
  std::map<std::string, double> meta;

  static Behavior zeros(int X, int Y, int Z, int A, int B, int C);
  size_t index(int x, int y, int z, int a, int b, int c) const;
  double& at(int x, int y, int z, int a, int b, int c);
  double at(int x, int y, int z, int a, int b, int c) const;

  // Normalization of every slice within 1e-9; unless `normalization_only`,
  // also no-signaling of every party within 1e-9.
  void validate(bool normalization_only = false) const;
};

// v|Psi-><Psi-| + (1-v) I/4.
DensityMatrix werner_state(double v);

// v|Psi-><Psi-| + (1-v)[ (c/2)(|Psi-><Psi-| + |Psi+><Psi+|) + (1-c) I/4 ].
DensityMatrix noisy_state(double v, double c);

// Effective partial-indistinguishability joining measurement. Element k is the
// effect replacing the projector onto Bell state k (frozen order), mixing each
// Bell state with its sign partner with weights (1+p)/2 and (1-p)/2.
Povm effective_bsm(double p_indist);

struct OuterMeasurements {
  std::array<Povm, 2> alice;    // indexed by setting x
  std::array<Povm, 2> charlie;  // indexed by setting z
};

// Outcome 0 is the +1 eigenvalue projector.
// standard: A0 = C0 = (sz+sx)/sqrt2, A1 = C1 = (sz-sx)/sqrt2.
// tilted:   A0 = sz, A1 = cos(d) sx - sin(d) sz,
//           C0 = sx, C1 = cos(d) sz - sin(d) sx.
OuterMeasurements outer_measurements(const OuterVariant& outer);

// One Povm per setting y. bsm_1x4 applies p_indist; the other variants
// ignore it.
std::vector<Povm> bob_measurements(const BobVariant& bob, double p_indist);

// Behavior of the scenario: state rho1 ⊗ rho2 on qubits (0,1,2,3), Alice on
// qubit 0, Bob on qubits 1-2, Charlie on qubit 3.
Behavior compute_behavior(const BilocalScenario& scenario);

// Same contraction on an explicit four-qubit state.
Behavior compute_behavior_from_state(const DensityMatrix& rho4,
                                     const MeasurementStrategy& strategy);

// sqrt|I| + sqrt|J| for a single-setting four-outcome joining measurement,
// with Bob's outcome mapped to bits (b0,b1) via the frozen Bell order:
// Phi+=(0,0), Phi-=(0,1), Psi+=(1,0), Psi-=(1,1).
double brgp_value(const Behavior& behavior);

// JSON round-trip per the documented schema ({"cards", "p", "meta"}).
std::string behavior_to_json(const Behavior& b);
Behavior behavior_from_json(const std::string& text);

}  // namespace bilocert
