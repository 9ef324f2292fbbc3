#include "bilocert/scenario.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace bilocert {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_unit(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0))
    throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
}

void check_angle(double value, const char* name) {
  if (!(value >= 0.0 && value <= kPi / 2.0))
    throw std::invalid_argument(std::string(name) + " must lie in [0, pi/2]");
}

}  // namespace

void NoiseModel::validate() const {
  check_unit(v, "v");
  check_unit(c, "c");
  check_unit(p_indist, "p_indist");
}

void MeasurementStrategy::validate() const {
  if (outer.kind == OuterKind::tilted) check_angle(outer.delta, "delta");
  if (bob.kind == BobKind::rotated_2x4) check_angle(bob.theta, "theta");
}

void BilocalScenario::validate() const {
  noise.validate();
  if (noise_second) noise_second->validate();
  strategy.validate();
}

std::string outer_kind_name(OuterKind kind) {
  return kind == OuterKind::standard ? "standard" : "tilted";
}

std::string bob_kind_name(BobKind kind) {
  switch (kind) {
    case BobKind::bsm_1x4: return "1x4";
    case BobKind::separable_2x2: return "2x2";
    case BobKind::rotated_2x4: return "2x4";
  }
  throw std::invalid_argument("bob_kind_name: unknown kind");
}

OuterKind outer_kind_from_name(const std::string& name) {
  if (name == "standard") return OuterKind::standard;
  if (name == "tilted") return OuterKind::tilted;
  throw std::invalid_argument("unknown outer strategy: " + name);
}

BobKind bob_kind_from_name(const std::string& name) {
  if (name == "1x4") return BobKind::bsm_1x4;
  if (name == "2x2") return BobKind::separable_2x2;
  if (name == "2x4") return BobKind::rotated_2x4;
  throw std::invalid_argument("unknown bob variant: " + name);
}

Behavior Behavior::zeros(int X, int Y, int Z, int A, int B, int C) {
  Behavior b;
  b.X = X; b.Y = Y; b.Z = Z; b.A = A; b.B = B; b.C = C;
  if (X <= 0 || Y <= 0 || Z <= 0 || A <= 0 || B <= 0 || C <= 0)
    throw std::invalid_argument("Behavior: nonpositive cardinality");
  b.p.assign(static_cast<size_t>(X) * Y * Z * A * B * C, 0.0);
  return b;
}

size_t Behavior::index(int x, int y, int z, int a, int b, int c) const {
  return ((((static_cast<size_t>(x) * Y + y) * Z + z) * A + a) * B + b) * C + c;
}

double& Behavior::at(int x, int y, int z, int a, int b, int c) {
  return p[index(x, y, z, a, b, c)];
}

double Behavior::at(int x, int y, int z, int a, int b, int c) const {
  return p[index(x, y, z, a, b, c)];
}

void Behavior::validate(bool normalization_only) const {
  if (p.size() != static_cast<size_t>(X) * Y * Z * A * B * C)
    throw std::invalid_argument("Behavior: storage size mismatch");
  for (double v : p)
    if (v < -1e-9 || v > 1.0 + 1e-9)
      throw std::invalid_argument("Behavior: entry outside [0,1]");
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y)
      for (int z = 0; z < Z; ++z) {
        double s = 0;
        for (int a = 0; a < A; ++a)
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) s += at(x, y, z, a, b, c);
        if (std::abs(s - 1.0) > 1e-9)
          throw std::invalid_argument("Behavior: slice not normalized within 1e-9");
      }
  if (normalization_only) return;

  // No-signaling: the marginal on the other two parties must not depend on
  // the marginalized party's setting.
  for (int y = 0; y < Y; ++y)
    for (int z = 0; z < Z; ++z)
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          for (int x = 1; x < X; ++x) {
            double m0 = 0, m1 = 0;
            for (int a = 0; a < A; ++a) {
              m0 += at(0, y, z, a, b, c);
              m1 += at(x, y, z, a, b, c);
            }
            if (std::abs(m0 - m1) > 1e-9)
              throw std::invalid_argument("Behavior: signaling in x within 1e-9");
          }
  for (int x = 0; x < X; ++x)
    for (int z = 0; z < Z; ++z)
      for (int a = 0; a < A; ++a)
        for (int c = 0; c < C; ++c)
          for (int y = 1; y < Y; ++y) {
            double m0 = 0, m1 = 0;
            for (int b = 0; b < B; ++b) {
              m0 += at(x, 0, z, a, b, c);
              m1 += at(x, y, z, a, b, c);
            }
            if (std::abs(m0 - m1) > 1e-9)
              throw std::invalid_argument("Behavior: signaling in y within 1e-9");
          }
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y; ++y)
      for (int a = 0; a < A; ++a)
        for (int b = 0; b < B; ++b)
          for (int z = 1; z < Z; ++z) {
            double m0 = 0, m1 = 0;
            for (int c = 0; c < C; ++c) {
              m0 += at(x, y, 0, a, b, c);
              m1 += at(x, y, z, a, b, c);
            }
            if (std::abs(m0 - m1) > 1e-9)
              throw std::invalid_argument("Behavior: signaling in z within 1e-9");
          }
}

DensityMatrix werner_state(double v) {
  check_unit(v, "v");
  CMat m = v * bell_projector(3) + (1.0 - v) * 0.25 * CMat::Identity(4, 4);
  return DensityMatrix::checked(m);
}

DensityMatrix noisy_state(double v, double c) {
  check_unit(v, "v");
  check_unit(c, "c");
  CMat colored = 0.5 * (bell_projector(3) + bell_projector(2));
  CMat white = 0.25 * CMat::Identity(4, 4);
  CMat m = v * bell_projector(3) + (1.0 - v) * (c * colored + (1.0 - c) * white);
  return DensityMatrix::checked(m);
}

Povm effective_bsm(double p_indist) {
  check_unit(p_indist, "p_indist");
  const double wp = 0.5 * (1.0 + p_indist);
  const double wm = 0.5 * (1.0 - p_indist);
  // Sign partners under the frozen order: Phi+ <-> Phi-, Psi+ <-> Psi-.
  auto partner = [](int k) { return k ^ 1; };
  std::vector<CMat> effects;
  for (int k = 0; k < 4; ++k)
    effects.push_back(wp * bell_projector(k) + wm * bell_projector(partner(k)));
  return Povm::checked(std::move(effects));
}

namespace {

Povm dichotomic_povm(const CMat& observable) {
  auto [plus, minus] = eigenprojectors_pm(observable);
  return Povm::checked({plus, minus});
}

}  // namespace

OuterMeasurements outer_measurements(const OuterVariant& outer) {
  const CMat sx = pauli_x();
  const CMat sz = pauli_z();
  CMat a0, a1, c0, c1;
  if (outer.kind == OuterKind::standard) {
    const double s = 1.0 / std::sqrt(2.0);
    a0 = s * (sz + sx);
    a1 = s * (sz - sx);
    c0 = a0;
    c1 = a1;
  } else {
    check_angle(outer.delta, "delta");
    const double cd = std::cos(outer.delta);
    const double sd = std::sin(outer.delta);
    a0 = sz;
    a1 = cd * sx - sd * sz;
    c0 = sx;
    c1 = cd * sz - sd * sx;
  }
  OuterMeasurements m{{dichotomic_povm(a0), dichotomic_povm(a1)},
                      {dichotomic_povm(c0), dichotomic_povm(c1)}};
  return m;
}

std::vector<Povm> bob_measurements(const BobVariant& bob, double p_indist) {
  switch (bob.kind) {
    case BobKind::bsm_1x4:
      return {effective_bsm(p_indist)};
    case BobKind::separable_2x2: {
      CMat zz = kron(pauli_z(), pauli_z());
      CMat xx = kron(pauli_x(), pauli_x());
      return {dichotomic_povm(zz), dichotomic_povm(xx)};
    }
    case BobKind::rotated_2x4: {
      check_angle(bob.theta, "theta");
      const double ct = std::cos(bob.theta);
      const double st = std::sin(bob.theta);
      // Basis vectors on (|00>,|01>,|10>,|11>).
      std::vector<CVec> basis(4, CVec::Zero(4));
      basis[0](0) = ct; basis[0](3) = st;
      basis[1](1) = ct; basis[1](2) = st;
      basis[2](0) = st; basis[2](3) = -ct;
      basis[3](1) = st; basis[3](2) = -ct;
      std::vector<CMat> rotated;
      for (const CVec& v : basis) rotated.push_back(v * v.adjoint());
      std::vector<CMat> ideal;
      for (int k = 0; k < 4; ++k) ideal.push_back(bell_projector(k));
      return {Povm::checked(std::move(ideal)), Povm::checked(std::move(rotated))};
    }
  }
  throw std::logic_error("bob_measurements: unreachable");
}

Behavior compute_behavior_from_state(const DensityMatrix& rho4,
                                     const MeasurementStrategy& strategy) {
  strategy.validate();
  if (rho4.dim != 16)
    throw std::invalid_argument("compute_behavior_from_state: need a four-qubit state");
  OuterMeasurements outer = outer_measurements(strategy.outer);
  double p_ind = 1.0;  // applied by the scenario wrapper; explicit states carry no noise model
  std::vector<Povm> bob = bob_measurements(strategy.bob, p_ind);
  return [&] {
    const int Y = static_cast<int>(bob.size());
    const int B = bob.front().outcomes();
    Behavior out = Behavior::zeros(2, Y, 2, 2, B, 2);
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < Y; ++y)
        for (int z = 0; z < 2; ++z)
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < B; ++b)
              for (int c = 0; c < 2; ++c)
                out.at(x, y, z, a, b, c) = born_probability(
                    rho4, {outer.alice[x].elements[a], bob[y].elements[b],
                           outer.charlie[z].elements[c]});
    out.validate();
    return out;
  }();
}

Behavior compute_behavior(const BilocalScenario& scenario) {
  scenario.validate();
  DensityMatrix rho1 = noisy_state(scenario.noise.v, scenario.noise.c);
  DensityMatrix rho2 = noisy_state(scenario.second().v, scenario.second().c);
  DensityMatrix rho4 = DensityMatrix::checked(kron(rho1.mat, rho2.mat));

  OuterMeasurements outer = outer_measurements(scenario.strategy.outer);
  std::vector<Povm> bob =
      bob_measurements(scenario.strategy.bob, scenario.noise.p_indist);
  const int Y = static_cast<int>(bob.size());
  const int B = bob.front().outcomes();
  Behavior out = Behavior::zeros(2, Y, 2, 2, B, 2);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < Y; ++y)
      for (int z = 0; z < 2; ++z)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < 2; ++c)
              out.at(x, y, z, a, b, c) = born_probability(
                  rho4, {outer.alice[x].elements[a], bob[y].elements[b],
                         outer.charlie[z].elements[c]});
  out.meta["v"] = scenario.noise.v;
  out.meta["c"] = scenario.noise.c;
  out.meta["p_indist"] = scenario.noise.p_indist;
  out.validate();
  return out;
}

double brgp_value(const Behavior& behavior) {
  if (behavior.Y != 1 || behavior.B != 4 || behavior.A != 2 || behavior.C != 2)
    throw std::invalid_argument("brgp_value: needs a single-setting four-outcome joiner");
  auto corr = [&](int x, int z, int bit) {
    double e = 0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 2; ++c) {
          int b0 = b >> 1, b1 = b & 1;
          int sign = ((a + c + (bit == 0 ? b0 : b1)) % 2 == 0) ? 1 : -1;
          e += sign * behavior.at(x, 0, z, a, b, c);
        }
    return e;
  };
  double i_val = 0, j_val = 0;
  for (int x = 0; x < 2; ++x)
    for (int z = 0; z < 2; ++z) {
      i_val += 0.25 * corr(x, z, 0);
      j_val += 0.25 * ((x + z) % 2 == 0 ? 1 : -1) * corr(x, z, 1);
    }
  return std::sqrt(std::abs(i_val)) + std::sqrt(std::abs(j_val));
}

std::string behavior_to_json(const Behavior& b) {
  nlohmann::json j;
  j["cards"] = {{"X", b.X}, {"Y", b.Y}, {"Z", b.Z}, {"A", b.A}, {"B", b.B}, {"C", b.C}};
  nlohmann::json px = nlohmann::json::array();
  for (int x = 0; x < b.X; ++x) {
    nlohmann::json py = nlohmann::json::array();
    for (int y = 0; y < b.Y; ++y) {
      nlohmann::json pz = nlohmann::json::array();
      for (int z = 0; z < b.Z; ++z) {
        nlohmann::json pa = nlohmann::json::array();
        for (int a = 0; a < b.A; ++a) {
          nlohmann::json pb = nlohmann::json::array();
          for (int bb = 0; bb < b.B; ++bb) {
            nlohmann::json pc = nlohmann::json::array();
            for (int c = 0; c < b.C; ++c) pc.push_back(b.at(x, y, z, a, bb, c));
            pb.push_back(pc);
          }
          pa.push_back(pb);
        }
        pz.push_back(pa);
      }
      py.push_back(pz);
    }
    px.push_back(py);
  }
  j["p"] = px;
  j["meta"] = b.meta;
  return j.dump(2);
}

Behavior behavior_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const auto& cards = j.at("cards");
  Behavior b = Behavior::zeros(cards.at("X"), cards.at("Y"), cards.at("Z"),
                               cards.at("A"), cards.at("B"), cards.at("C"));
  const auto& p = j.at("p");
  for (int x = 0; x < b.X; ++x)
    for (int y = 0; y < b.Y; ++y)
      for (int z = 0; z < b.Z; ++z)
        for (int a = 0; a < b.A; ++a)
          for (int bb = 0; bb < b.B; ++bb)
            for (int c = 0; c < b.C; ++c)
              b.at(x, y, z, a, bb, c) = p.at(x).at(y).at(z).at(a).at(bb).at(c);
  if (j.contains("meta"))
    for (auto& [key, value] : j.at("meta").items())
      if (value.is_number()) b.meta[key] = value;
  return b;
}

}  // namespace bilocert
