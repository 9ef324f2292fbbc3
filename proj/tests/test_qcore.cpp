#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "bilocert/qcore.hpp"

using namespace bilocert;

namespace {

const Complex kI(0.0, 1.0);

bool approx_mat(const CMat& a, const CMat& b, double tol = 1e-12) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a - b).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace

TEST_CASE("pauli algebra") {
  CMat x = pauli_x(), y = pauli_y(), z = pauli_z(), id = identity(2);
  CHECK(approx_mat(x * x, id));
  CHECK(approx_mat(y * y, id));
  CHECK(approx_mat(z * z, id));
  CHECK(approx_mat(x * y, kI * z));
  CHECK(approx_mat(x * z + z * x, CMat::Zero(2, 2)));
  CHECK(is_hermitian(x));
  CHECK(is_hermitian(y));
  CHECK(is_hermitian(z));
  CHECK_FALSE(is_hermitian(kI * x));
}

TEST_CASE("kron follows the row-major index convention") {
  CMat a(2, 2), b(2, 2);
  a << 1.0, 2.0, 3.0, 4.0;
  b << 0.0, 5.0, 6.0, 7.0;
  CMat k = kron(a, b);
  REQUIRE(k.rows() == 4);
  // (a⊗b)[i*2+k][j*2+l] = a(i,j) b(k,l)
  CHECK(k(0, 1) == Complex(5.0));
  CHECK(k(1, 0) == Complex(6.0));
  CHECK(k(2, 3) == Complex(20.0));
  CHECK(k(3, 2) == Complex(24.0));
  CHECK(approx_mat(kron_all({a, b}), k));
  CHECK(approx_mat(kron_all({a, b, identity(2)}), kron(k, identity(2))));
}

TEST_CASE("partial trace contracts the right subsystems") {
  CMat rho_a(2, 2), rho_b(2, 2);
  rho_a << 0.75, 0.1, 0.1, 0.25;
  rho_b << 0.5, Complex(0.0, 0.2), Complex(0.0, -0.2), 0.5;
  CMat joint = kron(rho_a, rho_b);
  CHECK(approx_mat(partial_trace(joint, {2, 2}, {0}), rho_a));
  CHECK(approx_mat(partial_trace(joint, {2, 2}, {1}), rho_b));
  CHECK(approx_mat(partial_trace(joint, {2, 2}, {0, 1}), joint));

  // Bell pair reduces to the maximally mixed state on either side.
  CMat phi = bell_projector(0);
  CHECK(approx_mat(partial_trace(phi, {2, 2}, {0}), 0.5 * identity(2)));
  CHECK(approx_mat(partial_trace(phi, {2, 2}, {1}), 0.5 * identity(2)));

  // Three factors, keep the outer two.
  CMat m = kron_all({rho_a, rho_b, rho_a});
  CHECK(approx_mat(partial_trace(m, {2, 2, 2}, {0, 2}), kron(rho_a, rho_a)));
}

TEST_CASE("density matrix construction validates invariants") {
  CHECK_NOTHROW(DensityMatrix::checked(bell_projector(2)));
  CHECK_NOTHROW(DensityMatrix::checked(0.5 * identity(2)));

  CMat bad_trace = identity(2);
  CHECK_THROWS(DensityMatrix::checked(bad_trace));

  CMat not_herm(2, 2);
  not_herm << 0.5, 0.3, 0.0, 0.5;
  CHECK_THROWS(DensityMatrix::checked(not_herm));

  CMat negative(2, 2);
  negative << 1.2, 0.0, 0.0, -0.2;
  CHECK_THROWS(DensityMatrix::checked(negative));
}

TEST_CASE("povm construction checks completeness and positivity") {
  auto [p, q] = eigenprojectors_pm(pauli_z());
  CHECK_NOTHROW(Povm::checked({p, q}));
  CHECK_THROWS(Povm::checked({p, 0.5 * q}));
  CMat neg = -0.1 * identity(2);
  CHECK_THROWS(Povm::checked({identity(2) - neg, neg}));
}

TEST_CASE("bell basis order is frozen") {
  const double s = 1.0 / std::sqrt(2.0);
  CVec phi_plus = bell_state(0), phi_minus = bell_state(1);
  CVec psi_plus = bell_state(2), psi_minus = bell_state(3);
  CHECK(std::abs(phi_plus(0) - s) < 1e-14);
  CHECK(std::abs(phi_plus(3) - s) < 1e-14);
  CHECK(std::abs(phi_minus(0) - s) < 1e-14);
  CHECK(std::abs(phi_minus(3) + s) < 1e-14);
  CHECK(std::abs(psi_plus(1) - s) < 1e-14);
  CHECK(std::abs(psi_plus(2) - s) < 1e-14);
  CHECK(std::abs(psi_minus(1) - s) < 1e-14);
  CHECK(std::abs(psi_minus(2) + s) < 1e-14);

  CMat sum = CMat::Zero(4, 4);
  for (int b = 0; b < 4; ++b) {
    CMat pb = bell_projector(b);
    CHECK(approx_mat(pb * pb, pb));
    CHECK(std::abs(pb.trace() - 1.0) < 1e-12);
    for (int b2 = 0; b2 < b; ++b2) {
      CHECK(approx_mat(pb * bell_projector(b2), CMat::Zero(4, 4)));
    }
    sum += pb;
  }
  CHECK(approx_mat(sum, identity(4)));
  CHECK_THROWS(bell_state(4));
}

TEST_CASE("born probability contracts tensor effects") {
  DensityMatrix rho = DensityMatrix::checked(bell_projector(0));
  auto [zp, zm] = eigenprojectors_pm(pauli_z());
  // <Phi+| P_z+ ⊗ P_z+ |Phi+> = 1/2.
  CHECK(born_probability(rho, {zp, zp}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(born_probability(rho, {zp, zm}) == doctest::Approx(0.0).epsilon(1e-12));
  auto [xp, xm] = eigenprojectors_pm(pauli_x());
  CHECK(born_probability(rho, {xp, xp}) == doctest::Approx(0.5).epsilon(1e-12));

  DensityMatrix pair = DensityMatrix::checked(kron(0.5 * identity(2), zp * 1.0));
  CHECK(born_probability(pair, {identity(2), zp}) == doctest::Approx(1.0));
  CHECK(born_probability(pair, {zp, identity(2)}) == doctest::Approx(0.5));
}

TEST_CASE("min eigenvalue of hermitian matrices") {
  CMat m(2, 2);
  m << 2.0, 1.0, 1.0, 2.0;
  CHECK(min_eigenvalue(m) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(min_eigenvalue(pauli_z()) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("spectral projectors of involutions") {
  auto [zp, zm] = eigenprojectors_pm(pauli_z());
  CMat e00 = CMat::Zero(2, 2), e11 = CMat::Zero(2, 2);
  e00(0, 0) = 1.0;
  e11(1, 1) = 1.0;
  CHECK(approx_mat(zp, e00));
  CHECK(approx_mat(zm, e11));

  const double s = 1.0 / std::sqrt(2.0);
  CMat diag = s * (pauli_z() + pauli_x());
  auto [dp, dm] = eigenprojectors_pm(diag);
  CHECK(approx_mat(dp, 0.5 * (identity(2) + diag), 1e-12));
  CHECK(approx_mat(dm, 0.5 * (identity(2) - diag), 1e-12));
  CHECK(approx_mat(dp + dm, identity(2)));
  CHECK(approx_mat(dp * dm, CMat::Zero(2, 2)));

  CHECK_THROWS(eigenprojectors_pm(0.5 * pauli_z()));
}
