#pragma once

// Dense complex linear algebra and the handful of quantum primitives the rest
// of the library is built on. All values are immutable once constructed.

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace bilocert {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

// Structural checks (PSD slack, POVM completeness).
inline constexpr double kStructTol = 1e-10;
// Arithmetic checks (hermiticity, trace normalization).
inline constexpr double kArithTol = 1e-12;

CMat identity(int n);
CMat pauli_x();
CMat pauli_y();
CMat pauli_z();

CMat dagger(const CMat& m);
bool is_hermitian(const CMat& m, double tol = kArithTol);

// Smallest eigenvalue of a Hermitian matrix.
double min_eigenvalue(const CMat& herm);

// Kronecker product, row-major index convention:
// (a⊗b)[i*p+k][j*q+l] = a[i][j]*b[k][l] for b of size p x q.
CMat kron(const CMat& a, const CMat& b);
CMat kron_all(const std::vector<CMat>& factors);

// Trace out every subsystem not listed in `keep`. `dims` are the per-subsystem
// dimensions in tensor order, `keep` is a strictly increasing index list.
CMat partial_trace(const CMat& rho, const std::vector<int>& dims,
                   const std::vector<int>& keep);

// Unit-trace PSD Hermitian matrix. Construction validates the invariants
// (hermitian within 1e-12, trace within 1e-12 of one, min eigenvalue >= -1e-10).
struct DensityMatrix {
  CMat mat;
  int dim = 0;

  static DensityMatrix checked(CMat m);
};

DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& dims,
                            const std::vector<int>& keep);

// Fixed-size list of PSD effects summing to the identity (within 1e-10).
struct Povm {
  std::vector<CMat> elements;
  int dim = 0;

  int outcomes() const { return static_cast<int>(elements.size()); }
  static Povm checked(std::vector<CMat> elements);
};

// Bell basis in the frozen index order 0=Phi+, 1=Phi-, 2=Psi+, 3=Psi-.
CVec bell_state(int idx);
CMat bell_projector(int idx);

// Tr(rho * (E1 ⊗ E2 ⊗ ...)); result must land in [-1e-10, 1+1e-10] and is
// clamped to [0,1].
double born_probability(const DensityMatrix& rho, const std::vector<CMat>& effects);

// Rank-checked spectral projectors (P+, P-) of a Hermitian involution O
// (O^2 = I). Outcome 0 is the +1 eigenspace.
std::pair<CMat, CMat> eigenprojectors_pm(const CMat& involution);

}  // namespace bilocert
