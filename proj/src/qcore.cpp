#include "bilocert/qcore.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bilocert {

CMat identity(int n) { return CMat::Identity(n, n); }

CMat pauli_x() {
  CMat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

CMat pauli_y() {
  CMat m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}

CMat pauli_z() {
  CMat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

CMat dagger(const CMat& m) { return m.adjoint(); }

bool is_hermitian(const CMat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const CMat& herm) {
  Eigen::SelfAdjointEigenSolver<CMat> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

CMat kron(const CMat& a, const CMat& b) {
  CMat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CMat kron_all(const std::vector<CMat>& factors) {
  if (factors.empty()) return CMat::Identity(1, 1);
  CMat out = factors.front();
  for (size_t k = 1; k < factors.size(); ++k) out = kron(out, factors[k]);
  return out;
}

CMat partial_trace(const CMat& rho, const std::vector<int>& dims,
                   const std::vector<int>& keep) {
  const int nsub = static_cast<int>(dims.size());
  long total = 1;
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("partial_trace: nonpositive dimension");
    total *= d;
  }
  if (rho.rows() != total || rho.cols() != total)
    throw std::invalid_argument("partial_trace: dims do not match matrix size");
  for (size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] < 0 || keep[k] >= nsub)
      throw std::invalid_argument("partial_trace: keep index out of range");
    if (k > 0 && keep[k] <= keep[k - 1])
      throw std::invalid_argument("partial_trace: keep must be strictly increasing");
  }

  std::vector<int> traced;
  for (int s = 0; s < nsub; ++s)
    if (std::find(keep.begin(), keep.end(), s) == keep.end()) traced.push_back(s);

  long dkeep = 1, dtr = 1;
  for (int s : keep) dkeep *= dims[s];
  for (int s : traced) dtr *= dims[s];

  // Row index of the full space from (kept multi-index, traced multi-index).
  auto full_index = [&](long ik, long it) {
    std::vector<int> digit(nsub, 0);
    long r = ik;
    for (int p = static_cast<int>(keep.size()) - 1; p >= 0; --p) {
      digit[keep[p]] = static_cast<int>(r % dims[keep[p]]);
      r /= dims[keep[p]];
    }
    r = it;
    for (int p = static_cast<int>(traced.size()) - 1; p >= 0; --p) {
      digit[traced[p]] = static_cast<int>(r % dims[traced[p]]);
      r /= dims[traced[p]];
    }
    long idx = 0;
    for (int s = 0; s < nsub; ++s) idx = idx * dims[s] + digit[s];
    return idx;
  };

  CMat out = CMat::Zero(dkeep, dkeep);
  for (long i = 0; i < dkeep; ++i)
    for (long j = 0; j < dkeep; ++j) {
      Complex acc = 0;
      for (long t = 0; t < dtr; ++t) acc += rho(full_index(i, t), full_index(j, t));
      out(i, j) = acc;
    }
  return out;
}

DensityMatrix DensityMatrix::checked(CMat m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("DensityMatrix: not square");
  if (!is_hermitian(m, kArithTol))
    throw std::invalid_argument("DensityMatrix: not hermitian within 1e-12");
  if (std::abs(m.trace() - Complex(1, 0)) > kArithTol)
    throw std::invalid_argument("DensityMatrix: trace differs from one by more than 1e-12");
  if (min_eigenvalue(m) < -1e-10)
    throw std::invalid_argument("DensityMatrix: negative eigenvalue below -1e-10");
  DensityMatrix rho;
  rho.dim = static_cast<int>(m.rows());
  rho.mat = std::move(m);
  return rho;
}

DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& dims,
                            const std::vector<int>& keep) {
  return DensityMatrix::checked(partial_trace(rho.mat, dims, keep));
}

Povm Povm::checked(std::vector<CMat> elements) {
  if (elements.empty()) throw std::invalid_argument("Povm: no elements");
  const int d = static_cast<int>(elements.front().rows());
  CMat sum = CMat::Zero(d, d);
  for (const CMat& e : elements) {
    if (e.rows() != d || e.cols() != d)
      throw std::invalid_argument("Povm: inconsistent element dimensions");
    if (!is_hermitian(e, kStructTol)) throw std::invalid_argument("Povm: element not hermitian");
    if (min_eigenvalue(e) < -kStructTol)
      throw std::invalid_argument("Povm: element not PSD within 1e-10");
    sum += e;
  }
  if ((sum - CMat::Identity(d, d)).cwiseAbs().maxCoeff() > kStructTol)
    throw std::invalid_argument("Povm: elements do not sum to identity within 1e-10");
  Povm p;
  p.dim = d;
  p.elements = std::move(elements);
  return p;
}

CVec bell_state(int idx) {
  CVec v = CVec::Zero(4);
  const double s = 1.0 / std::sqrt(2.0);
  switch (idx) {
    case 0: v(0) = s; v(3) = s; break;    // Phi+
    case 1: v(0) = s; v(3) = -s; break;   // Phi-
    case 2: v(1) = s; v(2) = s; break;    // Psi+
    case 3: v(1) = s; v(2) = -s; break;   // Psi-
    default: throw std::invalid_argument("bell_state: index must be 0..3");
  }
  return v;
}

CMat bell_projector(int idx) {
  CVec v = bell_state(idx);
  return v * v.adjoint();
}

double born_probability(const DensityMatrix& rho, const std::vector<CMat>& effects) {
  CMat e = kron_all(effects);
  if (e.rows() != rho.dim)
    throw std::invalid_argument("born_probability: effect dimension mismatch");
  Complex tr = (rho.mat * e).trace();
  if (std::abs(tr.imag()) > kStructTol)
    throw std::runtime_error("born_probability: non-real trace");
  double p = tr.real();
  if (p < -1e-10 || p > 1.0 + 1e-10)
    throw std::runtime_error("born_probability: value outside [0,1] tolerance: " +
                             std::to_string(p));
  return std::min(1.0, std::max(0.0, p));
}

std::pair<CMat, CMat> eigenprojectors_pm(const CMat& involution) {
  const int d = static_cast<int>(involution.rows());
  if (!is_hermitian(involution, kStructTol))
    throw std::invalid_argument("eigenprojectors_pm: not hermitian");
  if ((involution * involution - CMat::Identity(d, d)).cwiseAbs().maxCoeff() > kStructTol)
    throw std::invalid_argument("eigenprojectors_pm: not an involution");
  CMat plus = 0.5 * (CMat::Identity(d, d) + involution);
  CMat minus = 0.5 * (CMat::Identity(d, d) - involution);
  return {plus, minus};
}

}  // namespace bilocert
