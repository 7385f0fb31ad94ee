// Copyright 2026 The cqfb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense complex-matrix kernel: tensor products, partial traces, matrix
// exponentials, eigendecompositions and trace norms. Every other header in
// cqfb builds on these.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cqfb {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr cplx kI{0.0, 1.0};

//===========================================================================
// Errors
//===========================================================================

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

//===========================================================================
// Tolerances
//===========================================================================

struct Tolerances {
  double hermiticity = 1e-12;  // relative to max-abs of the matrix
  double trace = 1e-10;
  double positivity = 1e-10;
};

inline double max_abs(const CMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: shape mismatch");
  }
  return max_abs(a - b);
}

inline bool approx_equal(const CMatrix& a, const CMatrix& b, double tol) {
  return a.rows() == b.rows() && a.cols() == b.cols() && max_abs(a - b) <= tol;
}

inline double hermiticity_defect(const CMatrix& a) {
  return max_abs(a - a.adjoint());
}

inline bool is_hermitian(const CMatrix& a, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  return hermiticity_defect(a) <= rel_tol * max_abs(a);
}

//===========================================================================
// Strong types
//===========================================================================

/// Square matrix validated to be Hermitian at construction.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;

  explicit HermitianMatrix(CMatrix m, double rel_tol = Tolerances{}.hermiticity)
      : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) {
      throw DimensionError("HermitianMatrix: matrix is not square");
    }
    if (!is_hermitian(m_, rel_tol)) {
      throw ValidationError("HermitianMatrix: matrix is not Hermitian (defect " +
                            std::to_string(hermiticity_defect(m_)) + ")");
    }
  }

  static HermitianMatrix zero(std::size_t d) {
    return HermitianMatrix(CMatrix::Zero(static_cast<Eigen::Index>(d),
                                         static_cast<Eigen::Index>(d)));
  }

  const CMatrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

 private:
  CMatrix m_;
};

/// Unit-trace positive semidefinite matrix.
class DensityMatrix {
 public:
  DensityMatrix() = default;

  explicit DensityMatrix(CMatrix m, const Tolerances& tol = {});

  const CMatrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

  double purity() const { return (m_ * m_).trace().real(); }

 private:
  CMatrix m_;
};

//===========================================================================
// Construction helpers
//===========================================================================

inline CMatrix identity(std::size_t d) {
  return CMatrix::Identity(static_cast<Eigen::Index>(d),
                           static_cast<Eigen::Index>(d));
}

inline CMatrix zeros(std::size_t r, std::size_t c) {
  return CMatrix::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline CMatrix pauli_x() {
  CMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline CMatrix pauli_y() {
  CMatrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}

inline CMatrix pauli_z() {
  CMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

// Qubit labels follow |0> = (0,1)^T and |1> = (1,0)^T. A label j of a
// d-dimensional system maps to the standard unit vector e_{d-1-j}; for
// multi-qubit registers this is consistent with tensoring single-qubit kets.
inline CVector basis_ket(std::size_t label, std::size_t d) {
  if (label >= d) throw DimensionError("basis_ket: label out of range");
  CVector v = CVector::Zero(static_cast<Eigen::Index>(d));
  v(static_cast<Eigen::Index>(d - 1 - label)) = 1.0;
  return v;
}

inline CVector qubit_ket(int bit) { return basis_ket(bit ? 1 : 0, 2); }

/// |a><b| for labels a, b of a d-dimensional system.
inline CMatrix ket_bra(std::size_t a, std::size_t b, std::size_t d) {
  return basis_ket(a, d) * basis_ket(b, d).adjoint();
}

inline CMatrix projector(const CVector& v) { return v * v.adjoint(); }

//===========================================================================
// Tensor products and partial traces
//===========================================================================

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  const Eigen::Index p = b.rows(), q = b.cols();
  CMatrix out(a.rows() * p, a.cols() * q);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * p, j * q, p, q) = a(i, j) * b;
    }
  }
  return out;
}

inline CVector kron(const CVector& a, const CVector& b) {
  CVector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    out.segment(i * b.size(), b.size()) = a(i) * b;
  }
  return out;
}

/// Plant-first bipartition: composite index = i_P * d_C + i_C.
struct Dims {
  std::size_t plant = 0;
  std::size_t controller = 0;

  std::size_t total() const { return plant * controller; }
  bool operator==(const Dims&) const = default;
};

enum class Subsystem { Plant, Controller };

/// Trace over `over`; returns the reduced operator on the other factor.
inline CMatrix partial_trace(const CMatrix& x, Dims dims, Subsystem over) {
  const auto dp = static_cast<Eigen::Index>(dims.plant);
  const auto dc = static_cast<Eigen::Index>(dims.controller);
  if (x.rows() != x.cols() || x.rows() != dp * dc) {
    throw DimensionError("partial_trace: operator dimension " +
                         std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                         " does not match " + std::to_string(dims.plant) + "*" +
                         std::to_string(dims.controller));
  }
  if (over == Subsystem::Controller) {
    CMatrix out = CMatrix::Zero(dp, dp);
    for (Eigen::Index i = 0; i < dp; ++i)
      for (Eigen::Index j = 0; j < dp; ++j)
        for (Eigen::Index k = 0; k < dc; ++k) out(i, j) += x(i * dc + k, j * dc + k);
    return out;
  }
  CMatrix out = CMatrix::Zero(dc, dc);
  for (Eigen::Index k = 0; k < dc; ++k)
    for (Eigen::Index l = 0; l < dc; ++l)
      for (Eigen::Index i = 0; i < dp; ++i) out(k, l) += x(i * dc + k, i * dc + l);
  return out;
}

//===========================================================================
// Eigendecompositions
//===========================================================================

struct HermitianEigen {
  RVector values;   // ascending
  CMatrix vectors;  // unitary, columns are eigenvectors
};

namespace detail {

// First component with modulus above `tol` is made real and positive.
inline void fix_phases(CMatrix& v, double tol = 1e-12) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      const double mag = std::abs(v(r, c));
      if (mag > tol) {
        v.col(c) *= std::conj(v(r, c)) / mag;
        v(r, c) = mag;
        break;
      }
    }
  }
}

}  // namespace detail

inline HermitianEigen eig_hermitian(const HermitianMatrix& h) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h.matrix());
  if (solver.info() != Eigen::Success) {
    throw Error("eig_hermitian: eigensolver failed to converge");
  }
  HermitianEigen out{solver.eigenvalues(), solver.eigenvectors()};
  detail::fix_phases(out.vectors);
  return out;
}

/// Validates hermiticity and throws ValidationError otherwise.
inline HermitianEigen eig_hermitian(const CMatrix& h) {
  return eig_hermitian(HermitianMatrix(h));
}

struct GeneralEigen {
  CVector values;
  CMatrix vectors;  // right eigenvectors, unit 2-norm columns
};

inline GeneralEigen eig_general(const CMatrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("eig_general: matrix is not square");
  Eigen::ComplexEigenSolver<CMatrix> solver(m, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) {
    throw Error("eig_general: eigensolver failed to converge");
  }
  GeneralEigen out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) {
    const double n = out.vectors.col(c).norm();
    if (n > 0) out.vectors.col(c) /= n;
  }
  return out;
}

inline CVector eigenvalues_general(const CMatrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("eigenvalues: matrix is not square");
  Eigen::ComplexEigenSolver<CMatrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error("eigenvalues: eigensolver failed to converge");
  }
  return solver.eigenvalues();
}

/// Largest real part among the eigenvalues.
inline double spectral_abscissa(const CMatrix& m) {
  return eigenvalues_general(m).real().maxCoeff();
}

inline double min_eigenvalue_hermitian_part(const CMatrix& x) {
  const CMatrix h = 0.5 * (x + x.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

//===========================================================================
// Norms
//===========================================================================

/// Sum of singular values, from the spectrum of x^dagger x. Hermitian inputs
/// use the sum of absolute eigenvalues, which avoids squaring small values.
inline double trace_norm(const CMatrix& x) {
  if (x.rows() != x.cols()) throw DimensionError("trace_norm: matrix is not square");
  if (x.size() == 0) return 0.0;
  const double scale = max_abs(x);
  if (scale == 0.0) return 0.0;
  if (hermiticity_defect(x) <= 1e-14 * scale) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(0.5 * (x + x.adjoint()),
                                                  Eigen::EigenvaluesOnly);
    return solver.eigenvalues().cwiseAbs().sum();
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(x.adjoint() * x, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    s += std::sqrt(std::max(solver.eigenvalues()(i), 0.0));
  }
  return s;
}

/// Half the trace norm of the difference.
inline double trace_distance(const CMatrix& a, const CMatrix& b) {
  return 0.5 * trace_norm(a - b);
}

/// Largest singular value.
inline double operator_norm(const CMatrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(x);
  return svd.singularValues()(0);
}

inline double induced_one_norm(const CMatrix& a) {
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

//===========================================================================
// Matrix exponential
//===========================================================================

/// Scaling and squaring with the degree-13 diagonal Pade approximant.
inline CMatrix expm(const CMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("expm: matrix is not square");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0,
                                 7771770303897600.0,  1187353796428800.0,
                                 129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,
                                 1323241920.0,        40840800.0,
                                 960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = induced_one_norm(a);
  int s = 0;
  if (norm1 > theta13) {
    s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
  }
  const CMatrix as = a / std::ldexp(1.0, s);
  const CMatrix id = CMatrix::Identity(n, n);
  const CMatrix a2 = as * as;
  const CMatrix a4 = a2 * a2;
  const CMatrix a6 = a4 * a2;

  const CMatrix u_inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
  const CMatrix u = as * (a6 * u_inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const CMatrix v_inner = b[12] * a6 + b[10] * a4 + b[8] * a2;
  const CMatrix v = a6 * v_inner + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;

  CMatrix r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < s; ++k) r = r * r;
  return r;
}

/// Cached spectral form of e^{-iHt} for a fixed Hermitian H.
class UnitaryPropagator {
 public:
  UnitaryPropagator() = default;
  explicit UnitaryPropagator(const HermitianMatrix& h) : eig_(eig_hermitian(h)) {}

  CMatrix at(double t) const {
    const auto& v = eig_.vectors;
    CMatrix scaled = v;
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      scaled.col(c) *= std::exp(-kI * eig_.values(c) * t);
    }
    return scaled * v.adjoint();
  }

  std::size_t dim() const { return static_cast<std::size_t>(eig_.values.size()); }
  const HermitianEigen& spectrum() const { return eig_; }

 private:
  HermitianEigen eig_;
};

//===========================================================================
// DensityMatrix
//===========================================================================

inline DensityMatrix::DensityMatrix(CMatrix m, const Tolerances& tol) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0) {
    throw DimensionError("DensityMatrix: matrix must be square and nonempty");
  }
  if (!is_hermitian(m_, tol.hermiticity)) {
    throw ValidationError("DensityMatrix: matrix is not Hermitian (defect " +
                          std::to_string(hermiticity_defect(m_)) + ")");
  }
  const cplx tr = m_.trace();
  if (std::abs(tr - 1.0) > tol.trace) {
    throw ValidationError("DensityMatrix: trace " + std::to_string(tr.real()) +
                          " differs from 1");
  }
  const double min_eig = min_eigenvalue_hermitian_part(m_);
  if (min_eig < -tol.positivity) {
    throw ValidationError("DensityMatrix: negative eigenvalue " + std::to_string(min_eig));
  }
}

inline DensityMatrix pure_state(const CVector& psi) {
  return DensityMatrix(projector(psi / psi.norm()));
}

inline DensityMatrix maximally_mixed(std::size_t d) {
  return DensityMatrix(identity(d) / static_cast<double>(d));
}

//===========================================================================
// Random instances (tests, estimators, random initial states)
//===========================================================================

inline CMatrix random_gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  CMatrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = cplx(n01(rng), n01(rng));
  return m;
}

inline CVector random_unit_vector(std::size_t d, std::mt19937_64& rng) {
  CVector v = random_gaussian(d, 1, rng).col(0);
  return v / v.norm();
}

inline HermitianMatrix random_hermitian(std::size_t d, std::mt19937_64& rng) {
  const CMatrix g = random_gaussian(d, d, rng);
  CMatrix h = 0.5 * (g + g.adjoint());
  h = 0.5 * (h + h.adjoint()).eval();
  return HermitianMatrix(h);
}

/// Ginibre-induced random full-rank state.
inline DensityMatrix random_density(std::size_t d, std::mt19937_64& rng) {
  const CMatrix g = random_gaussian(d, d, rng);
  CMatrix rho = g * g.adjoint();
  rho /= rho.trace();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix(rho);
}

}  // namespace cqfb
