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

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cqfb/liouville.hpp"
#include "cqfb/qmat.hpp"

namespace cqfb {

//===========================================================================
// Orthonormal bases
//===========================================================================

inline bool is_orthonormal(const std::vector<CVector>& basis, double tol = 1e-10) {
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = i; j < basis.size(); ++j) {
      const cplx ip = basis[i].dot(basis[j]);
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(ip - expect) > tol) return false;
    }
  }
  return true;
}

/// The labelled computational basis |0>, |1>, ..., |d-1> of a d-level system.
inline std::vector<CVector> computational_basis(std::size_t d) {
  std::vector<CVector> out;
  out.reserve(d);
  for (std::size_t j = 0; j < d; ++j) out.push_back(basis_ket(j, d));
  return out;
}

/// Orthonormal basis whose first element is phi0, completed by Gram-Schmidt
/// over the labelled computational basis in label order.
inline std::vector<CVector> complete_basis(const CVector& phi0, double tol = 1e-10) {
  const auto d = static_cast<std::size_t>(phi0.size());
  if (std::abs(phi0.norm() - 1.0) > tol) {
    throw ValidationError("complete_basis: phi0 is not a unit vector");
  }
  std::vector<CVector> out{phi0};
  for (const auto& e : computational_basis(d)) {
    if (out.size() == d) break;
    CVector v = e;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : out) v -= b.dot(v) * b;
    const double n = v.norm();
    if (n > 1e-8) out.push_back(v / n);
  }
  return out;
}

//===========================================================================
// FrameMap: U_P(t) = exp(-i (H_P kron I_C) t)
//===========================================================================

enum class FrameDirection { Forward, Inverse };

class FrameMap {
 public:
  FrameMap() = default;

  FrameMap(const HermitianMatrix& plant_hamiltonian, std::size_t controller_dim)
      : plant_h_(plant_hamiltonian),
        frame_h_(embed_plant(plant_hamiltonian.matrix(), controller_dim)),
        propagator_(frame_h_) {}

  CMatrix unitary(double t) const { return propagator_.at(t); }

  const HermitianMatrix& plant_hamiltonian() const { return plant_h_; }
  const HermitianMatrix& frame_hamiltonian() const { return frame_h_; }
  std::size_t dim() const { return frame_h_.dim(); }

 private:
  HermitianMatrix plant_h_;
  HermitianMatrix frame_h_;
  UnitaryPropagator propagator_;
};

/// Forward: U x U^dagger. Inverse: U^dagger x U.
inline CMatrix frame_conjugate(const FrameMap& f, const CMatrix& x, double t,
                               FrameDirection direction) {
  if (static_cast<std::size_t>(x.rows()) != f.dim() || x.rows() != x.cols()) {
    throw DimensionError("frame_conjugate: operand is not of composite dimension");
  }
  const CMatrix u = f.unitary(t);
  if (direction == FrameDirection::Forward) return u * x * u.adjoint();
  return u.adjoint() * x * u;
}

//===========================================================================
// FeedbackProtocol
//===========================================================================

/// Coherent feedback protocol: interaction Hamiltonian H_I(0) and controller
/// couplings I_P kron L_{C,k}, stored at unit gain, plus the gain gamma.
///
/// The effective protocol is gamma * L_fb, i.e. H_I(0) scaled by gamma and
/// the couplings by sqrt(gamma).
class FeedbackProtocol {
 public:
  FeedbackProtocol() = default;

  /// Generic protocol. `controller_couplings` are d_C x d_C blocks;
  /// `controller_state` defaults to |nu_c^0><nu_c^0|.
  FeedbackProtocol(Dims dims, HermitianMatrix unit_h_i0,
                   std::vector<CMatrix> controller_couplings, double gamma,
                   std::vector<CVector> plant_basis,
                   std::vector<CVector> controller_basis,
                   std::optional<CMatrix> controller_state = std::nullopt)
      : dims_(dims),
        unit_h_i0_(std::move(unit_h_i0)),
        controller_blocks_(std::move(controller_couplings)),
        gamma_(gamma),
        plant_basis_(std::move(plant_basis)),
        controller_basis_(std::move(controller_basis)) {
    if (!(gamma_ > 0.0)) {
      throw ValidationError("FeedbackProtocol: gamma must be positive");
    }
    if (unit_h_i0_.dim() != dims_.total()) {
      throw DimensionError("FeedbackProtocol: H_I(0) is not of composite dimension");
    }
    if (plant_basis_.size() != dims_.plant || controller_basis_.size() != dims_.controller) {
      throw DimensionError("FeedbackProtocol: basis sizes do not match dimensions");
    }
    if (!is_orthonormal(plant_basis_) || !is_orthonormal(controller_basis_)) {
      throw ValidationError("FeedbackProtocol: bases must be orthonormal");
    }
    for (const auto& b : controller_blocks_) {
      if (static_cast<std::size_t>(b.rows()) != dims_.controller || b.rows() != b.cols()) {
        throw DimensionError("FeedbackProtocol: controller coupling is not d_C x d_C");
      }
      unit_couplings_.push_back(embed_controller(b, dims_.plant));
    }
    controller_state_ = controller_state ? std::move(*controller_state)
                                         : projector(controller_basis_.front());
  }

  Dims dims() const { return dims_; }
  double gamma() const { return gamma_; }
  const CVector& phi0() const { return plant_basis_.front(); }
  const std::vector<CVector>& plant_basis() const { return plant_basis_; }
  const std::vector<CVector>& controller_basis() const { return controller_basis_; }
  const CMatrix& controller_state() const { return controller_state_; }
  const std::vector<CMatrix>& controller_blocks() const { return controller_blocks_; }

  const HermitianMatrix& unit_h_i0() const { return unit_h_i0_; }
  const std::vector<CMatrix>& unit_couplings() const { return unit_couplings_; }

  /// H_I(0) at the protocol gain.
  HermitianMatrix h_i0() const { return HermitianMatrix(gamma_ * unit_h_i0_.matrix()); }

  /// Controller couplings embedded on the composite, at the protocol gain.
  std::vector<CMatrix> couplings() const {
    std::vector<CMatrix> out;
    for (const auto& l : unit_couplings_) out.push_back(std::sqrt(gamma_) * l);
    return out;
  }

  /// L_fb(0) at unit gain.
  LindbladGenerator unit_generator() const {
    return LindbladGenerator(unit_h_i0_, unit_couplings_);
  }

  /// gamma * L_fb(0).
  LindbladGenerator generator() const { return gen_scale(unit_generator(), gamma_); }

  FeedbackProtocol with_gain(double gamma) const {
    FeedbackProtocol p = *this;
    if (!(gamma > 0.0)) throw ValidationError("with_gain: gamma must be positive");
    p.gamma_ = gamma;
    return p;
  }

 private:
  Dims dims_;
  HermitianMatrix unit_h_i0_;
  std::vector<CMatrix> controller_blocks_;
  std::vector<CMatrix> unit_couplings_;
  double gamma_ = 1.0;
  std::vector<CVector> plant_basis_;
  std::vector<CVector> controller_basis_;
  CMatrix controller_state_;
};

/// Energy-exchange design on a two-level controller: a single coupling
/// sqrt(gamma)|nu_c^0><nu_c^1| and the nearest-neighbour ladder
///   H_I(0) = gamma * sum_k (|nu_p^k, nu_c^1><nu_p^{k+1}, nu_c^0| + h.c.).
/// The state |phi0, nu_c^0> is dark; the ladder drains every other level
/// into it.
inline FeedbackProtocol build_design(const CVector& phi0,
                                     std::optional<std::vector<CVector>> plant_basis,
                                     double gamma) {
  const auto dp = static_cast<std::size_t>(phi0.size());
  if (dp < 2) throw ValidationError("build_design: plant dimension must be at least 2");
  std::vector<CVector> basis = plant_basis ? std::move(*plant_basis) : complete_basis(phi0);
  if (basis.size() != dp) {
    throw DimensionError("build_design: plant basis has wrong size");
  }
  if (!is_orthonormal(basis)) {
    throw ValidationError("build_design: plant basis is not orthonormal");
  }
  if ((basis.front() - phi0).norm() > 1e-10) {
    throw ValidationError("build_design: first basis vector must equal phi0");
  }

  const std::vector<CVector> cbasis = computational_basis(2);
  const CVector& c0 = cbasis[0];
  const CVector& c1 = cbasis[1];

  CMatrix h = zeros(2 * dp, 2 * dp);
  for (std::size_t k = 0; k + 1 < dp; ++k) {
    const CVector ket = kron(basis[k], c1);
    const CVector bra = kron(basis[k + 1], c0);
    h += ket * bra.adjoint();
  }
  for (std::size_t k = 1; k < dp; ++k) {
    const CVector ket = kron(basis[k], c0);
    const CVector bra = kron(basis[k - 1], c1);
    h += ket * bra.adjoint();
  }
  h = (0.5 * (h + h.adjoint())).eval();

  std::vector<CMatrix> couplings{c0 * c1.adjoint()};
  return FeedbackProtocol(Dims{dp, 2}, HermitianMatrix(h), std::move(couplings), gamma,
                          std::move(basis), cbasis);
}

/// H_I(t) = U_P(t) H_I(0) U_P(t)^dagger at the protocol gain.
inline HermitianMatrix h_I_at(const FeedbackProtocol& p, const FrameMap& f, double t) {
  CMatrix h = frame_conjugate(f, p.h_i0().matrix(), t, FrameDirection::Forward);
  h = (0.5 * (h + h.adjoint())).eval();
  return HermitianMatrix(h);
}

/// |phi0><phi0| kron rho_C.
inline DensityMatrix steady_candidate(const FeedbackProtocol& p) {
  return DensityMatrix(kron(projector(p.phi0()), p.controller_state()));
}

/// Largest deviation of a coupling from I_P kron (its controller block),
/// where the block is recovered by partial trace over the plant.
inline double coupling_locality_defect(const FeedbackProtocol& p) {
  double worst = 0.0;
  const Dims dims = p.dims();
  for (const auto& l : p.unit_couplings()) {
    const CMatrix block =
        partial_trace(l, dims, Subsystem::Plant) / static_cast<double>(dims.plant);
    worst = std::max(worst, max_abs(l - embed_controller(block, dims.plant)));
  }
  return worst;
}

}  // namespace cqfb
