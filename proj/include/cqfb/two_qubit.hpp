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

// Reference system: a two-qubit plant driven by sigma_x kron sigma_x, kept
// on the orbit of |00> by a single-qubit controller.

#pragma once

#include <cmath>
#include <vector>

#include "cqfb/liouville.hpp"
#include "cqfb/propagate.hpp"
#include "cqfb/protocol.hpp"
#include "cqfb/qmat.hpp"

namespace cqfb::two_qubit {

inline Dims dims() { return {4, 2}; }

inline HermitianMatrix plant_hamiltonian() { return HermitianMatrix(kron(pauli_x(), pauli_x())); }

/// |00>
inline CVector phi0() { return kron(qubit_ket(0), qubit_ket(0)); }

inline FeedbackProtocol protocol(double gamma) { return build_design(phi0(), std::nullopt, gamma); }

/// |0><1| on one qubit.
inline CMatrix lowering() { return ket_bra(0, 1, 2); }

/// Plant-local persistent noise, embedded on the composite:
/// 0.5 |0><1| kron I, 0.5 I kron sigma_z, 0.5 sigma_x kron |0><1|.
inline std::vector<CMatrix> noise_couplings() {
  const CMatrix i2 = identity(2);
  return {embed_plant(0.5 * kron(lowering(), i2), 2), embed_plant(0.5 * kron(i2, pauli_z()), 2),
          embed_plant(0.5 * kron(pauli_x(), lowering()), 2)};
}

/// As above, but the third coupling acts jointly on the second plant qubit
/// and the controller: 0.5 (I kron sigma_x) kron |0><1|. Same norm budget.
inline std::vector<CMatrix> correlated_noise_couplings() {
  auto out = noise_couplings();
  out[2] = 0.5 * kron(kron(identity(2), pauli_x()), lowering());
  return out;
}

inline LindbladGenerator noise_generator() {
  return LindbladGenerator(std::nullopt, noise_couplings());
}

/// diag(0.8, 0.1, 0.05, 0.05) on |00>,|01>,|10>,|11> times
/// 0.9|0><0| + 0.1|1><1| on the controller.
inline DensityMatrix mixed_initial_state() {
  CMatrix plant = zeros(4, 4);
  const double w[4] = {0.8, 0.1, 0.05, 0.05};
  for (std::size_t j = 0; j < 4; ++j) plant += w[j] * projector(basis_ket(j, 4));
  const CMatrix ctrl = 0.9 * projector(qubit_ket(0)) + 0.1 * projector(qubit_ket(1));
  return DensityMatrix(kron(plant, ctrl));
}

/// Hermitian direction of the bounded perturbation; unit operator norm.
inline CMatrix perturbation_direction() {
  return kron(kron(pauli_z(), pauli_z()), pauli_x());
}

/// H_unc(t) = (bound / 2) sin(omega t) A with ||A|| = 1, so that the
/// induced norm of -i[H_unc(t), .] never exceeds `bound`.
inline HamiltonianPerturbation sinusoidal_perturbation(double bound, double omega,
                                                       CMatrix direction = perturbation_direction()) {
  const double scale = 0.5 * bound / operator_norm(direction);
  return {[direction, scale, omega](double t) -> CMatrix {
            return (scale * std::sin(omega * t)) * direction;
          },
          bound};
}

}  // namespace cqfb::two_qubit
