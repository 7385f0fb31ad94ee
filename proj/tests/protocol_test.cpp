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

#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "cqfb/propagate.hpp"
#include "cqfb/protocol.hpp"
#include "cqfb/two_qubit.hpp"

namespace {

using namespace cqfb;

// Shift matrices as printed in storage order for the two-qubit example.
CMatrix lower_shift(std::size_t d) {
  CMatrix s = zeros(d, d);
  for (std::size_t i = 0; i + 1 < d; ++i) s(i + 1, i) = 1.0;
  return s;
}

TEST(BuildDesign, ExplicitTwoQubitMatrices) {
  const double gamma = 5.0;
  const FeedbackProtocol p = two_qubit::protocol(gamma);
  const CMatrix expected = gamma * kron(lower_shift(4), ket_bra(1, 0, 2)) +
                           gamma * kron(lower_shift(4).transpose(), ket_bra(0, 1, 2));
  EXPECT_LT(max_abs_diff(p.h_i0().matrix(), expected), 1e-12);
  ASSERT_EQ(p.couplings().size(), 1u);
  EXPECT_LT(max_abs_diff(p.couplings()[0],
                         std::sqrt(gamma) * embed_controller(ket_bra(0, 1, 2), 4)),
            1e-12);
}

TEST(BuildDesign, LadderStructureInLabels) {
  // Built from the ket-bra definition directly, independent of storage order.
  const FeedbackProtocol p = build_design(basis_ket(0, 3), std::nullopt, 1.0);
  CMatrix h = zeros(6, 6);
  auto ket = [](std::size_t k, int c) { return kron(basis_ket(k, 3), qubit_ket(c)); };
  for (std::size_t k = 0; k + 1 < 3; ++k) h += ket(k, 1) * ket(k + 1, 0).adjoint();
  for (std::size_t k = 1; k < 3; ++k) h += ket(k, 0) * ket(k - 1, 1).adjoint();
  EXPECT_LT(max_abs_diff(p.h_i0().matrix(), h), 1e-14);
}

TEST(BuildDesign, SmallestPlantIsAdjointPair) {
  const FeedbackProtocol p = build_design(qubit_ket(0), std::nullopt, 1.0);
  const CVector a = kron(qubit_ket(0), qubit_ket(1));
  const CVector b = kron(qubit_ket(1), qubit_ket(0));
  const CMatrix expected = a * b.adjoint() + b * a.adjoint();
  EXPECT_LT(max_abs_diff(p.h_i0().matrix(), expected), 1e-14);
  EXPECT_TRUE(is_hermitian(p.h_i0().matrix()));
}

TEST(BuildDesign, DarkStateIdentities) {
  for (double gamma : {1.0, 5.0, 20.0}) {
    const FeedbackProtocol p = two_qubit::protocol(gamma);
    const CVector dark = kron(p.phi0(), qubit_ket(0));
    const CMatrix l = p.couplings()[0];
    const CMatrix k = -kI * p.h_i0().matrix() - 0.5 * l.adjoint() * l;
    EXPECT_LT((l * dark).norm(), 1e-12);
    EXPECT_LT((k * dark).norm(), 1e-12);
    const CMatrix s = steady_candidate(p).matrix();
    const CMatrix h = p.h_i0().matrix();
    EXPECT_LT(max_abs(h * s - s * h), 1e-12);
    EXPECT_LT(max_abs(l.adjoint() * l * s), 1e-12);
  }
}

TEST(BuildDesign, CustomCompletionAndErrors) {
  std::mt19937_64 rng(21);
  const CVector phi = random_unit_vector(3, rng);
  const auto basis = complete_basis(phi);
  EXPECT_TRUE(is_orthonormal(basis));
  EXPECT_LT((basis.front() - phi).norm(), 1e-12);
  const FeedbackProtocol p = build_design(phi, basis, 2.0);
  EXPECT_LT(max_abs(p.generator().apply(steady_candidate(p).matrix())), 1e-12);

  std::vector<CVector> bad = basis;
  bad[1] = bad[2];
  EXPECT_THROW(build_design(phi, bad, 1.0), ValidationError);
  EXPECT_THROW(build_design(basis_ket(0, 1), std::nullopt, 1.0), ValidationError);
  EXPECT_THROW(build_design(phi, basis, 0.0), ValidationError);
  std::vector<CVector> swapped = basis;
  std::swap(swapped[0], swapped[1]);
  EXPECT_THROW(build_design(phi, swapped, 1.0), ValidationError);
}

TEST(FeedbackProtocol, GainScaling) {
  const FeedbackProtocol unit = two_qubit::protocol(1.0);
  const FeedbackProtocol p = unit.with_gain(7.0);
  EXPECT_DOUBLE_EQ(p.gamma(), 7.0);
  EXPECT_LT(max_abs_diff(p.h_i0().matrix(), 7.0 * unit.h_i0().matrix()), 1e-14);
  EXPECT_LT(max_abs_diff(p.couplings()[0], std::sqrt(7.0) * unit.couplings()[0]), 1e-14);
  EXPECT_THROW(unit.with_gain(-1.0), ValidationError);
}

TEST(FeedbackProtocol, CouplingLocality) {
  const FeedbackProtocol p = two_qubit::protocol(5.0);
  EXPECT_LT(coupling_locality_defect(p), 1e-12);
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix a = embed_plant(random_gaussian(4, 4, rng), 2);
    for (const auto& l : p.couplings()) EXPECT_LT(max_abs(a * l - l * a), 1e-12);
  }
}

TEST(FeedbackProtocol, GenericProtocolValidation) {
  const auto pb = computational_basis(2);
  const auto cb = computational_basis(2);
  const HermitianMatrix h(kron(pauli_x(), pauli_x()));
  EXPECT_NO_THROW(FeedbackProtocol(Dims{2, 2}, h, {ket_bra(0, 1, 2)}, 1.0, pb, cb));
  EXPECT_THROW(FeedbackProtocol(Dims{2, 2}, h, {identity(3)}, 1.0, pb, cb), DimensionError);
  EXPECT_THROW(FeedbackProtocol(Dims{2, 2}, HermitianMatrix(pauli_x()), {}, 1.0, pb, cb),
               DimensionError);
}

TEST(FrameMap, UnitaryAndGroupLaw) {
  std::mt19937_64 rng(23);
  const FrameMap f(random_hermitian(4, rng), 2);
  for (double t : {0.0, 0.3, 1.7, 10.0}) {
    const CMatrix u = f.unitary(t);
    EXPECT_LT(max_abs_diff(u * u.adjoint(), identity(8)), 1e-10);
    for (double s : {0.2, 2.5}) {
      EXPECT_LT(max_abs_diff(f.unitary(t + s), f.unitary(t) * f.unitary(s)), 1e-10);
    }
  }
  EXPECT_LT(max_abs_diff(f.unitary(0.9),
                         expm(-kI * 0.9 * embed_plant(f.plant_hamiltonian().matrix(), 2))),
            1e-10);
}

TEST(HIAt, InitialTimeAndSpectrum) {
  const FeedbackProtocol p = two_qubit::protocol(5.0);
  const FrameMap f(two_qubit::plant_hamiltonian(), 2);
  EXPECT_LT(max_abs_diff(h_I_at(p, f, 0.0).matrix(), p.h_i0().matrix()), 1e-14);
  const RVector e0 = eig_hermitian(p.h_i0()).values;
  const RVector et = eig_hermitian(h_I_at(p, f, 0.7)).values;
  EXPECT_LT((e0 - et).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(HIAt, IdentityPlantHamiltonianGivesStaticInteraction) {
  const FeedbackProtocol p = two_qubit::protocol(3.0);
  const FrameMap f(HermitianMatrix(identity(4)), 2);
  for (double t : {0.5, 2.0, 9.0}) {
    EXPECT_LT(max_abs_diff(h_I_at(p, f, t).matrix(), p.h_i0().matrix()), 1e-12);
  }
}

TEST(FrameConjugate, RoundTripAndNormInvariance) {
  const FrameMap f(two_qubit::plant_hamiltonian(), 2);
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const CMatrix x = random_gaussian(8, 8, rng);
    const double t = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
    const CMatrix y = frame_conjugate(f, x, t, FrameDirection::Forward);
    EXPECT_LT(max_abs_diff(frame_conjugate(f, y, t, FrameDirection::Inverse), x), 1e-12);
    EXPECT_NEAR(trace_norm(y), trace_norm(x), 1e-10);
  }
  const CMatrix x = random_gaussian(8, 8, rng);
  EXPECT_LT(max_abs_diff(frame_conjugate(f, x, 0.0, FrameDirection::Forward), x), 1e-12);
  EXPECT_THROW(frame_conjugate(f, identity(4), 1.0, FrameDirection::Forward), DimensionError);
}

TEST(SteadyCandidate, TwoQubitExample) {
  const FeedbackProtocol p = two_qubit::protocol(5.0);
  const DensityMatrix s = steady_candidate(p);
  const CVector v = kron(kron(qubit_ket(0), qubit_ket(0)), qubit_ket(0));
  EXPECT_LT(max_abs_diff(s.matrix(), projector(v)), 1e-15);
  EXPECT_NEAR(s.matrix().trace().real(), 1.0, 1e-12);
  EXPECT_NEAR(s.purity(), 1.0, 1e-12);
  EXPECT_LT(trace_norm(p.unit_generator().apply(s.matrix())), 1e-12);
}

// theta(t) = U^dagger sigma(t) U obeys the autonomous feedback equation.
TEST(RotatingFrame, EquivalenceWithAutonomousEquation) {
  const double gamma = 5.0;
  const FeedbackProtocol p = two_qubit::protocol(gamma);
  const FrameMap f(two_qubit::plant_hamiltonian(), 2);
  const Dynamics lab = feedback_dynamics(p, f);
  const Dynamics rot(p.generator());
  std::mt19937_64 rng(25);
  const CMatrix sigma0 = random_density(8, rng).matrix();
  IntegrateOptions opts;
  opts.rel_tol = 1e-11;
  opts.abs_tol = 1e-13;
  for (double t : {0.5, 1.0, 2.0}) {
    const CMatrix sigma = integrate_operator(lab, sigma0, 0.0, t, opts);
    const CMatrix theta = integrate_operator(rot, sigma0, 0.0, t, opts);
    EXPECT_LT(max_abs_diff(frame_conjugate(f, sigma, t, FrameDirection::Inverse), theta), 1e-7);
  }
}

}  // namespace
