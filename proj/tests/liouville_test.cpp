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

#include <cmath>
#include <random>
#include <thread>
#include <vector>

#include "cqfb/liouville.hpp"
#include "cqfb/protocol.hpp"
#include "cqfb/two_qubit.hpp"

namespace {

using namespace cqfb;

LindbladGenerator random_generator(std::size_t d, std::size_t n_couplings, std::mt19937_64& rng) {
  std::vector<CMatrix> ls;
  for (std::size_t k = 0; k < n_couplings; ++k) ls.push_back(0.5 * random_gaussian(d, d, rng));
  return LindbladGenerator(random_hermitian(d, rng), ls);
}

TEST(Vectorization, ColumnStackingIdentity) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix a = random_gaussian(3, 3, rng);
    const CMatrix x = random_gaussian(3, 3, rng);
    const CMatrix b = random_gaussian(3, 3, rng);
    EXPECT_LT((vec(a * x * b) - kron(b.transpose(), a) * vec(x)).norm(), 1e-12);
  }
  CMatrix x(2, 2);
  x << 1.0, 2.0, 3.0, 4.0;
  const CVector v = vec(x);
  EXPECT_EQ(v(0), cplx(1.0));
  EXPECT_EQ(v(1), cplx(3.0));  // columns are stacked
  EXPECT_TRUE(approx_equal(unvec(v, 2), x, 0.0));
}

TEST(MakeGenerator, CommutatorOracle) {
  const LindbladGenerator g(HermitianMatrix(pauli_x()), {});
  EXPECT_LT(max_abs_diff(g.apply(pauli_z()), -2.0 * pauli_y()), 1e-14);
}

TEST(MakeGenerator, DampingTermOracle) {
  const LindbladGenerator g(std::nullopt, {ket_bra(0, 1, 2)});
  const CMatrix out = g.apply(ket_bra(1, 1, 2));
  EXPECT_LT(max_abs_diff(out, ket_bra(0, 0, 2) - ket_bra(1, 1, 2)), 1e-15);
}

TEST(MakeGenerator, DesignAnnihilatesSteadyCandidate) {
  const FeedbackProtocol p = two_qubit::protocol(5.0);
  const CMatrix out = p.generator().apply(steady_candidate(p).matrix());
  EXPECT_LT(max_abs(out), 1e-12);
}

TEST(MakeGenerator, DimensionMismatchThrows) {
  EXPECT_THROW(LindbladGenerator(HermitianMatrix(pauli_x()), {identity(3)}), DimensionError);
  EXPECT_THROW(LindbladGenerator(std::nullopt, {}), DimensionError);
}

TEST(Vectorize, ZeroGenerator) {
  EXPECT_EQ(max_abs(LindbladGenerator(3).vectorized().matrix), 0.0);
}

TEST(Vectorize, AgreesWithStructuredApply) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const LindbladGenerator g = random_generator(4, 2, rng);
    const CMatrix x = random_gaussian(4, 4, rng);
    EXPECT_LT(max_abs_diff(g.vectorized().apply(x), g.apply(x)), 1e-12 * std::max(1.0, max_abs(g.apply(x))));
  }
}

TEST(Vectorize, TraceAnnihilationOnHermitianBasis) {
  std::mt19937_64 rng(3);
  const LindbladGenerator g = random_generator(3, 2, rng);
  const CMatrix& m = g.vectorized().matrix;
  // tr(X) = vec(I)^dagger vec(X); trace preservation means vec(I)^dagger M = 0.
  const CVector row = vec(identity(3)).adjoint() * m;
  EXPECT_LT(row.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Invariants, TraceAnnihilationAndHermiticity) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const LindbladGenerator g = random_generator(4, 3, rng);
    const CMatrix x = random_gaussian(4, 4, rng);
    const CMatrix y = g.apply(x);
    EXPECT_LE(std::abs(y.trace()), 1e-10 * trace_norm(x));
    EXPECT_LT(max_abs_diff(g.apply(x.adjoint()), y.adjoint()), 1e-12 * std::max(1.0, max_abs(y)));
  }
}

TEST(GenScale, IdentityGain) {
  std::mt19937_64 rng(5);
  const LindbladGenerator g = random_generator(3, 2, rng);
  const LindbladGenerator s = gen_scale(g, 1.0);
  EXPECT_LT(max_abs_diff(s.vectorized().matrix, g.vectorized().matrix), 1e-15);
}

TEST(GenScale, LinearInGain) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const LindbladGenerator g = random_generator(3, 2, rng);
    const LindbladGenerator s = gen_scale(g, 4.0);
    const CMatrix x = random_gaussian(3, 3, rng);
    EXPECT_LT(max_abs_diff(s.apply(x), 4.0 * g.apply(x)), 1e-12 * max_abs(s.apply(x)));
    EXPECT_LT(max_abs_diff(s.vectorized().matrix, 4.0 * g.vectorized().matrix),
              1e-12 * max_abs(s.vectorized().matrix));
  }
}

TEST(GenScale, RejectsNonPositiveGain) {
  const LindbladGenerator g(HermitianMatrix(pauli_x()), {});
  EXPECT_THROW(gen_scale(g, 0.0), ValidationError);
  EXPECT_THROW(gen_scale(g, -1.0), ValidationError);
}

TEST(GenAdd, ZeroIsNeutral) {
  std::mt19937_64 rng(7);
  const LindbladGenerator a = random_generator(3, 1, rng);
  const LindbladGenerator s = gen_add(a, LindbladGenerator(3));
  EXPECT_LT(max_abs_diff(s.vectorized().matrix, a.vectorized().matrix), 1e-14);
}

TEST(GenAdd, LinearityAndVectorization) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const LindbladGenerator a = random_generator(4, 2, rng);
    const LindbladGenerator b = random_generator(4, 1, rng);
    const LindbladGenerator s = gen_add(a, b);
    const CMatrix x = random_density(4, rng).matrix();
    EXPECT_LT(max_abs_diff(s.apply(x), a.apply(x) + b.apply(x)), 1e-12 * max_abs(s.apply(x)));
    EXPECT_LT(max_abs_diff(s.vectorized().matrix, a.vectorized().matrix + b.vectorized().matrix),
              1e-12 * max_abs(s.vectorized().matrix));
  }
  EXPECT_THROW(gen_add(LindbladGenerator(2), LindbladGenerator(3)), DimensionError);
}

TEST(Embedding, PlantAndController) {
  EXPECT_TRUE(approx_equal(embed_plant(pauli_x(), 2), kron(pauli_x(), identity(2)), 0.0));
  EXPECT_TRUE(approx_equal(embed_controller(ket_bra(0, 1, 2), 4),
                           kron(identity(4), ket_bra(0, 1, 2)), 0.0));
  std::mt19937_64 rng(9);
  const CMatrix a = random_gaussian(2, 2, rng), b = random_gaussian(2, 2, rng);
  EXPECT_LT(max_abs_diff(embed_plant(a, 2) * embed_controller(b, 2), kron(a, b)), 1e-14);
}

TEST(SemigroupStep, ZeroTimeAndNegativeTime) {
  std::mt19937_64 rng(10);
  const LindbladGenerator g = random_generator(3, 1, rng);
  EXPECT_LT(max_abs_diff(semigroup_step(g.vectorized(), 0.0), identity(9)), 1e-15);
  EXPECT_THROW(semigroup_step(g.vectorized(), -1.0), ValidationError);
}

TEST(SemigroupStep, PureHamiltonianIsConjugation) {
  std::mt19937_64 rng(11);
  const HermitianMatrix h = random_hermitian(4, rng);
  const LindbladGenerator g(h, {});
  for (double t : {0.1, 1.0, 3.0}) {
    const CMatrix u = expm(-kI * t * h.matrix());
    EXPECT_LT(max_abs_diff(semigroup_step(g.vectorized(), t), conjugation_superop(u).matrix), 1e-10);
  }
}

TEST(SemigroupStep, AmplitudeDampingClosedForm) {
  const LindbladGenerator g(std::nullopt, {ket_bra(0, 1, 2)});
  std::mt19937_64 rng(12);
  const DensityMatrix rho = random_density(2, rng);
  const CVector k1 = qubit_ket(1);
  const double p0 = (k1.adjoint() * rho.matrix() * k1)(0, 0).real();
  for (double t : {0.2, 1.0, 4.0}) {
    const CMatrix out = propagate_exact(g, rho.matrix(), t);
    EXPECT_NEAR((k1.adjoint() * out * k1)(0, 0).real(), std::exp(-t) * p0, 1e-9);
  }
}

TEST(SemigroupStep, SemigroupProperty) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const LindbladGenerator g = random_generator(3, 2, rng);
    const double s = 0.3, t = 0.8;
    const CMatrix lhs = semigroup_step(g.vectorized(), s + t);
    const CMatrix rhs = semigroup_step(g.vectorized(), s) * semigroup_step(g.vectorized(), t);
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-9);
  }
}

TEST(SemigroupStep, PositivityAndTrace) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const LindbladGenerator g = random_generator(4, 2, rng);
    const DensityMatrix rho = random_density(4, rng);
    for (double t : {0.1, 1.0, 10.0}) {
      const CMatrix out = propagate_exact(g, rho.matrix(), t);
      EXPECT_GE(min_eigenvalue_hermitian_part(out), -1e-8);
      EXPECT_NEAR(out.trace().real(), 1.0, 1e-9);
    }
  }
}

TEST(Cache, ConcurrentVectorizationIsConsistent) {
  std::mt19937_64 rng(15);
  const LindbladGenerator g = random_generator(5, 2, rng);
  const LindbladGenerator copy = g;
  std::vector<const CMatrix*> seen(4);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&, i] { seen[i] = &(i % 2 ? copy : g).vectorized().matrix; });
  }
  for (auto& t : threads) t.join();
  for (int i = 1; i < 4; ++i) EXPECT_EQ(seen[i], seen[0]);
  EXPECT_EQ(max_abs_diff(*seen[0], vectorize(g).matrix), 0.0);
}

}  // namespace
