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
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cqfb/qmat.hpp"

namespace cqfb {

//===========================================================================
// Column-stacking vectorization: vec(A X B) = (B^T kron A) vec(X)
//===========================================================================

inline CVector vec(const CMatrix& x) {
  return Eigen::Map<const CVector>(x.data(), x.size());
}

inline CMatrix unvec(const CVector& v, std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  if (v.size() != n * n) throw DimensionError("unvec: length is not d^2");
  return Eigen::Map<const CMatrix>(v.data(), n, n);
}

/// Matrix of a linear map on d x d operators, acting on vec(X).
struct VectorizedSuperop {
  std::size_t dim = 0;
  CMatrix matrix;

  CMatrix apply(const CMatrix& x) const { return unvec(matrix * vec(x), dim); }
};

/// Superoperator of X -> U X U^dagger.
inline VectorizedSuperop conjugation_superop(const CMatrix& u) {
  return {static_cast<std::size_t>(u.rows()), kron(u.conjugate(), u)};
}

//===========================================================================
// LindbladGenerator
//===========================================================================

/// X -> -i[H, X] + sum_k (L_k X L_k^dagger - 1/2 {L_k^dagger L_k, X}).
///
/// The structure (H, {L_k}) is the primary representation; the d^2 x d^2
/// matrix is built on first request and shared between copies.
class LindbladGenerator {
 public:
  LindbladGenerator() = default;

  /// Zero generator on a d-dimensional space.
  explicit LindbladGenerator(std::size_t d)
      : dim_(d), h_(HermitianMatrix::zero(d)), effective_(zeros(d, d)),
        cache_(std::make_shared<Cache>()) {}

  LindbladGenerator(std::optional<HermitianMatrix> h, std::vector<CMatrix> couplings)
      : couplings_(std::move(couplings)), cache_(std::make_shared<Cache>()) {
    if (h) {
      dim_ = h->dim();
    } else if (!couplings_.empty()) {
      dim_ = static_cast<std::size_t>(couplings_.front().rows());
    } else {
      throw DimensionError("LindbladGenerator: dimension cannot be inferred");
    }
    h_ = h ? std::move(*h) : HermitianMatrix::zero(dim_);
    for (std::size_t k = 0; k < couplings_.size(); ++k) {
      const auto& l = couplings_[k];
      if (static_cast<std::size_t>(l.rows()) != dim_ ||
          static_cast<std::size_t>(l.cols()) != dim_) {
        throw DimensionError("LindbladGenerator: coupling " + std::to_string(k) +
                             " is not " + std::to_string(dim_) + "x" +
                             std::to_string(dim_));
      }
    }
    effective_ = -kI * h_.matrix();
    for (const auto& l : couplings_) effective_ -= 0.5 * l.adjoint() * l;
  }

  std::size_t dim() const { return dim_; }
  const HermitianMatrix& hamiltonian() const { return h_; }
  const std::vector<CMatrix>& couplings() const { return couplings_; }

  /// -iH - 1/2 sum_k L_k^dagger L_k, so that apply(X) = K X + X K^dagger + sum L X L^dagger.
  const CMatrix& effective() const { return effective_; }

  CMatrix apply(const CMatrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != dim_ || x.rows() != x.cols()) {
      throw DimensionError("LindbladGenerator::apply: operand dimension mismatch");
    }
    CMatrix out = effective_ * x;
    out += x * effective_.adjoint();
    for (const auto& l : couplings_) out.noalias() += l * x * l.adjoint();
    return out;
  }

  const VectorizedSuperop& vectorized() const;

  bool is_zero() const {
    if (max_abs(h_.matrix()) != 0.0) return false;
    for (const auto& l : couplings_)
      if (max_abs(l) != 0.0) return false;
    return true;
  }

 private:
  struct Cache {
    std::once_flag once;
    VectorizedSuperop value;
  };

  std::size_t dim_ = 0;
  HermitianMatrix h_;
  std::vector<CMatrix> couplings_;
  CMatrix effective_;
  std::shared_ptr<Cache> cache_;
};

inline LindbladGenerator make_generator(std::optional<HermitianMatrix> h,
                                        std::vector<CMatrix> couplings) {
  return LindbladGenerator(std::move(h), std::move(couplings));
}

inline VectorizedSuperop vectorize(const LindbladGenerator& g) {
  const std::size_t d = g.dim();
  const CMatrix id = identity(d);
  const CMatrix& h = g.hamiltonian().matrix();
  CMatrix m = -kI * (kron(id, h) - kron(h.transpose(), id));
  for (const auto& l : g.couplings()) {
    const CMatrix q = l.adjoint() * l;
    m += kron(l.conjugate(), l);
    m -= 0.5 * kron(id, q);
    m -= 0.5 * kron(q.transpose(), id);
  }
  return {d, std::move(m)};
}

inline const VectorizedSuperop& LindbladGenerator::vectorized() const {
  if (!cache_) throw Error("LindbladGenerator: default-constructed generator");
  std::call_once(cache_->once, [this] { cache_->value = vectorize(*this); });
  return cache_->value;
}

/// gamma * g, built on structure: H -> gamma H, L_k -> sqrt(gamma) L_k.
inline LindbladGenerator gen_scale(const LindbladGenerator& g, double gamma) {
  if (!(gamma > 0.0)) {
    throw ValidationError("gen_scale: gain must be positive, got " + std::to_string(gamma));
  }
  std::vector<CMatrix> ls;
  ls.reserve(g.couplings().size());
  const double root = std::sqrt(gamma);
  for (const auto& l : g.couplings()) ls.push_back(root * l);
  return LindbladGenerator(HermitianMatrix(gamma * g.hamiltonian().matrix()), std::move(ls));
}

inline LindbladGenerator gen_add(const LindbladGenerator& a, const LindbladGenerator& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("gen_add: dimensions " + std::to_string(a.dim()) + " and " +
                         std::to_string(b.dim()) + " differ");
  }
  std::vector<CMatrix> ls = a.couplings();
  ls.insert(ls.end(), b.couplings().begin(), b.couplings().end());
  return LindbladGenerator(
      HermitianMatrix(a.hamiltonian().matrix() + b.hamiltonian().matrix()), std::move(ls));
}

/// op kron I_{d_C}
inline CMatrix embed_plant(const CMatrix& op, std::size_t controller_dim) {
  if (op.rows() != op.cols()) throw DimensionError("embed_plant: operator is not square");
  return kron(op, identity(controller_dim));
}

/// I_{d_P} kron op
inline CMatrix embed_controller(const CMatrix& op, std::size_t plant_dim) {
  if (op.rows() != op.cols()) throw DimensionError("embed_controller: operator is not square");
  return kron(identity(plant_dim), op);
}

/// e^{L t} as a d^2 x d^2 matrix.
inline CMatrix semigroup_step(const VectorizedSuperop& v, double t) {
  if (t < 0.0) throw ValidationError("semigroup_step: negative time");
  return expm(v.matrix * t);
}

inline CMatrix propagate_exact(const LindbladGenerator& g, const CMatrix& x, double t) {
  return unvec(semigroup_step(g.vectorized(), t) * vec(x), g.dim());
}

}  // namespace cqfb
