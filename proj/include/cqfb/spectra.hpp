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

// Spectral certification of a feedback protocol: steady-state kernel,
// uniqueness in the density set, the generator restricted to traceless
// operators, exponential decay constants (K, alpha) and a sandwich on the
// trace-norm-induced norm of the persistent noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cqfb/liouville.hpp"
#include "cqfb/protocol.hpp"
#include "cqfb/qmat.hpp"

namespace cqfb {

class NotHurwitzError : public Error {
 public:
  using Error::Error;
};

//===========================================================================
// Kernel and steady states
//===========================================================================

struct KernelOptions {
  double rank_threshold = 1e-10;  // relative to the largest singular value
};

struct Kernel {
  std::size_t dim = 0;
  std::vector<CMatrix> basis;  // Hermitian; unit trace where the trace is nonzero
  RVector singular_values;     // descending
};

namespace detail {

inline cplx hs_inner(const CMatrix& a, const CMatrix& b) { return (a.adjoint() * b).trace(); }

inline std::vector<CMatrix> hermitian_span_basis(const std::vector<CMatrix>& xs,
                                                 std::size_t want) {
  std::vector<CMatrix> candidates;
  for (const auto& x : xs) {
    candidates.push_back(0.5 * (x + x.adjoint()));
    candidates.push_back((x - x.adjoint()) / (2.0 * kI));
  }
  std::vector<CMatrix> out;
  for (auto c : candidates) {
    if (out.size() == want) break;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : out) c -= hs_inner(b, c).real() * b;
    const double n = c.norm();
    if (n > 1e-8) out.push_back(c / n);
  }
  return out;
}

}  // namespace detail

inline Kernel kernel(const LindbladGenerator& g, const KernelOptions& opts = {}) {
  const CMatrix& m = g.vectorized().matrix;
  const std::size_t d = g.dim();
  Eigen::JacobiSVD<CMatrix> svd(m, Eigen::ComputeFullV);
  Kernel k;
  k.singular_values = svd.singularValues();
  const double smax = k.singular_values.size() ? k.singular_values(0) : 0.0;
  std::vector<CMatrix> null_ops;
  for (Eigen::Index i = 0; i < k.singular_values.size(); ++i) {
    if (smax == 0.0 || k.singular_values(i) < opts.rank_threshold * smax) {
      null_ops.push_back(unvec(svd.matrixV().col(i), d));
    }
  }
  k.dim = null_ops.size();
  k.basis = detail::hermitian_span_basis(null_ops, k.dim);
  for (auto& b : k.basis) {
    const cplx tr = b.trace();
    if (std::abs(tr) > 1e-10) b /= tr.real();
  }
  return k;
}

//===========================================================================
// Restriction to traceless operators
//===========================================================================

/// Hilbert-Schmidt orthonormal basis of the traceless d x d operators
/// (generalized Gell-Mann matrices scaled to unit norm).
inline std::vector<CMatrix> traceless_basis(std::size_t d) {
  std::vector<CMatrix> out;
  const auto n = static_cast<Eigen::Index>(d);
  const double r2 = std::sqrt(2.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j + 1; k < n; ++k) {
      CMatrix re = CMatrix::Zero(n, n), im = CMatrix::Zero(n, n);
      re(j, k) = re(k, j) = 1.0 / r2;
      im(j, k) = -kI / r2;
      im(k, j) = kI / r2;
      out.push_back(std::move(re));
      out.push_back(std::move(im));
    }
  }
  for (Eigen::Index l = 1; l < n; ++l) {
    CMatrix diag = CMatrix::Zero(n, n);
    const double norm = std::sqrt(static_cast<double>(l * (l + 1)));
    for (Eigen::Index j = 0; j < l; ++j) diag(j, j) = 1.0 / norm;
    diag(l, l) = -static_cast<double>(l) / norm;
    out.push_back(std::move(diag));
  }
  return out;
}

struct TracelessRestriction {
  std::size_t space_dim = 0;  // d
  std::size_t dim = 0;        // d^2 - 1
  CMatrix matrix;             // R[i,j] = <B_i, L(B_j)>
  CMatrix embedding;          // d^2 x (d^2 - 1), columns vec(B_i)

  /// Superoperator B e^{Rt} B^dagger on the full operator space.
  CMatrix lifted(const CMatrix& coeff_map) const {
    return embedding * coeff_map * embedding.adjoint();
  }
};

inline TracelessRestriction restrict_traceless(const LindbladGenerator& g) {
  const std::size_t d = g.dim();
  const auto basis = traceless_basis(d);
  TracelessRestriction r;
  r.space_dim = d;
  r.dim = basis.size();
  r.embedding.resize(static_cast<Eigen::Index>(d * d), static_cast<Eigen::Index>(r.dim));
  for (std::size_t i = 0; i < basis.size(); ++i) {
    r.embedding.col(static_cast<Eigen::Index>(i)) = vec(basis[i]);
  }
  r.matrix = r.embedding.adjoint() * g.vectorized().matrix * r.embedding;
  return r;
}

//===========================================================================
// Induced trace norm
//===========================================================================

struct NormSandwich {
  double lower = 0.0;
  double upper = 0.0;
};

struct NormEstimateOptions {
  std::size_t restarts = 32;
  std::uint64_t seed = 0x6a09e667f3bcc908ULL;
  int max_iterations = 200;
  double rel_tol = 1e-13;
};

struct RankOneMaximizer {
  double value = 0.0;
  CVector u, v;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Right singular vectors of y (descending) from the Hermitian eigenproblem
// of y^dagger y; several times cheaper than a Jacobi SVD at these sizes.
inline CMatrix right_singular_vectors(const CMatrix& y) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(y.adjoint() * y);
  return es.eigenvectors().rowwise().reverse();
}

// Alternating ascent of ||S(|u><v|)||_1. Each sweep picks the dual operator
// W of the current output, then the top singular pair of S^dagger(W); the
// objective never decreases.
inline RankOneMaximizer ascend_rank_one(const CMatrix& s, std::size_t d, CVector u, CVector v,
                                        const NormEstimateOptions& opts) {
  RankOneMaximizer best{0.0, u, v};
  double prev = -1.0;
  const auto n = static_cast<Eigen::Index>(d);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const CMatrix y = unvec(s * vec(u * v.adjoint()), d);
    const CMatrix vy = right_singular_vectors(y);
    // W = sum_i u_i v_i^dagger over the nonzero singular values.
    CMatrix w = CMatrix::Zero(n, n);
    double val = 0.0;
    const double floor = 1e-14 * std::max(max_abs(y), 1e-300);
    for (Eigen::Index i = 0; i < n; ++i) {
      const CVector yv = y * vy.col(i);
      const double sigma = yv.norm();
      val += sigma;
      if (sigma > floor) w.noalias() += (yv / sigma) * vy.col(i).adjoint();
    }
    if (val > best.value) best = {val, u, v};
    if (val <= prev * (1.0 + opts.rel_tol) + 1e-300) break;
    prev = val;
    const CMatrix a = unvec(s.adjoint() * vec(w), d);
    const CVector top = right_singular_vectors(a).col(0);
    const CVector at = a * top;
    const double an = at.norm();
    if (an == 0.0) break;
    u = at / an;
    v = top;
  }
  return best;
}

}  // namespace detail

/// Lower bound on the trace-norm-induced norm of the superoperator matrix
/// `s` (acting on vec of d x d operators) by maximizing over rank-one inputs,
/// the extreme points of the trace-norm unit ball. Restart r draws from a
/// seed derived only from (opts.seed, r).
inline RankOneMaximizer induced_trace_norm_lower(const CMatrix& s, std::size_t d,
                                                 const NormEstimateOptions& opts = {},
                                                 const RankOneMaximizer* warm = nullptr) {
  if (static_cast<std::size_t>(s.rows()) != d * d || s.rows() != s.cols()) {
    throw DimensionError("induced_trace_norm_lower: superoperator is not d^2 x d^2");
  }
  RankOneMaximizer best;
  if (max_abs(s) == 0.0) {
    best.u = CVector::Zero(static_cast<Eigen::Index>(d));
    best.v = best.u;
    return best;
  }
  if (warm && warm->u.size() == static_cast<Eigen::Index>(d)) {
    best = detail::ascend_rank_one(s, d, warm->u, warm->v, opts);
  }
  for (std::size_t r = 0; r < opts.restarts; ++r) {
    std::mt19937_64 rng(detail::splitmix64(opts.seed + r));
    CVector u = random_unit_vector(d, rng);
    CVector v = random_unit_vector(d, rng);
    auto cand = detail::ascend_rank_one(s, d, std::move(u), std::move(v), opts);
    if (cand.value > best.value) best = std::move(cand);
  }
  return best;
}

/// Sandwich for a bare superoperator matrix. The upper bound chains
/// ||Y||_1 <= sqrt(d)||Y||_2 and ||X||_2 <= ||X||_1 with a second sqrt(d).
inline NormSandwich induced_trace_norm_estimate(const VectorizedSuperop& s,
                                                const NormEstimateOptions& opts = {}) {
  NormSandwich out;
  out.lower = induced_trace_norm_lower(s.matrix, s.dim, opts).value;
  out.upper = static_cast<double>(s.dim) * operator_norm(s.matrix);
  out.upper = std::max(out.upper, out.lower);
  return out;
}

/// Sandwich for a structured generator; the upper bound is the term-wise
/// triangle inequality 2 sum_k ||L_k||^2 + 2 ||H||.
inline NormSandwich induced_trace_norm_estimate(const LindbladGenerator& g,
                                                const NormEstimateOptions& opts = {}) {
  NormSandwich out;
  double upper = 2.0 * operator_norm(g.hamiltonian().matrix());
  for (const auto& l : g.couplings()) {
    const double n = operator_norm(l);
    upper += 2.0 * n * n;
  }
  out.upper = upper;
  if (!g.is_zero()) {
    out.lower = induced_trace_norm_lower(g.vectorized().matrix, g.dim(), opts).value;
  }
  return out;
}

//===========================================================================
// Decay constants
//===========================================================================

struct DecayOptions {
  double alpha_margin = 1e-6;
  double slack = 1.05;
  NormEstimateOptions norm{8, 0x510e527fade682d1ULL, 100, 1e-10};
};

struct DecayPair {
  double K = 0.0;
  double alpha = 0.0;
  double abscissa = 0.0;  // max real part of the spectrum of R
};

/// Grid of `n` equally spaced times on [t0, t1].
inline std::vector<double> linspace(double t0, double t1, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = n == 1 ? t0 : t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  if (n > 1) out.back() = t1;
  return out;
}

/// Constructive (K, alpha) with ||e^{Rt}|| <= K e^{-alpha t} on the grid.
/// `norm_of_exp(t, E)` returns the norm of E = e^{Rt}.
template <class NormFn>
DecayPair decay_pair(const CMatrix& r, std::span<const double> grid, NormFn&& norm_of_exp,
                     const DecayOptions& opts = {}) {
  DecayPair out;
  out.abscissa = spectral_abscissa(r);
  out.alpha = -out.abscissa - opts.alpha_margin;
  if (!(out.alpha > 0.0)) {
    throw NotHurwitzError("decay_pair: spectral abscissa " + std::to_string(out.abscissa) +
                          " leaves no positive decay rate");
  }
  double worst = 0.0;
  for (double t : grid) {
    const double n = norm_of_exp(t, expm(r * t));
    worst = std::max(worst, n * std::exp(out.alpha * t));
  }
  out.K = opts.slack * worst;
  return out;
}

/// Spectral-norm envelope, for matrices that are not superoperators.
inline DecayPair decay_pair_spectral(const CMatrix& r, std::span<const double> grid,
                                     const DecayOptions& opts = {}) {
  return decay_pair(r, grid, [](double, const CMatrix& e) { return operator_norm(e); }, opts);
}

/// Trace-norm-induced norm of e^{Rt} lifted to the full operator space as
/// e^{Lt} composed with the projection onto traceless operators. That lift
/// agrees with e^{L|_0 t} on traceless inputs, so its norm is an upper
/// bound on the restricted norm; rank-one ascent estimates it.
class RestrictedExpNorm {
 public:
  RestrictedExpNorm(const TracelessRestriction& r, NormEstimateOptions opts)
      : r_(&r), opts_(opts) {}

  double operator()(double /*t*/, const CMatrix& e) {
    const CMatrix lifted = r_->lifted(e);
    auto best = induced_trace_norm_lower(lifted, r_->space_dim, opts_,
                                         warm_ ? &*warm_ : nullptr);
    warm_ = best;
    return best.value;
  }

 private:
  const TracelessRestriction* r_;
  NormEstimateOptions opts_;
  std::optional<RankOneMaximizer> warm_;
};

inline DecayPair decay_pair(const TracelessRestriction& r, std::span<const double> grid,
                            const DecayOptions& opts = {}) {
  RestrictedExpNorm norm(r, opts.norm);
  return decay_pair(r.matrix, grid, norm, opts);
}

/// max over the grid of ||e^{Rt}|| / (K e^{-alpha t}); at most 1 when the
/// envelope holds.
inline double decay_envelope_ratio(const TracelessRestriction& r, const DecayPair& pair,
                                   std::span<const double> grid,
                                   const NormEstimateOptions& opts = {}) {
  RestrictedExpNorm norm(r, opts);
  double worst = 0.0;
  for (double t : grid) {
    const double n = norm(t, expm(r.matrix * t));
    worst = std::max(worst, n / (pair.K * std::exp(-pair.alpha * t)));
  }
  return worst;
}

//===========================================================================
// Uniqueness
//===========================================================================

struct SteadyStateVerdict {
  bool unique = false;
  std::optional<DensityMatrix> state;
  std::size_t kernel_dim = 0;
  double restricted_abscissa = std::numeric_limits<double>::quiet_NaN();
  std::string reason;
};

inline SteadyStateVerdict unique_density_steady(const LindbladGenerator& g,
                                                const KernelOptions& kopts = {},
                                                double imaginary_axis_tol = 1e-10) {
  SteadyStateVerdict out;
  const Kernel k = kernel(g, kopts);
  out.kernel_dim = k.dim;
  if (k.dim != 1) {
    out.reason = "kernel dimension " + std::to_string(k.dim) + " != 1";
    return out;
  }
  const CMatrix& x = k.basis.front();
  if (std::abs(x.trace() - 1.0) > 1e-8) {
    out.reason = "kernel element is traceless";
    return out;
  }
  try {
    Tolerances tol;
    tol.hermiticity = 1e-10;
    tol.positivity = 1e-9;
    tol.trace = 1e-9;
    DensityMatrix rho(0.5 * (x + x.adjoint()), tol);
    out.state = std::move(rho);
  } catch (const ValidationError& e) {
    out.reason = std::string("kernel element is not a density matrix: ") + e.what();
    return out;
  }
  out.restricted_abscissa = spectral_abscissa(restrict_traceless(g).matrix);
  if (out.restricted_abscissa > -imaginary_axis_tol) {
    out.reason = "restricted spectrum touches the imaginary axis";
    out.state.reset();
    return out;
  }
  out.unique = true;
  return out;
}

//===========================================================================
// Certificate
//===========================================================================

struct SpectralCertificate {
  double gamma = 0.0;
  std::size_t kernel_dim = 0;
  std::size_t traceless_dim = 0;
  bool is_unique_density_steady = false;
  std::optional<DensityMatrix> steady_state;
  double steady_state_deviation = std::numeric_limits<double>::quiet_NaN();
  double spectral_abscissa = std::numeric_limits<double>::quiet_NaN();
  double abscissa_alpha = std::numeric_limits<double>::quiet_NaN();
  double prefactor_K = std::numeric_limits<double>::quiet_NaN();
  double noise_norm_estimate = 0.0;
  double noise_norm_upper = 0.0;
  double uncertainty_bound = 0.0;
  double bound_value = std::numeric_limits<double>::quiet_NaN();
  std::string reason;

  bool passes() const { return is_unique_density_steady && abscissa_alpha > 0.0; }
};

class CertificationError : public NotHurwitzError {
 public:
  CertificationError(const std::string& what, SpectralCertificate partial)
      : NotHurwitzError(what), partial_(std::move(partial)) {}
  const SpectralCertificate& partial() const { return partial_; }

 private:
  SpectralCertificate partial_;
};

struct CertifyOptions {
  KernelOptions kernel;
  DecayOptions decay;
  NormEstimateOptions noise_norm;
  std::size_t grid_points = 200;
  double min_horizon = 20.0;      // decay grid covers [0, max(min_horizon, horizon_per_rate/alpha)]
  double horizon_per_rate = 5.0;
};

/// Runs the full hypothesis chain on the unit-gain feedback generator and
/// assembles K ||L_noise|| / (gamma alpha), with the noise norm taken from
/// the analytic upper bound (plus any declared uncertainty bound).
inline SpectralCertificate certify(const FeedbackProtocol& p, const LindbladGenerator& noise,
                                   double uncertainty_bound = 0.0,
                                   const CertifyOptions& opts = {}) {
  if (noise.dim() != p.dims().total()) {
    throw DimensionError("certify: noise generator is not of composite dimension");
  }
  SpectralCertificate cert;
  cert.gamma = p.gamma();
  cert.uncertainty_bound = uncertainty_bound;
  const LindbladGenerator unit = p.unit_generator();

  const auto noise_norm = induced_trace_norm_estimate(noise, opts.noise_norm);
  cert.noise_norm_estimate = noise_norm.lower;
  cert.noise_norm_upper = noise_norm.upper;

  const auto verdict = unique_density_steady(unit, opts.kernel);
  cert.kernel_dim = verdict.kernel_dim;
  cert.is_unique_density_steady = verdict.unique;
  cert.steady_state = verdict.state;
  cert.reason = verdict.reason;
  if (verdict.state) {
    cert.steady_state_deviation =
        trace_norm(verdict.state->matrix() - steady_candidate(p).matrix());
  }

  const TracelessRestriction r = restrict_traceless(unit);
  cert.traceless_dim = r.dim;
  cert.spectral_abscissa = spectral_abscissa(r.matrix);
  if (!verdict.unique) {
    throw CertificationError("certify: no unique steady state (" + verdict.reason + ")", cert);
  }

  const double rate = -cert.spectral_abscissa;
  const double horizon = std::max(opts.min_horizon, opts.horizon_per_rate / rate);
  const auto grid = linspace(0.0, horizon, opts.grid_points);
  DecayPair pair;
  try {
    pair = decay_pair(r, grid, opts.decay);
  } catch (const NotHurwitzError& e) {
    throw CertificationError(e.what(), cert);
  }
  cert.abscissa_alpha = pair.alpha;
  cert.prefactor_K = pair.K;
  cert.bound_value = cert.prefactor_K * (cert.noise_norm_upper + cert.uncertainty_bound) /
                     (cert.gamma * cert.abscissa_alpha);
  return cert;
}

/// The same certificate at another gain. Everything except the gain is
/// computed at unit gain, so only the bound changes (as 1/gamma).
inline SpectralCertificate rescale_certificate(SpectralCertificate c, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("rescale_certificate: gamma must be positive");
  c.gamma = gamma;
  if (c.passes()) {
    c.bound_value =
        c.prefactor_K * (c.noise_norm_upper + c.uncertainty_bound) / (gamma * c.abscissa_alpha);
  }
  return c;
}

namespace detail {

inline std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// `key: value` lines.
inline std::string to_report(const SpectralCertificate& c) {
  std::ostringstream os;
  os << "gamma: " << detail::fmt17(c.gamma) << "\n";
  os << "kernel_dim: " << c.kernel_dim << "\n";
  os << "traceless_dim: " << c.traceless_dim << "\n";
  os << "is_unique_density_steady: " << (c.is_unique_density_steady ? "true" : "false") << "\n";
  os << "steady_state_deviation: " << detail::fmt17(c.steady_state_deviation) << "\n";
  os << "spectral_abscissa: " << detail::fmt17(c.spectral_abscissa) << "\n";
  os << "abscissa_alpha: " << detail::fmt17(c.abscissa_alpha) << "\n";
  os << "prefactor_K: " << detail::fmt17(c.prefactor_K) << "\n";
  os << "noise_norm_estimate: " << detail::fmt17(c.noise_norm_estimate) << "\n";
  os << "noise_norm_upper: " << detail::fmt17(c.noise_norm_upper) << "\n";
  os << "uncertainty_bound: " << detail::fmt17(c.uncertainty_bound) << "\n";
  os << "bound_value: " << detail::fmt17(c.bound_value) << "\n";
  os << "pass: " << (c.passes() ? "true" : "false") << "\n";
  if (!c.reason.empty()) os << "reason: " << c.reason << "\n";
  return os.str();
}

inline std::map<std::string, std::string> parse_report(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto pos = line.find(": ");
    if (pos == std::string::npos) continue;
    out[line.substr(0, pos)] = line.substr(pos + 2);
  }
  return out;
}

}  // namespace cqfb
