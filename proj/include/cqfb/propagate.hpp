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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cqfb/liouville.hpp"
#include "cqfb/protocol.hpp"
#include "cqfb/qmat.hpp"

namespace cqfb {

//===========================================================================
// Noise
//===========================================================================

/// Instantaneous channel X -> sum_k K_k X K_k^dagger applied at `time`.
struct TransientEvent {
  double time = 0.0;
  std::vector<CMatrix> kraus;
};

/// Time-dependent Hamiltonian perturbation H_unc(t) with declared bound on
/// the induced norm of -i[H_unc(t), .], i.e. 2 ||H_unc(t)|| <= bound.
struct HamiltonianPerturbation {
  std::function<CMatrix(double)> hamiltonian;
  double bound = 0.0;
};

struct NoiseModel {
  std::optional<LindbladGenerator> persistent;
  std::vector<TransientEvent> transient_events;
  std::optional<HamiltonianPerturbation> uncertainty;

  LindbladGenerator persistent_or_zero(std::size_t d) const {
    return persistent ? *persistent : LindbladGenerator(d);
  }
  double uncertainty_bound() const { return uncertainty ? uncertainty->bound : 0.0; }
};

inline double kraus_defect(const std::vector<CMatrix>& kraus) {
  if (kraus.empty()) return std::numeric_limits<double>::infinity();
  CMatrix sum = zeros(static_cast<std::size_t>(kraus.front().cols()),
                      static_cast<std::size_t>(kraus.front().cols()));
  for (const auto& k : kraus) {
    if (k.rows() != k.cols() || k.rows() != sum.rows()) {
      return std::numeric_limits<double>::infinity();
    }
    sum += k.adjoint() * k;
  }
  return max_abs(sum - CMatrix::Identity(sum.rows(), sum.cols()));
}

inline void validate_noise(const NoiseModel& n, std::size_t dim, double kraus_tol = 1e-10) {
  if (n.persistent && n.persistent->dim() != dim) {
    throw DimensionError("NoiseModel: persistent generator has dimension " +
                         std::to_string(n.persistent->dim()) + ", expected " +
                         std::to_string(dim));
  }
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n.transient_events.size(); ++i) {
    const auto& e = n.transient_events[i];
    if (!(e.time >= 0.0)) {
      throw ValidationError("NoiseModel: event " + std::to_string(i) + " has negative time");
    }
    if (!(e.time > prev)) {
      throw ValidationError("NoiseModel: event times must be strictly increasing");
    }
    prev = e.time;
    if (!e.kraus.empty() && static_cast<std::size_t>(e.kraus.front().rows()) != dim) {
      throw DimensionError("NoiseModel: event " + std::to_string(i) +
                           " Kraus operators have wrong dimension");
    }
    const double defect = kraus_defect(e.kraus);
    if (!(defect <= kraus_tol)) {
      throw ValidationError("NoiseModel: event " + std::to_string(i) +
                            " is not trace preserving (defect " + std::to_string(defect) + ")");
    }
  }
  if (n.uncertainty && !n.uncertainty->hamiltonian) {
    throw ValidationError("NoiseModel: uncertainty term has no Hamiltonian");
  }
}

inline CMatrix apply_channel(const std::vector<CMatrix>& kraus, const CMatrix& x) {
  CMatrix out = CMatrix::Zero(x.rows(), x.cols());
  for (const auto& k : kraus) out.noalias() += k * x * k.adjoint();
  return out;
}

/// Full dephasing in the computational basis of a register with the given
/// subsystem dimensions: one rank-one projector per basis state.
inline std::vector<CMatrix> decoherence_channel(std::span<const std::size_t> dims) {
  std::size_t total = 1;
  for (auto d : dims) total *= d;
  std::vector<CMatrix> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    CMatrix p = zeros(total, total);
    p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    out.push_back(std::move(p));
  }
  return out;
}

//===========================================================================
// Time-dependent generators
//===========================================================================

/// L(t) = L_aut - i[H_drive(t), .]: a fixed Lindblad generator plus an
/// optional time-dependent Hamiltonian.
class Dynamics {
 public:
  using Drive = std::function<CMatrix(double)>;

  Dynamics() = default;
  explicit Dynamics(LindbladGenerator autonomous, Drive drive = {})
      : aut_(std::move(autonomous)), drive_(std::move(drive)) {}

  std::size_t dim() const { return aut_.dim(); }
  bool time_independent() const { return !drive_; }
  const LindbladGenerator& autonomous() const { return aut_; }

  CMatrix drive(double t) const {
    return drive_ ? drive_(t) : zeros(dim(), dim());
  }

  void apply(double t, const CMatrix& x, CMatrix& out) const {
    if (drive_) {
      const CMatrix k = aut_.effective() - kI * drive_(t);
      out.noalias() = k * x;
      out.noalias() += x * k.adjoint();
    } else {
      out.noalias() = aut_.effective() * x;
      out.noalias() += x * aut_.effective().adjoint();
    }
    for (const auto& l : aut_.couplings()) out.noalias() += l * x * l.adjoint();
  }

  CMatrix apply(double t, const CMatrix& x) const {
    CMatrix out(x.rows(), x.cols());
    apply(t, x, out);
    return out;
  }

  /// The generator with the drive frozen at time t.
  LindbladGenerator frozen(double t) const {
    if (!drive_) return aut_;
    CMatrix h = aut_.hamiltonian().matrix() + drive_(t);
    h = (0.5 * (h + h.adjoint())).eval();
    return LindbladGenerator(HermitianMatrix(h), aut_.couplings());
  }

 private:
  LindbladGenerator aut_;
  Drive drive_;
};

namespace detail {

inline LindbladGenerator plant_and_noise(const FrameMap& f, const NoiseModel& noise,
                                         std::vector<CMatrix> extra_couplings) {
  std::vector<CMatrix> ls = std::move(extra_couplings);
  if (noise.persistent) {
    ls.insert(ls.end(), noise.persistent->couplings().begin(),
              noise.persistent->couplings().end());
  }
  CMatrix h = f.frame_hamiltonian().matrix();
  if (noise.persistent) h += noise.persistent->hamiltonian().matrix();
  return LindbladGenerator(HermitianMatrix(h), std::move(ls));
}

}  // namespace detail

/// L_p + gamma L_fb(t) + L_noise (+ L_unc(t)), with H_I(t) evaluated through
/// the cached frame.
inline Dynamics feedback_dynamics(const FeedbackProtocol& p, const FrameMap& f,
                                  const NoiseModel& noise = {}) {
  if (f.dim() != p.dims().total()) {
    throw DimensionError("feedback_dynamics: frame and protocol dimensions differ");
  }
  validate_noise(noise, f.dim());
  LindbladGenerator aut = detail::plant_and_noise(f, noise, p.couplings());
  const CMatrix h0 = p.h_i0().matrix();
  auto unc = noise.uncertainty;
  Dynamics::Drive drive = [f, h0, unc](double t) {
    const CMatrix u = f.unitary(t);
    CMatrix h = u * h0 * u.adjoint();
    if (unc) h += unc->hamiltonian(t);
    return h;
  };
  return Dynamics(std::move(aut), std::move(drive));
}

/// L_p + L_noise (+ L_unc(t)) on the composite: the no-feedback baseline.
inline Dynamics open_loop_dynamics(const FrameMap& f, const NoiseModel& noise = {}) {
  validate_noise(noise, f.dim());
  LindbladGenerator aut = detail::plant_and_noise(f, noise, {});
  if (!noise.uncertainty) return Dynamics(std::move(aut));
  auto unc = *noise.uncertainty;
  return Dynamics(std::move(aut), [unc](double t) { return unc.hamiltonian(t); });
}

//===========================================================================
// Desired trajectory
//===========================================================================

/// rho_D(t) = e^{-i H_P t} |phi0><phi0| e^{i H_P t}.
class DesiredTrajectory {
 public:
  DesiredTrajectory(const HermitianMatrix& plant_hamiltonian, CVector phi0)
      : prop_(plant_hamiltonian), phi0_(std::move(phi0)) {
    if (static_cast<std::size_t>(phi0_.size()) != prop_.dim()) {
      throw DimensionError("DesiredTrajectory: phi0 has wrong dimension");
    }
    if (std::abs(phi0_.norm() - 1.0) > 1e-10) {
      throw ValidationError("DesiredTrajectory: phi0 is not a unit vector");
    }
  }

  CVector ket(double t) const { return prop_.at(t) * phi0_; }
  CMatrix matrix(double t) const { return projector(ket(t)); }

 private:
  UnitaryPropagator prop_;
  CVector phi0_;
};

inline DensityMatrix desired_state(const HermitianMatrix& hp, const CVector& phi0, double t) {
  if (t < 0.0) throw ValidationError("desired_state: negative time");
  return DensityMatrix(DesiredTrajectory(hp, phi0).matrix(t));
}

//===========================================================================
// Adaptive Dormand-Prince 5(4)
//===========================================================================

struct IntegrateOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  double initial_step = 0.0;  // 0 selects automatically
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 20'000'000;
  double renormalize_below = 1e-8;  // trace drift silently renormalized in samples
  double failure_threshold = 1e-6;  // trace drift / negativity that aborts
};

struct IntegratorStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
  std::size_t events_applied = 0;
  double max_trace_drift = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, IntegratorStats stats, double t)
      : Error(what), stats_(stats), time_(t) {}
  const IntegratorStats& stats() const { return stats_; }
  double time() const { return time_; }

 private:
  IntegratorStats stats_;
  double time_;
};

class DormandPrince {
 public:
  DormandPrince(const Dynamics& dyn, IntegrateOptions opts) : dyn_(&dyn), opts_(opts) {}

  void reset(double t, CMatrix y) {
    t_ = t;
    y_ = std::move(y);
    fsal_valid_ = false;
  }

  double time() const { return t_; }
  const CMatrix& state() const { return y_; }
  const IntegratorStats& stats() const { return stats_; }
  IntegratorStats& stats() { return stats_; }

  void advance_to(double target) {
    if (target < t_) throw ValidationError("DormandPrince: cannot integrate backwards");
    if (target == t_) return;
    if (!fsal_valid_) {
      k_[0].resize(y_.rows(), y_.cols());
      eval(t_, y_, k_[0]);
      fsal_valid_ = true;
      if (h_ <= 0.0) h_ = initial_step(target - t_);
    }
    while (t_ < target) {
      if (stats_.steps + stats_.rejected >= opts_.max_steps) {
        throw IntegrationError("DormandPrince: step budget exhausted", stats_, t_);
      }
      const double remaining = target - t_;
      double h = std::min({h_, opts_.max_step, remaining});
      const bool lands = h >= remaining * (1.0 - 1e-12);
      if (lands) h = remaining;
      const double err = attempt(h);
      if (!std::isfinite(err)) {
        throw IntegrationError("DormandPrince: non-finite state", stats_, t_);
      }
      const double factor = err == 0.0 ? 5.0
                                       : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      if (err <= 1.0) {
        ++stats_.steps;
        t_ = lands ? target : t_ + h;
        std::swap(y_, y_new_);
        std::swap(k_[0], k_[6]);
        // A step shortened to land on `target` says nothing about the
        // natural step length, so only grow from it.
        h_ = lands && h < h_ ? std::max(h_, h * factor) : h * factor;
      } else {
        ++stats_.rejected;
        h_ = h * std::min(1.0, factor);
        if (h_ < 1e-14 * std::max(1.0, std::abs(t_))) {
          throw IntegrationError("DormandPrince: step size underflow", stats_, t_);
        }
      }
    }
  }

 private:
  void eval(double t, const CMatrix& y, CMatrix& out) {
    dyn_->apply(t, y, out);
    ++stats_.evaluations;
  }

  double initial_step(double span) {
    if (opts_.initial_step > 0.0) return opts_.initial_step;
    const double fnorm = max_abs(k_[0]);
    const double ynorm = std::max(max_abs(y_), opts_.abs_tol);
    double h = fnorm > 0.0 ? 0.01 * ynorm / fnorm : span;
    h = std::min(h, span);
    return std::max(h, 1e-10 * span);
  }

  double attempt(double h) {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    const CMatrix& y = y_;
    auto& k = k_;
    for (int i = 1; i < 7; ++i) k[i].resize(y.rows(), y.cols());
    tmp_ = y + h * a21 * k[0];
    eval(t_ + c2 * h, tmp_, k[1]);
    tmp_ = y + h * (a31 * k[0] + a32 * k[1]);
    eval(t_ + c3 * h, tmp_, k[2]);
    tmp_ = y + h * (a41 * k[0] + a42 * k[1] + a43 * k[2]);
    eval(t_ + c4 * h, tmp_, k[3]);
    tmp_ = y + h * (a51 * k[0] + a52 * k[1] + a53 * k[2] + a54 * k[3]);
    eval(t_ + c5 * h, tmp_, k[4]);
    tmp_ = y + h * (a61 * k[0] + a62 * k[1] + a63 * k[2] + a64 * k[3] + a65 * k[4]);
    eval(t_ + h, tmp_, k[5]);
    y_new_ = y + h * (b1 * k[0] + b3 * k[2] + b4 * k[3] + b5 * k[4] + b6 * k[5]);
    eval(t_ + h, y_new_, k[6]);

    double acc = 0.0;
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const cplx err = h * (e1 * k[0](i, j) + e3 * k[2](i, j) + e4 * k[3](i, j) +
                              e5 * k[4](i, j) + e6 * k[5](i, j) + e7 * k[6](i, j));
        const double sc = opts_.abs_tol +
                          opts_.rel_tol * std::max(std::abs(y(i, j)), std::abs(y_new_(i, j)));
        const double r = std::abs(err) / sc;
        acc += r * r;
      }
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
  }

  const Dynamics* dyn_;
  IntegrateOptions opts_;
  IntegratorStats stats_;
  double t_ = 0.0;
  double h_ = 0.0;
  CMatrix y_, y_new_, tmp_;
  CMatrix k_[7];
  bool fsal_valid_ = false;
};

/// Evolves an arbitrary operator (not necessarily a state) from t0 to t1.
inline CMatrix integrate_operator(const Dynamics& dyn, const CMatrix& x0, double t0, double t1,
                                  const IntegrateOptions& opts = {}) {
  DormandPrince solver(dyn, opts);
  solver.reset(t0, x0);
  solver.advance_to(t1);
  return solver.state();
}

//===========================================================================
// Trajectories
//===========================================================================

struct Trajectory {
  Dims dims;
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  std::vector<DensityMatrix> plant_states;
  std::vector<double> errors;       // D(t), filled by attach_errors
  std::vector<double> trace_drift;  // tr(sigma) - 1 before renormalization
  std::vector<double> min_eig;
  IntegratorStats meta;
};

struct TimeSpan {
  double t0 = 0.0;
  double t1 = 0.0;
};

/// Integrates sigma0 over `span`, landing exactly on every output time and
/// every transient event; an event at t_a replaces the state by the channel
/// output, and the sample at t_a is the post-event state.
inline Trajectory integrate(const Dynamics& dyn, const DensityMatrix& sigma0, TimeSpan span,
                            const std::vector<TransientEvent>& events,
                            const std::vector<double>& grid, Dims dims,
                            const IntegrateOptions& opts = {}) {
  if (!(span.t0 < span.t1)) throw ValidationError("integrate: empty time span");
  if (sigma0.dim() != dyn.dim() || dims.total() != dyn.dim()) {
    throw DimensionError("integrate: state, dims and generator disagree");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < span.t0 || grid[i] > span.t1) {
      throw ValidationError("integrate: output time outside the span");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw ValidationError("integrate: output times must be strictly increasing");
    }
  }
  {
    NoiseModel check;
    check.transient_events = events;
    validate_noise(check, dyn.dim());
  }

  std::vector<double> stops(grid.begin(), grid.end());
  for (const auto& e : events)
    if (e.time >= span.t0 && e.time <= span.t1) stops.push_back(e.time);
  stops.push_back(span.t1);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  Trajectory traj;
  traj.dims = dims;
  traj.times.reserve(grid.size());
  DormandPrince solver(dyn, opts);
  solver.reset(span.t0, sigma0.matrix());

  Tolerances sample_tol;
  sample_tol.hermiticity = 1e-8;
  sample_tol.trace = opts.failure_threshold;
  sample_tol.positivity = opts.failure_threshold;

  std::size_t next_event = 0;
  while (next_event < events.size() && events[next_event].time < span.t0) ++next_event;
  std::size_t next_sample = 0;

  for (double t : stops) {
    solver.advance_to(t);
    while (next_event < events.size() && events[next_event].time == t) {
      solver.reset(t, apply_channel(events[next_event].kraus, solver.state()));
      ++solver.stats().events_applied;
      ++next_event;
    }
    if (next_sample < grid.size() && grid[next_sample] == t) {
      ++next_sample;
      CMatrix x = solver.state();
      const cplx tr = x.trace();
      const double drift = tr.real() - 1.0;
      const double neg = min_eigenvalue_hermitian_part(x);
      auto& meta = solver.stats();
      meta.max_trace_drift = std::max(meta.max_trace_drift, std::abs(drift));
      meta.min_eigenvalue = std::min(meta.min_eigenvalue, neg);
      if (std::abs(drift) > opts.failure_threshold || neg < -opts.failure_threshold ||
          std::abs(tr.imag()) > opts.failure_threshold) {
        throw IntegrationError("integrate: trace drift " + std::to_string(drift) +
                                   " / min eigenvalue " + std::to_string(neg) +
                                   " beyond tolerance at t=" + std::to_string(t),
                               meta, t);
      }
      if (std::abs(drift) < opts.renormalize_below) x /= tr.real();
      x = (0.5 * (x + x.adjoint())).eval();
      traj.times.push_back(t);
      traj.trace_drift.push_back(drift);
      traj.min_eig.push_back(neg);
      traj.plant_states.emplace_back(partial_trace(x, dims, Subsystem::Controller), sample_tol);
      traj.states.emplace_back(std::move(x), sample_tol);
    }
  }
  traj.meta = solver.stats();
  return traj;
}

//===========================================================================
// Error signal and plateau
//===========================================================================

struct ErrorSample {
  double t = 0.0;
  double D = 0.0;
};

/// D(t) = 1/2 || tr_C sigma(t) - rho_D(t) ||_1 at each sample.
inline std::vector<ErrorSample> error_signal(const Trajectory& traj, const HermitianMatrix& hp,
                                             const CVector& phi0) {
  if (traj.times.empty()) throw ValidationError("error_signal: empty trajectory");
  const DesiredTrajectory desired(hp, phi0);
  std::vector<ErrorSample> out;
  out.reserve(traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    out.push_back({t, trace_distance(traj.plant_states[i].matrix(), desired.matrix(t))});
  }
  return out;
}

inline void attach_errors(Trajectory& traj, const HermitianMatrix& hp, const CVector& phi0) {
  const auto samples = error_signal(traj, hp, phi0);
  traj.errors.clear();
  for (const auto& s : samples) traj.errors.push_back(s.D);
}

/// max of ||tr_C sigma - rho_D||_1 (= 2 D) over the trailing fraction of the window.
inline double plateau(const Trajectory& traj, double tail_fraction = 0.2) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw ValidationError("plateau: tail fraction must lie in (0, 1]");
  }
  if (traj.errors.empty() || traj.errors.size() != traj.times.size()) {
    throw ValidationError("plateau: trajectory has no error signal");
  }
  const double t_start = traj.times.front();
  const double t_end = traj.times.back();
  const double cut = t_end - tail_fraction * (t_end - t_start);
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    if (traj.times[i] >= cut) worst = std::max(worst, 2.0 * traj.errors[i]);
  }
  return worst;
}

struct PlateauOptions {
  double tail_fraction = 0.2;
  double rel_change = 0.05;
  double abs_change = 1e-9;
  double growth = 2.0;
  int max_extensions = 6;
};

struct PlateauResult {
  double value = 0.0;
  double horizon = 0.0;
  bool converged = false;
  int extensions = 0;
  Trajectory trajectory;
};

/// Extends the horizon geometrically until the tail maximum changes by less
/// than `rel_change` (or `abs_change`) between consecutive horizons.
inline PlateauResult auto_plateau(const std::function<Trajectory(double)>& run,
                                  double initial_horizon, const PlateauOptions& opts = {}) {
  PlateauResult out;
  out.horizon = initial_horizon;
  out.trajectory = run(out.horizon);
  out.value = plateau(out.trajectory, opts.tail_fraction);
  for (int i = 0; i < opts.max_extensions; ++i) {
    const double horizon = out.horizon * opts.growth;
    Trajectory next = run(horizon);
    const double value = plateau(next, opts.tail_fraction);
    const double change = std::abs(value - out.value);
    out.horizon = horizon;
    out.trajectory = std::move(next);
    const double previous = out.value;
    out.value = value;
    out.extensions = i + 1;
    if (change <= opts.abs_change || change <= opts.rel_change * std::max(value, previous)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

//===========================================================================
// Measurement statistics and export
//===========================================================================

inline std::vector<double> outcome_probabilities(const DensityMatrix& state,
                                                 const std::vector<CVector>& basis) {
  if (!is_orthonormal(basis)) {
    throw ValidationError("outcome_probabilities: basis is not orthonormal");
  }
  std::vector<double> out;
  out.reserve(basis.size());
  for (const auto& b : basis) {
    if (static_cast<std::size_t>(b.size()) != state.dim()) {
      throw DimensionError("outcome_probabilities: basis vector has wrong dimension");
    }
    out.push_back((b.adjoint() * state.matrix() * b)(0, 0).real());
  }
  return out;
}

/// Column labels for the plant computational basis: binary for qubit
/// registers (p_00, p_01, ...), decimal otherwise.
inline std::vector<std::string> outcome_labels(std::size_t d) {
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < d) ++bits;
  const bool binary = (std::size_t{1} << bits) == d && bits > 0;
  std::vector<std::string> out;
  for (std::size_t j = 0; j < d; ++j) {
    std::string s = "p_";
    if (binary) {
      for (std::size_t b = bits; b-- > 0;) s += ((j >> b) & 1) ? '1' : '0';
    } else {
      s += std::to_string(j);
    }
    out.push_back(s);
  }
  return out;
}

/// `t,D,trace_drift,min_eig[,p_...]` with 17 significant digits.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                                 bool with_probabilities = true) {
  auto num = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  const auto basis = computational_basis(traj.dims.plant);
  os << "t,D,trace_drift,min_eig";
  if (with_probabilities)
    for (const auto& l : outcome_labels(traj.dims.plant)) os << ',' << l;
  os << '\n';
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double d = i < traj.errors.size() ? traj.errors[i]
                                            : std::numeric_limits<double>::quiet_NaN();
    os << num(traj.times[i]) << ',' << num(d) << ',' << num(traj.trace_drift[i]) << ','
       << num(traj.min_eig[i]);
    if (with_probabilities) {
      for (double p : outcome_probabilities(traj.plant_states[i], basis)) os << ',' << num(p);
    }
    os << '\n';
  }
}

}  // namespace cqfb
