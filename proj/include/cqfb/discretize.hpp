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
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cqfb/liouville.hpp"
#include "cqfb/propagate.hpp"
#include "cqfb/protocol.hpp"
#include "cqfb/qmat.hpp"

namespace cqfb {

enum class CellRule { LeftEndpoint, Midpoint };

inline const char* to_string(CellRule r) {
  return r == CellRule::LeftEndpoint ? "left" : "midpoint";
}

/// Everything a feedback run needs besides the discretization itself.
struct FeedbackScenario {
  FeedbackProtocol protocol;
  HermitianMatrix plant_hamiltonian;
  NoiseModel noise;
  DensityMatrix sigma0;
  TimeSpan span;
};

/// H_I(t) replaced by its value at one sample point per cell; the cells
/// partition the scenario span evenly.
class PiecewiseProtocol {
 public:
  PiecewiseProtocol(FeedbackProtocol base, std::size_t n_cells, CellRule rule)
      : base_(std::move(base)), n_cells_(n_cells), rule_(rule) {
    if (n_cells_ < 1) throw ValidationError("PiecewiseProtocol: n_cells must be at least 1");
  }

  const FeedbackProtocol& base() const { return base_; }
  std::size_t n_cells() const { return n_cells_; }
  CellRule rule() const { return rule_; }

  double cell_width(TimeSpan span) const {
    return (span.t1 - span.t0) / static_cast<double>(n_cells_);
  }

  double sample_time(TimeSpan span, std::size_t cell) const {
    const double h = cell_width(span);
    const double offset = rule_ == CellRule::Midpoint ? 0.5 : 0.0;
    return span.t0 + (static_cast<double>(cell) + offset) * h;
  }

 private:
  FeedbackProtocol base_;
  std::size_t n_cells_;
  CellRule rule_;
};

/// Propagates cell by cell with the exact exponential of the frozen
/// generator. Output times and transient events split cells where needed.
inline Trajectory discretized_trajectory(const PiecewiseProtocol& pp, const FeedbackScenario& sc,
                                         const std::vector<double>& grid,
                                         const IntegrateOptions& opts = {}) {
  const TimeSpan span = sc.span;
  if (!(span.t0 < span.t1)) throw ValidationError("discretized_trajectory: empty time span");
  const Dims dims = pp.base().dims();
  const FrameMap frame(sc.plant_hamiltonian, dims.controller);
  const Dynamics dyn = feedback_dynamics(pp.base(), frame, sc.noise);
  if (sc.sigma0.dim() != dyn.dim()) {
    throw DimensionError("discretized_trajectory: initial state has wrong dimension");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < span.t0 || grid[i] > span.t1 || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw ValidationError("discretized_trajectory: output times must increase within the span");
    }
  }
  const auto& events = sc.noise.transient_events;
  const std::size_t d = dyn.dim();
  const double h = pp.cell_width(span);

  Tolerances sample_tol;
  sample_tol.hermiticity = 1e-8;
  sample_tol.trace = opts.failure_threshold;
  sample_tol.positivity = opts.failure_threshold;

  Trajectory traj;
  traj.dims = dims;
  CVector x = vec(sc.sigma0.matrix());
  double t = span.t0;
  std::size_t next_event = 0;
  while (next_event < events.size() && events[next_event].time < span.t0) ++next_event;
  std::size_t next_sample = 0;

  auto handle_stop = [&](double at) {
    while (next_event < events.size() && events[next_event].time == at) {
      x = vec(apply_channel(events[next_event].kraus, unvec(x, d)));
      ++traj.meta.events_applied;
      ++next_event;
    }
    if (next_sample < grid.size() && grid[next_sample] == at) {
      ++next_sample;
      CMatrix s = unvec(x, d);
      const cplx tr = s.trace();
      const double drift = tr.real() - 1.0;
      const double neg = min_eigenvalue_hermitian_part(s);
      traj.meta.max_trace_drift = std::max(traj.meta.max_trace_drift, std::abs(drift));
      traj.meta.min_eigenvalue = std::min(traj.meta.min_eigenvalue, neg);
      if (std::abs(drift) > opts.failure_threshold || neg < -opts.failure_threshold) {
        throw IntegrationError("discretized_trajectory: state left the density set at t=" +
                                   std::to_string(at),
                               traj.meta, at);
      }
      if (std::abs(drift) < opts.renormalize_below) s /= tr.real();
      s = (0.5 * (s + s.adjoint())).eval();
      traj.times.push_back(at);
      traj.trace_drift.push_back(drift);
      traj.min_eig.push_back(neg);
      traj.plant_states.emplace_back(partial_trace(s, dims, Subsystem::Controller), sample_tol);
      traj.states.emplace_back(std::move(s), sample_tol);
    }
  };

  handle_stop(t);
  for (std::size_t cell = 0; cell < pp.n_cells(); ++cell) {
    const double cell_end = cell + 1 == pp.n_cells() ? span.t1 : span.t0 + (cell + 1) * h;
    const CMatrix m = dyn.frozen(pp.sample_time(span, cell)).vectorized().matrix;
    std::vector<double> stops;
    for (std::size_t i = next_sample; i < grid.size() && grid[i] <= cell_end; ++i)
      if (grid[i] > t) stops.push_back(grid[i]);
    for (std::size_t i = next_event; i < events.size() && events[i].time <= cell_end; ++i)
      if (events[i].time > t) stops.push_back(events[i].time);
    stops.push_back(cell_end);
    std::sort(stops.begin(), stops.end());
    stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
    for (double stop : stops) {
      x = expm(m * (stop - t)) * x;
      ++traj.meta.steps;
      t = stop;
      handle_stop(t);
    }
  }
  return traj;
}

/// Final state of the piecewise run.
inline CMatrix discretized_terminal_state(const PiecewiseProtocol& pp, const FeedbackScenario& sc,
                                          const IntegrateOptions& opts = {}) {
  return discretized_trajectory(pp, sc, {sc.span.t1}, opts).states.back().matrix();
}

/// Final state of the continuous run, integrated at `opts` tolerances.
inline CMatrix continuous_terminal_state(const FeedbackScenario& sc,
                                         const IntegrateOptions& opts) {
  const FrameMap frame(sc.plant_hamiltonian, sc.protocol.dims().controller);
  const Dynamics dyn = feedback_dynamics(sc.protocol, frame, sc.noise);
  return integrate(dyn, sc.sigma0, sc.span, sc.noise.transient_events, {sc.span.t1},
                   sc.protocol.dims(), opts)
      .states.back()
      .matrix();
}

struct ConvergenceRow {
  std::size_t n = 0;
  double terminal_error = 0.0;
  double observed_order = std::numeric_limits<double>::quiet_NaN();  // NaN on the first row
};

struct ConvergenceOptions {
  IntegrateOptions reference{1e-12, 1e-14};
};

/// terminal_error(n) = || sigma_exact(T) - sigma_n(T) ||_1 against a tightly
/// integrated continuous run; the order between rows is
/// log(e_i / e_{i+1}) / log(n_{i+1} / n_i).
inline std::vector<ConvergenceRow> convergence_table(const FeedbackScenario& sc,
                                                     const std::vector<std::size_t>& cells,
                                                     CellRule rule,
                                                     const ConvergenceOptions& opts = {}) {
  if (cells.size() < 2) throw ValidationError("convergence_table: need at least two cell counts");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] < 1 || (i > 0 && cells[i] <= cells[i - 1])) {
      throw ValidationError("convergence_table: cell counts must be positive and increasing");
    }
  }
  const CMatrix exact = continuous_terminal_state(sc, opts.reference);
  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const PiecewiseProtocol pp(sc.protocol, cells[i], rule);
    ConvergenceRow row;
    row.n = cells[i];
    row.terminal_error = trace_norm(exact - discretized_terminal_state(pp, sc));
    if (i > 0) {
      const auto& prev = rows.back();
      row.observed_order = std::log(prev.terminal_error / row.terminal_error) /
                           std::log(static_cast<double>(row.n) / static_cast<double>(prev.n));
    }
    rows.push_back(row);
  }
  return rows;
}

/// `n,terminal_error,observed_order`; the first row leaves the order empty.
inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRow>& rows) {
  auto num = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  os << "n,terminal_error,observed_order\n";
  for (const auto& r : rows) {
    os << r.n << ',' << num(r.terminal_error) << ',';
    if (!std::isnan(r.observed_order)) os << num(r.observed_order);
    os << '\n';
  }
}

}  // namespace cqfb
