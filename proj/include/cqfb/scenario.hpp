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

// Scenario files: JSON documents describing plant, controller, protocol,
// noise, initial state, run settings and the pass conditions a run must
// meet. Matrices are nested specs (presets, [re, im] literals, kron, sums).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cqfb/discretize.hpp"
#include "cqfb/liouville.hpp"
#include "cqfb/propagate.hpp"
#include "cqfb/protocol.hpp"
#include "cqfb/qmat.hpp"
#include "cqfb/spectra.hpp"

namespace cqfb {

using json = nlohmann::json;

/// Validation failure tied to a field path such as `noise.persistent[1]`.
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string field, const std::string& message)
      : ValidationError("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

//===========================================================================
// Matrix specs
//===========================================================================

namespace config_detail {

inline void require_keys(const json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
  }
}

inline double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

inline cplx parse_scalar(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    return {j[0].get<double>(), j[1].get<double>()};
  }
  throw ConfigError(path, "expected a number or an [re, im] pair");
}

inline CMatrix pauli_letter(char c) {
  switch (c) {
    case 'i': return identity(2);
    case 'x': return pauli_x();
    case 'y': return pauli_y();
    case 'z': return pauli_z();
    default: return {};
  }
}

inline CMatrix preset(const std::string& name, std::optional<std::size_t> dim,
                      const std::string& path) {
  if (name == "identity" || name == "zero") {
    if (!dim) throw ConfigError(path + ".dim", "preset '" + name + "' needs a dimension");
    return name == "identity" ? identity(*dim) : zeros(*dim, *dim);
  }
  if (name == "lowering") return ket_bra(0, 1, 2);
  if (name == "raising") return ket_bra(1, 0, 2);
  if (name.rfind("pauli_", 0) == 0 && name.size() > 6) {
    CMatrix out = CMatrix::Identity(1, 1);
    for (char c : name.substr(6)) {
      const CMatrix p = pauli_letter(c);
      if (p.size() == 0) throw ConfigError(path, "unknown preset '" + name + "'");
      out = kron(out, p);
    }
    return out;
  }
  throw ConfigError(path, "unknown preset '" + name + "'");
}

}  // namespace config_detail

/// Resolves a matrix spec. Exactly one of `preset`, `entries`, `diag`,
/// `populations`, `kron`, `sum`, `ket_bra` must be present; `scale`
/// multiplies the result and `embed` (plant | controller) lifts it onto the
/// composite. `entries` and `diag` are in storage order; `populations` lists
/// weights of the labelled kets |0>, |1>, ... (storage order reversed).
inline CMatrix parse_matrix(const json& j, const std::string& path, Dims dims) {
  using namespace config_detail;
  require_keys(j, path, {"preset", "entries", "diag", "populations", "kron", "sum", "ket_bra",
                         "dim", "scale", "embed"});
  int forms = 0;
  for (const char* k : {"preset", "entries", "diag", "populations", "kron", "sum", "ket_bra"})
    forms += j.contains(k) ? 1 : 0;
  if (forms != 1) {
    throw ConfigError(path,
                      "expected exactly one of preset/entries/diag/populations/kron/sum/ket_bra");
  }
  std::optional<std::size_t> dim;
  if (j.contains("dim")) dim = get_count(j["dim"], path + ".dim");

  CMatrix m;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError(path + ".preset", "expected a string");
    m = preset(j["preset"].get<std::string>(), dim, path + ".preset");
  } else if (j.contains("entries")) {
    const json& rows = j["entries"];
    const std::string p = path + ".entries";
    if (!rows.is_array() || rows.empty()) throw ConfigError(p, "expected a non-empty array of rows");
    const std::size_t cols = rows[0].is_array() ? rows[0].size() : 0;
    if (cols == 0) throw ConfigError(p, "rows must be non-empty arrays");
    m.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string pr = p + "[" + std::to_string(r) + "]";
      if (!rows[r].is_array() || rows[r].size() != cols) throw ConfigError(pr, "ragged row");
      for (std::size_t c = 0; c < cols; ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            parse_scalar(rows[r][c], pr + "[" + std::to_string(c) + "]");
      }
    }
  } else if (j.contains("diag")) {
    const json& d = j["diag"];
    if (!d.is_array() || d.empty()) throw ConfigError(path + ".diag", "expected a non-empty array");
    m = zeros(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
          parse_scalar(d[i], path + ".diag[" + std::to_string(i) + "]");
    }
  } else if (j.contains("populations")) {
    const json& w = j["populations"];
    const std::string p = path + ".populations";
    if (!w.is_array() || w.empty()) throw ConfigError(p, "expected a non-empty array");
    m = zeros(w.size(), w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      m += get_number(w[i], p + "[" + std::to_string(i) + "]") * projector(basis_ket(i, w.size()));
    }
  } else if (j.contains("kron")) {
    const json& ks = j["kron"];
    if (!ks.is_array() || ks.empty()) throw ConfigError(path + ".kron", "expected a non-empty array");
    m = CMatrix::Identity(1, 1);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      m = kron(m, parse_matrix(ks[i], path + ".kron[" + std::to_string(i) + "]", dims));
    }
  } else if (j.contains("sum")) {
    const json& ks = j["sum"];
    if (!ks.is_array() || ks.empty()) throw ConfigError(path + ".sum", "expected a non-empty array");
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const std::string pi = path + ".sum[" + std::to_string(i) + "]";
      CMatrix term = parse_matrix(ks[i], pi, dims);
      if (i == 0) {
        m = std::move(term);
      } else if (term.rows() != m.rows() || term.cols() != m.cols()) {
        throw ConfigError(pi, "dimension mismatch in sum");
      } else {
        m += term;
      }
    }
  } else {
    const json& kb = j["ket_bra"];
    const std::string p = path + ".ket_bra";
    if (!kb.is_array() || kb.size() != 2) throw ConfigError(p, "expected [ket_label, bra_label]");
    const std::size_t d = dim.value_or(2);
    const std::size_t a = get_count(kb[0], p + "[0]");
    const std::size_t b = get_count(kb[1], p + "[1]");
    if (a >= d || b >= d) throw ConfigError(p, "label out of range for dimension " + std::to_string(d));
    m = ket_bra(a, b, d);
  }
  if (j.contains("scale")) m *= parse_scalar(j["scale"], path + ".scale");
  if (j.contains("embed")) {
    const std::string where = j["embed"].is_string() ? j["embed"].get<std::string>() : "";
    if (where == "plant") {
      if (static_cast<std::size_t>(m.rows()) != dims.plant || m.rows() != m.cols()) {
        throw ConfigError(path, "plant operator must be " + std::to_string(dims.plant) + "x" +
                                    std::to_string(dims.plant));
      }
      m = embed_plant(m, dims.controller);
    } else if (where == "controller") {
      if (static_cast<std::size_t>(m.rows()) != dims.controller || m.rows() != m.cols()) {
        throw ConfigError(path, "controller operator must be " + std::to_string(dims.controller) +
                                    "x" + std::to_string(dims.controller));
      }
      m = embed_controller(m, dims.plant);
    } else {
      throw ConfigError(path + ".embed", "expected 'plant' or 'controller'");
    }
  }
  return m;
}

inline CMatrix parse_square(const json& j, const std::string& path, Dims dims, std::size_t d) {
  CMatrix m = parse_matrix(j, path, dims);
  if (static_cast<std::size_t>(m.rows()) != d || m.rows() != m.cols()) {
    throw ConfigError(path, "expected a " + std::to_string(d) + "x" + std::to_string(d) +
                                " matrix, got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  }
  return m;
}

inline HermitianMatrix parse_hermitian(const json& j, const std::string& path, Dims dims,
                                       std::size_t d) {
  CMatrix m = parse_square(j, path, dims, d);
  if (!is_hermitian(m)) {
    throw ConfigError(path, "matrix is not Hermitian (defect " +
                                std::to_string(hermiticity_defect(m)) + ")");
  }
  return HermitianMatrix(m);
}

/// `{"label": j}` for the labelled basis ket |j>, or `{"entries": [...]}`.
inline CVector parse_ket(const json& j, const std::string& path, std::size_t d) {
  using namespace config_detail;
  require_keys(j, path, {"label", "entries"});
  CVector v;
  if (j.contains("label") == j.contains("entries")) {
    throw ConfigError(path, "expected exactly one of label/entries");
  }
  if (j.contains("label")) {
    const std::size_t label = get_count(j["label"], path + ".label");
    if (label >= d) throw ConfigError(path + ".label", "label out of range");
    return basis_ket(label, d);
  }
  const json& e = j["entries"];
  if (!e.is_array() || e.size() != d) {
    throw ConfigError(path + ".entries", "expected " + std::to_string(d) + " entries");
  }
  v.resize(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    v(static_cast<Eigen::Index>(i)) = parse_scalar(e[i], path + ".entries[" + std::to_string(i) + "]");
  }
  if (std::abs(v.norm() - 1.0) > 1e-10) throw ConfigError(path, "vector is not normalized");
  return v;
}

//===========================================================================
// ScenarioConfig
//===========================================================================

struct EventConfig {
  double time = 0.0;
  std::string channel = "decohere";  // decohere | kraus
  std::vector<json> kraus;
  bool operator==(const EventConfig&) const = default;
};

struct UncertaintyConfig {
  double bound = 0.0;
  double omega = 1.0;
  json direction;  // Hermitian composite operator, rescaled to unit norm
  bool operator==(const UncertaintyConfig&) const = default;
};

struct RunConfig {
  std::optional<double> t_end;  // absent: auto-plateau horizon
  std::size_t grid_points = 1001;
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  std::uint64_t seed = 0;
  double tail_fraction = 0.2;
  std::vector<double> gammas;  // default sweep list
  bool operator==(const RunConfig&) const = default;
};

struct DiscretizeConfig {
  double t_end = 2.0;
  std::vector<std::size_t> cells;
  std::map<std::string, std::array<double, 2>> order_brackets;  // rule -> [lo, hi]
  bool operator==(const DiscretizeConfig&) const = default;
};

struct OutputConfig {
  std::string csv;
  std::string report;
  bool gnuplot = false;
  bool operator==(const OutputConfig&) const = default;
};

struct Expectations {
  std::optional<std::array<double, 2>> max_error_before;  // [t, value]
  std::optional<double> jump_at;
  std::optional<double> final_error_below;
  bool plateau_within_bound = false;
  bool plateaus_decreasing = false;
  bool operator==(const Expectations&) const = default;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::size_t plant_dim = 0;
  std::size_t controller_dim = 2;
  json plant_hamiltonian;
  json phi0;
  std::string design = "builtin";  // builtin | custom
  double gamma = 1.0;
  std::optional<std::vector<json>> plant_basis;
  std::optional<json> h_i0;
  std::vector<json> controller_couplings;
  std::optional<json> controller_state;
  std::vector<json> persistent;
  std::vector<EventConfig> transient;
  std::optional<UncertaintyConfig> uncertainty;
  json initial_state = "steady_candidate";
  RunConfig run;
  std::optional<DiscretizeConfig> discretize;
  OutputConfig outputs;
  Expectations expect;
  bool operator==(const ScenarioConfig&) const = default;

  Dims dims() const { return {plant_dim, controller_dim}; }
};

namespace config_detail {

inline std::vector<json> get_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  return std::vector<json>(j.begin(), j.end());
}

inline std::array<double, 2> get_pair(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(path, "expected a two-element array");
  return {get_number(j[0], path + "[0]"), get_number(j[1], path + "[1]")};
}

}  // namespace config_detail

/// Structural parse; matrix specs are kept verbatim and resolved (and
/// validated) by `build_scenario`.
inline ScenarioConfig parse_config(const json& j) {
  using namespace config_detail;
  require_keys(j, "", {"name", "plant", "controller", "protocol", "noise", "initial_state", "run",
                       "discretize", "outputs", "expect"});
  ScenarioConfig c;
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw ConfigError("name", "expected a string");
    c.name = j["name"].get<std::string>();
  }
  if (!j.contains("plant")) throw ConfigError("plant", "missing");
  const json& plant = j["plant"];
  require_keys(plant, "plant", {"dim", "hamiltonian", "phi0"});
  if (!plant.contains("dim")) throw ConfigError("plant.dim", "missing");
  c.plant_dim = get_count(plant["dim"], "plant.dim");
  if (c.plant_dim < 2) throw ConfigError("plant.dim", "must be at least 2");
  if (!plant.contains("hamiltonian")) throw ConfigError("plant.hamiltonian", "missing");
  c.plant_hamiltonian = plant["hamiltonian"];
  c.phi0 = plant.value("phi0", json{{"label", 0}});

  if (j.contains("controller")) {
    require_keys(j["controller"], "controller", {"dim"});
    if (j["controller"].contains("dim")) {
      c.controller_dim = get_count(j["controller"]["dim"], "controller.dim");
    }
  }
  if (c.controller_dim < 1) throw ConfigError("controller.dim", "must be positive");

  if (j.contains("protocol")) {
    const json& p = j["protocol"];
    require_keys(p, "protocol", {"design", "gamma", "plant_basis", "h_i0", "couplings",
                                 "controller_state"});
    if (p.contains("design")) {
      if (!p["design"].is_string()) throw ConfigError("protocol.design", "expected a string");
      c.design = p["design"].get<std::string>();
      if (c.design != "builtin" && c.design != "custom") {
        throw ConfigError("protocol.design", "expected 'builtin' or 'custom'");
      }
    }
    if (p.contains("gamma")) c.gamma = get_number(p["gamma"], "protocol.gamma");
    if (!(c.gamma >= 0.0)) throw ConfigError("protocol.gamma", "must be non-negative");
    if (p.contains("plant_basis")) c.plant_basis = get_list(p["plant_basis"], "protocol.plant_basis");
    if (p.contains("h_i0")) c.h_i0 = p["h_i0"];
    if (p.contains("couplings")) c.controller_couplings = get_list(p["couplings"], "protocol.couplings");
    if (p.contains("controller_state")) c.controller_state = p["controller_state"];
    if (c.design == "custom" && !c.h_i0) {
      throw ConfigError("protocol.h_i0", "required for a custom design");
    }
  }

  if (j.contains("noise")) {
    const json& n = j["noise"];
    require_keys(n, "noise", {"persistent", "transient", "uncertainty"});
    if (n.contains("persistent")) c.persistent = get_list(n["persistent"], "noise.persistent");
    if (n.contains("transient")) {
      const auto events = get_list(n["transient"], "noise.transient");
      for (std::size_t i = 0; i < events.size(); ++i) {
        const std::string p = "noise.transient[" + std::to_string(i) + "]";
        require_keys(events[i], p, {"time", "channel", "kraus"});
        EventConfig e;
        if (!events[i].contains("time")) throw ConfigError(p + ".time", "missing");
        e.time = get_number(events[i]["time"], p + ".time");
        if (events[i].contains("channel")) {
          e.channel = events[i]["channel"].is_string() ? events[i]["channel"].get<std::string>() : "";
        } else if (events[i].contains("kraus")) {
          e.channel = "kraus";
        }
        if (e.channel != "decohere" && e.channel != "kraus") {
          throw ConfigError(p + ".channel", "expected 'decohere' or 'kraus'");
        }
        if (events[i].contains("kraus")) e.kraus = get_list(events[i]["kraus"], p + ".kraus");
        if (e.channel == "kraus" && e.kraus.empty()) {
          throw ConfigError(p + ".kraus", "a Kraus channel needs operators");
        }
        c.transient.push_back(std::move(e));
      }
    }
    if (n.contains("uncertainty")) {
      const json& u = n["uncertainty"];
      require_keys(u, "noise.uncertainty", {"bound", "omega", "direction"});
      UncertaintyConfig uc;
      if (!u.contains("bound")) throw ConfigError("noise.uncertainty.bound", "missing");
      uc.bound = get_number(u["bound"], "noise.uncertainty.bound");
      if (!(uc.bound >= 0.0)) throw ConfigError("noise.uncertainty.bound", "must be non-negative");
      if (u.contains("omega")) uc.omega = get_number(u["omega"], "noise.uncertainty.omega");
      if (!u.contains("direction")) throw ConfigError("noise.uncertainty.direction", "missing");
      uc.direction = u["direction"];
      c.uncertainty = std::move(uc);
    }
  }

  if (j.contains("initial_state")) c.initial_state = j["initial_state"];

  if (j.contains("run")) {
    const json& r = j["run"];
    require_keys(r, "run", {"t_end", "grid_points", "rel_tol", "abs_tol", "seed", "tail_fraction",
                            "gammas"});
    if (r.contains("t_end")) {
      if (r["t_end"].is_string() && r["t_end"] == "auto") {
        c.run.t_end.reset();
      } else {
        c.run.t_end = get_number(r["t_end"], "run.t_end");
        if (!(*c.run.t_end > 0.0)) throw ConfigError("run.t_end", "must be positive");
      }
    }
    if (r.contains("grid_points")) c.run.grid_points = get_count(r["grid_points"], "run.grid_points");
    if (c.run.grid_points < 2) throw ConfigError("run.grid_points", "need at least 2 points");
    if (r.contains("rel_tol")) c.run.rel_tol = get_number(r["rel_tol"], "run.rel_tol");
    if (r.contains("abs_tol")) c.run.abs_tol = get_number(r["abs_tol"], "run.abs_tol");
    if (!(c.run.rel_tol > 0.0)) throw ConfigError("run.rel_tol", "must be positive");
    if (!(c.run.abs_tol > 0.0)) throw ConfigError("run.abs_tol", "must be positive");
    if (r.contains("seed")) c.run.seed = get_count(r["seed"], "run.seed");
    if (r.contains("tail_fraction")) {
      c.run.tail_fraction = get_number(r["tail_fraction"], "run.tail_fraction");
      if (!(c.run.tail_fraction > 0.0 && c.run.tail_fraction <= 1.0)) {
        throw ConfigError("run.tail_fraction", "must lie in (0, 1]");
      }
    }
    if (r.contains("gammas")) {
      const auto gs = get_list(r["gammas"], "run.gammas");
      for (std::size_t i = 0; i < gs.size(); ++i) {
        c.run.gammas.push_back(get_number(gs[i], "run.gammas[" + std::to_string(i) + "]"));
      }
    }
  }

  if (j.contains("discretize")) {
    const json& d = j["discretize"];
    require_keys(d, "discretize", {"t_end", "cells", "order_brackets"});
    DiscretizeConfig dc;
    if (d.contains("t_end")) dc.t_end = get_number(d["t_end"], "discretize.t_end");
    if (d.contains("cells")) {
      const auto cs = get_list(d["cells"], "discretize.cells");
      for (std::size_t i = 0; i < cs.size(); ++i) {
        dc.cells.push_back(get_count(cs[i], "discretize.cells[" + std::to_string(i) + "]"));
      }
    }
    if (d.contains("order_brackets")) {
      const json& ob = d["order_brackets"];
      require_keys(ob, "discretize.order_brackets", {"left", "midpoint"});
      for (auto it = ob.begin(); it != ob.end(); ++it) {
        dc.order_brackets[it.key()] = get_pair(it.value(), "discretize.order_brackets." + it.key());
      }
    }
    c.discretize = std::move(dc);
  }

  c.outputs.csv = c.name + ".csv";
  c.outputs.report = c.name + ".report";
  if (j.contains("outputs")) {
    const json& o = j["outputs"];
    require_keys(o, "outputs", {"csv", "report", "gnuplot"});
    if (o.contains("csv")) c.outputs.csv = o["csv"].get<std::string>();
    if (o.contains("report")) c.outputs.report = o["report"].get<std::string>();
    if (o.contains("gnuplot")) c.outputs.gnuplot = o["gnuplot"].get<bool>();
  }

  if (j.contains("expect")) {
    const json& e = j["expect"];
    require_keys(e, "expect", {"max_D_before", "jump_at", "final_D_below", "plateau_within_bound",
                               "plateaus_decreasing"});
    if (e.contains("max_D_before")) c.expect.max_error_before = get_pair(e["max_D_before"], "expect.max_D_before");
    if (e.contains("jump_at")) c.expect.jump_at = get_number(e["jump_at"], "expect.jump_at");
    if (e.contains("final_D_below")) c.expect.final_error_below = get_number(e["final_D_below"], "expect.final_D_below");
    if (e.contains("plateau_within_bound")) c.expect.plateau_within_bound = e["plateau_within_bound"].get<bool>();
    if (e.contains("plateaus_decreasing")) c.expect.plateaus_decreasing = e["plateaus_decreasing"].get<bool>();
  }
  return c;
}

inline ScenarioConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", std::string("malformed JSON: ") + e.what());
  }
  try {
    return parse_config(j);
  } catch (const json::type_error& e) {
    throw ConfigError("<document>", std::string("wrong value type: ") + e.what());
  }
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline json serialize_config(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  j["plant"] = {{"dim", c.plant_dim}, {"hamiltonian", c.plant_hamiltonian}, {"phi0", c.phi0}};
  j["controller"] = {{"dim", c.controller_dim}};
  json p = {{"design", c.design}, {"gamma", c.gamma}};
  if (c.plant_basis) p["plant_basis"] = *c.plant_basis;
  if (c.h_i0) p["h_i0"] = *c.h_i0;
  if (!c.controller_couplings.empty()) p["couplings"] = c.controller_couplings;
  if (c.controller_state) p["controller_state"] = *c.controller_state;
  j["protocol"] = p;
  json n = json::object();
  if (!c.persistent.empty()) n["persistent"] = c.persistent;
  if (!c.transient.empty()) {
    json events = json::array();
    for (const auto& e : c.transient) {
      json ej = {{"time", e.time}, {"channel", e.channel}};
      if (!e.kraus.empty()) ej["kraus"] = e.kraus;
      events.push_back(ej);
    }
    n["transient"] = events;
  }
  if (c.uncertainty) {
    n["uncertainty"] = {{"bound", c.uncertainty->bound},
                        {"omega", c.uncertainty->omega},
                        {"direction", c.uncertainty->direction}};
  }
  j["noise"] = n;
  j["initial_state"] = c.initial_state;
  json r = {{"grid_points", c.run.grid_points}, {"rel_tol", c.run.rel_tol},
            {"abs_tol", c.run.abs_tol},         {"seed", c.run.seed},
            {"tail_fraction", c.run.tail_fraction}};
  if (c.run.t_end) {
    r["t_end"] = *c.run.t_end;
  } else {
    r["t_end"] = "auto";
  }
  if (!c.run.gammas.empty()) r["gammas"] = c.run.gammas;
  j["run"] = r;
  if (c.discretize) {
    json d = {{"t_end", c.discretize->t_end}, {"cells", c.discretize->cells}};
    json ob = json::object();
    for (const auto& [k, v] : c.discretize->order_brackets) ob[k] = v;
    d["order_brackets"] = ob;
    j["discretize"] = d;
  }
  j["outputs"] = {{"csv", c.outputs.csv}, {"report", c.outputs.report},
                  {"gnuplot", c.outputs.gnuplot}};
  json e = json::object();
  if (c.expect.max_error_before) e["max_D_before"] = *c.expect.max_error_before;
  if (c.expect.jump_at) e["jump_at"] = *c.expect.jump_at;
  if (c.expect.final_error_below) e["final_D_below"] = *c.expect.final_error_below;
  if (c.expect.plateau_within_bound) e["plateau_within_bound"] = true;
  if (c.expect.plateaus_decreasing) e["plateaus_decreasing"] = true;
  j["expect"] = e;
  return j;
}

//===========================================================================
// Building
//===========================================================================

struct BuiltScenario {
  Dims dims;
  HermitianMatrix plant_hamiltonian;
  CVector phi0;
  FeedbackProtocol design;  // at unit gain; see protocol_at
  LindbladGenerator noise_generator;
  NoiseModel noise;
  DensityMatrix sigma0;

  FeedbackProtocol protocol_at(double gamma) const { return design.with_gain(gamma); }
};

inline DensityMatrix parse_state(const json& j, const std::string& path, Dims dims,
                                 const FeedbackProtocol& design) {
  using namespace config_detail;
  const std::size_t d = dims.total();
  CMatrix m;
  if (j.is_string()) {
    if (j.get<std::string>() != "steady_candidate") {
      throw ConfigError(path, "unknown state '" + j.get<std::string>() + "'");
    }
    return steady_candidate(design);
  }
  require_keys(j, path, {"product", "matrix", "random"});
  if (j.contains("product")) {
    const json& f = j["product"];
    if (!f.is_array() || f.size() != 2) throw ConfigError(path + ".product", "expected [plant, controller]");
    m = kron(parse_square(f[0], path + ".product[0]", dims, dims.plant),
             parse_square(f[1], path + ".product[1]", dims, dims.controller));
  } else if (j.contains("matrix")) {
    m = parse_square(j["matrix"], path + ".matrix", dims, d);
  } else if (j.contains("random")) {
    std::mt19937_64 rng(get_count(j["random"], path + ".random"));
    return random_density(d, rng);
  } else {
    throw ConfigError(path, "expected product/matrix/random or \"steady_candidate\"");
  }
  try {
    return DensityMatrix(m);
  } catch (const ValidationError& e) {
    throw ConfigError(path, e.what());
  }
}

inline BuiltScenario build_scenario(const ScenarioConfig& c) {
  const Dims dims = c.dims();
  const std::size_t d = dims.total();
  BuiltScenario b{dims, parse_hermitian(c.plant_hamiltonian, "plant.hamiltonian", dims, dims.plant),
                  parse_ket(c.phi0, "plant.phi0", dims.plant), {}, LindbladGenerator(d), {},
                  maximally_mixed(d)};

  std::optional<std::vector<CVector>> basis;
  if (c.plant_basis) {
    if (c.plant_basis->size() != dims.plant) {
      throw ConfigError("protocol.plant_basis", "expected " + std::to_string(dims.plant) + " vectors");
    }
    basis.emplace();
    for (std::size_t i = 0; i < dims.plant; ++i) {
      basis->push_back(parse_ket((*c.plant_basis)[i],
                                 "protocol.plant_basis[" + std::to_string(i) + "]", dims.plant));
    }
  }
  try {
    if (c.design == "builtin") {
      if (dims.controller != 2) {
        throw ConfigError("controller.dim", "the built-in design needs a two-level controller");
      }
      b.design = build_design(b.phi0, basis, 1.0);
    } else {
      const HermitianMatrix h = parse_hermitian(*c.h_i0, "protocol.h_i0", dims, d);
      std::vector<CMatrix> ls;
      for (std::size_t i = 0; i < c.controller_couplings.size(); ++i) {
        ls.push_back(parse_square(c.controller_couplings[i],
                                  "protocol.couplings[" + std::to_string(i) + "]", dims,
                                  dims.controller));
      }
      std::vector<CVector> pb = basis ? *basis : complete_basis(b.phi0);
      std::optional<CMatrix> cs;
      if (c.controller_state) {
        cs = parse_square(*c.controller_state, "protocol.controller_state", dims, dims.controller);
      }
      b.design = FeedbackProtocol(dims, h, std::move(ls), 1.0, std::move(pb),
                                  computational_basis(dims.controller), cs);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("protocol", e.what());
  }

  std::vector<CMatrix> ls;
  for (std::size_t i = 0; i < c.persistent.size(); ++i) {
    ls.push_back(parse_square(c.persistent[i], "noise.persistent[" + std::to_string(i) + "]", dims, d));
  }
  if (!ls.empty()) {
    b.noise_generator = LindbladGenerator(std::nullopt, ls);
    b.noise.persistent = b.noise_generator;
  }
  const std::vector<std::size_t> reg{dims.plant, dims.controller};
  for (std::size_t i = 0; i < c.transient.size(); ++i) {
    const auto& e = c.transient[i];
    TransientEvent ev{e.time, {}};
    if (e.channel == "decohere") {
      ev.kraus = decoherence_channel(reg);
    } else {
      for (std::size_t k = 0; k < e.kraus.size(); ++k) {
        ev.kraus.push_back(parse_square(e.kraus[k], "noise.transient[" + std::to_string(i) +
                                                         "].kraus[" + std::to_string(k) + "]",
                                        dims, d));
      }
    }
    b.noise.transient_events.push_back(std::move(ev));
  }
  if (c.uncertainty) {
    const HermitianMatrix a = parse_hermitian(c.uncertainty->direction, "noise.uncertainty.direction", dims, d);
    const double n = operator_norm(a.matrix());
    if (n == 0.0) throw ConfigError("noise.uncertainty.direction", "zero operator");
    const CMatrix dir = a.matrix() / n;
    const double scale = 0.5 * c.uncertainty->bound;
    const double omega = c.uncertainty->omega;
    b.noise.uncertainty = HamiltonianPerturbation{
        [dir, scale, omega](double t) -> CMatrix { return (scale * std::sin(omega * t)) * dir; },
        c.uncertainty->bound};
  }
  try {
    validate_noise(b.noise, d);
  } catch (const Error& e) {
    throw ConfigError("noise", e.what());
  }
  b.sigma0 = parse_state(c.initial_state, "initial_state", dims, b.design);
  return b;
}

//===========================================================================
// Running
//===========================================================================

struct RunOverrides {
  std::optional<double> rel_tol;
  std::optional<double> abs_tol;
  std::optional<std::uint64_t> seed;
};

struct RunResult {
  double gamma = 0.0;
  Trajectory trajectory;
  std::optional<SpectralCertificate> certificate;
  std::string certificate_error;
  double plateau = 0.0;
  double bound = std::numeric_limits<double>::quiet_NaN();
  double horizon = 0.0;
  bool plateau_converged = false;
  std::vector<std::string> failed_checks;
  bool pass = false;
};

inline IntegrateOptions integrate_options(const ScenarioConfig& c, const RunOverrides& o) {
  IntegrateOptions opts;
  opts.rel_tol = o.rel_tol.value_or(c.run.rel_tol);
  opts.abs_tol = o.abs_tol.value_or(c.run.abs_tol);
  return opts;
}

inline CertifyOptions certify_options(const ScenarioConfig& c, const RunOverrides& o) {
  CertifyOptions opts;
  const std::uint64_t seed = o.seed.value_or(c.run.seed);
  opts.noise_norm.seed ^= detail::splitmix64(seed);
  opts.decay.norm.seed ^= detail::splitmix64(seed + 1);
  return opts;
}

/// Certificate at unit gain; rescale_certificate moves it to any gain.
inline SpectralCertificate certify_scenario(const ScenarioConfig& c, const BuiltScenario& b,
                                            double gamma, const RunOverrides& o = {}) {
  return certify(b.protocol_at(gamma), b.noise_generator, b.noise.uncertainty_bound(),
                 certify_options(c, o));
}

/// One simulation at gain `gamma` (0 means no feedback). `unit_certificate`
/// (from certify_scenario at gain 1) avoids recomputing spectra in sweeps.
inline RunResult run_gamma(const ScenarioConfig& c, const BuiltScenario& b, double gamma,
                           const RunOverrides& o = {},
                           const std::optional<SpectralCertificate>& unit_certificate = std::nullopt) {
  if (!(gamma >= 0.0)) throw ValidationError("run: gamma must be non-negative");
  RunResult res;
  res.gamma = gamma;
  const FrameMap frame(b.plant_hamiltonian, b.dims.controller);
  const IntegrateOptions iopts = integrate_options(c, o);

  std::optional<FeedbackProtocol> protocol;
  if (gamma > 0.0) {
    protocol = b.protocol_at(gamma);
    try {
      res.certificate = unit_certificate ? rescale_certificate(*unit_certificate, gamma)
                                         : certify_scenario(c, b, gamma, o);
      if (!res.certificate->passes()) res.certificate_error = res.certificate->reason;
    } catch (const CertificationError& e) {
      res.certificate = e.partial();
      res.certificate_error = e.what();
    }
    if (res.certificate && res.certificate->passes()) res.bound = res.certificate->bound_value;
  }
  const Dynamics dyn = protocol ? feedback_dynamics(*protocol, frame, b.noise)
                                : open_loop_dynamics(frame, b.noise);

  auto run = [&](double horizon) {
    std::vector<double> grid = linspace(0.0, horizon, c.run.grid_points);
    for (const auto& e : b.noise.transient_events)
      if (e.time <= horizon) grid.push_back(e.time);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    Trajectory t = integrate(dyn, b.sigma0, {0.0, horizon}, b.noise.transient_events, grid,
                             b.dims, iopts);
    attach_errors(t, b.plant_hamiltonian, b.phi0);
    return t;
  };

  if (c.run.t_end) {
    res.horizon = *c.run.t_end;
    res.trajectory = run(res.horizon);
    res.plateau = plateau(res.trajectory, c.run.tail_fraction);
    res.plateau_converged = true;
  } else {
    // Window of 40 / (gamma alpha); the no-feedback baseline borrows the
    // unit-gain rate so its window matches the slowest feedback run.
    const double g = gamma > 0.0 ? gamma : 1.0;
    double alpha = 0.0;
    if (res.certificate && res.certificate->passes()) alpha = res.certificate->abscissa_alpha;
    if (!(alpha > 0.0) && gamma == 0.0 && unit_certificate && unit_certificate->passes()) {
      alpha = unit_certificate->abscissa_alpha;
    }
    if (!(alpha > 0.0) && gamma == 0.0) {
      try {
        const auto uc = certify_scenario(c, b, 1.0, o);
        if (uc.passes()) alpha = uc.abscissa_alpha;
      } catch (const CertificationError&) {
      }
    }
    const double initial = alpha > 0.0 ? 40.0 / (g * alpha) : 40.0 / g;
    double start = initial;
    for (const auto& e : b.noise.transient_events) start = std::max(start, e.time + initial);
    PlateauOptions popts;
    popts.tail_fraction = c.run.tail_fraction;
    auto pr = auto_plateau(run, start, popts);
    res.horizon = pr.horizon;
    res.plateau = pr.value;
    res.plateau_converged = pr.converged;
    res.trajectory = std::move(pr.trajectory);
  }

  // Pass conditions.
  const auto& tr = res.trajectory;
  const auto& ex = c.expect;
  auto fail = [&](const std::string& s) { res.failed_checks.push_back(s); };
  if (ex.max_error_before) {
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.times.size() && tr.times[i] < (*ex.max_error_before)[0]; ++i)
      worst = std::max(worst, tr.errors[i]);
    if (!(worst < (*ex.max_error_before)[1])) {
      fail("max D before t=" + detail::fmt17((*ex.max_error_before)[0]) + " is " +
           detail::fmt17(worst));
    }
  }
  if (ex.jump_at) {
    const auto it = std::find(tr.times.begin(), tr.times.end(), *ex.jump_at);
    if (it == tr.times.begin() || it == tr.times.end()) {
      fail("no sample at the jump time");
    } else {
      const auto i = static_cast<std::size_t>(it - tr.times.begin());
      if (!(tr.errors[i] > tr.errors[i - 1] + 1e-3)) {
        fail("D does not jump at t=" + detail::fmt17(*ex.jump_at));
      }
    }
  }
  if (ex.final_error_below && !(tr.errors.back() < *ex.final_error_below)) {
    fail("final D " + detail::fmt17(tr.errors.back()) + " not below " +
         detail::fmt17(*ex.final_error_below));
  }
  if (ex.plateau_within_bound && gamma > 0.0) {
    if (std::isnan(res.bound)) {
      fail("no certified bound: " + res.certificate_error);
    } else if (!(res.plateau <= res.bound + 1e-9)) {
      fail("plateau exceeds the certified bound");
    }
  }
  if (!res.plateau_converged) fail("plateau did not settle within the extension budget");
  res.pass = res.failed_checks.empty();
  return res;
}

inline RunResult run_scenario(const ScenarioConfig& c, const RunOverrides& o = {}) {
  return run_gamma(c, build_scenario(c), c.gamma, o);
}

inline std::string summary_line(const RunResult& r) {
  return "plateau=" + detail::fmt17(r.plateau) + " bound=" + detail::fmt17(r.bound) +
         " pass=" + (r.pass ? "true" : "false");
}

//===========================================================================
// Sweeps
//===========================================================================

struct SweepItem {
  double gamma = 0.0;
  std::optional<RunResult> result;
  std::string error;
  int error_kind = 0;  // 0 none, 2 validation, 3 integration
};

struct SweepResult {
  std::vector<SweepItem> items;
  bool all_within_bound = true;
  bool monotone = true;
  bool pass = false;
};

/// plateau strictly decreasing in gamma over gamma > 0, and the no-feedback
/// plateau (if present) above all of them.
inline bool plateaus_monotone(const std::vector<std::pair<double, double>>& gamma_plateau) {
  std::vector<std::pair<double, double>> pos;
  std::optional<double> baseline;
  for (const auto& gp : gamma_plateau) {
    if (gp.first == 0.0) {
      baseline = gp.second;
    } else {
      pos.push_back(gp);
    }
  }
  std::sort(pos.begin(), pos.end());
  for (std::size_t i = 1; i < pos.size(); ++i)
    if (!(pos[i].second < pos[i - 1].second)) return false;
  if (baseline)
    for (const auto& gp : pos)
      if (!(*baseline > gp.second)) return false;
  return true;
}

inline SweepResult sweep(const ScenarioConfig& c, const BuiltScenario& b,
                         const std::vector<double>& gammas, const RunOverrides& o = {}) {
  if (gammas.empty()) throw ValidationError("sweep: empty gamma list");
  for (double g : gammas)
    if (!(g >= 0.0)) throw ValidationError("sweep: gamma values must be non-negative");

  std::optional<SpectralCertificate> unit;
  try {
    unit = certify_scenario(c, b, 1.0, o);
  } catch (const CertificationError&) {
    unit.reset();
  }

  std::vector<std::future<SweepItem>> jobs;
  for (double g : gammas) {
    jobs.push_back(std::async(std::launch::async, [&, g] {
      SweepItem item;
      item.gamma = g;
      try {
        item.result = run_gamma(c, b, g, o, unit);
      } catch (const IntegrationError& e) {
        item.error = e.what();
        item.error_kind = 3;
      } catch (const std::exception& e) {
        item.error = e.what();
        item.error_kind = 2;
      }
      return item;
    }));
  }
  SweepResult out;
  std::vector<std::pair<double, double>> gp;
  for (auto& j : jobs) out.items.push_back(j.get());
  for (const auto& it : out.items) {
    if (!it.result) {
      out.all_within_bound = false;
      continue;
    }
    gp.emplace_back(it.gamma, it.result->plateau);
    if (it.gamma > 0.0 && !(it.result->plateau <= it.result->bound + 1e-9)) {
      out.all_within_bound = false;
    }
  }
  out.monotone = plateaus_monotone(gp);
  bool items_ok = true;
  for (const auto& it : out.items) items_ok = items_ok && it.result && it.result->pass;
  out.pass = items_ok && out.all_within_bound && (!c.expect.plateaus_decreasing || out.monotone);
  return out;
}

//===========================================================================
// Discretization study
//===========================================================================

struct DiscretizeResult {
  std::map<std::string, std::vector<ConvergenceRow>> tables;
  std::vector<std::string> failed_checks;
  bool pass = false;
};

inline std::optional<CellRule> parse_rule(const std::string& s) {
  if (s == "left") return CellRule::LeftEndpoint;
  if (s == "midpoint") return CellRule::Midpoint;
  return std::nullopt;
}

inline DiscretizeResult discretize_study(const ScenarioConfig& c, const BuiltScenario& b,
                                         std::vector<std::size_t> cells,
                                         const RunOverrides& o = {}) {
  const DiscretizeConfig dc = c.discretize.value_or(DiscretizeConfig{});
  if (cells.empty()) cells = dc.cells;
  if (cells.size() < 2) throw ConfigError("discretize.cells", "need at least two cell counts");
  if (!(c.gamma > 0.0)) throw ConfigError("protocol.gamma", "discretization needs gamma > 0");
  FeedbackScenario sc{b.protocol_at(c.gamma), b.plant_hamiltonian, b.noise, b.sigma0,
                      {0.0, dc.t_end}};
  ConvergenceOptions copts;
  copts.reference.rel_tol = std::min(1e-12, o.rel_tol.value_or(1e-12));
  copts.reference.abs_tol = std::min(1e-14, o.abs_tol.value_or(1e-14));
  std::map<std::string, std::array<double, 2>> rules = dc.order_brackets;
  if (rules.empty()) rules = {{"left", {0.8, 1.3}}, {"midpoint", {1.7, 2.4}}};
  DiscretizeResult out;
  for (const auto& [name, bracket] : rules) {
    const auto rule = parse_rule(name);
    if (!rule) throw ConfigError("discretize.order_brackets." + name, "unknown rule");
    auto rows = convergence_table(sc, cells, *rule, copts);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (!(rows[i].terminal_error < rows[i - 1].terminal_error)) {
        out.failed_checks.push_back(name + ": error does not decrease at n=" +
                                    std::to_string(rows[i].n));
      }
      if (!(rows[i].observed_order >= bracket[0] && rows[i].observed_order <= bracket[1])) {
        out.failed_checks.push_back(name + ": order " + detail::fmt17(rows[i].observed_order) +
                                    " outside [" + detail::fmt17(bracket[0]) + ", " +
                                    detail::fmt17(bracket[1]) + "] at n=" +
                                    std::to_string(rows[i].n));
      }
    }
    out.tables[name] = std::move(rows);
  }
  out.pass = out.failed_checks.empty();
  return out;
}

//===========================================================================
// Artifacts
//===========================================================================

/// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os << content;
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream os;
  write_trajectory_csv(os, t);
  return os.str();
}

/// Stem with `_gamma<g>` inserted before the extension.
inline std::string gamma_file(const std::string& file, double gamma) {
  const std::filesystem::path p(file);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", gamma);
  return (p.parent_path() / (p.stem().string() + "_gamma" + buf + p.extension().string())).string();
}

inline std::string gnuplot_script(const std::vector<std::pair<double, std::string>>& curves) {
  std::ostringstream os;
  os << "set datafile separator ','\nset key autotitle columnhead\n"
     << "set xlabel 't'\nset ylabel 'D(t)'\nplot";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    os << (i ? ", \\\n     " : " ") << "'" << curves[i].second
       << "' using 1:2 with lines title 'gamma=" << curves[i].first << "'";
  }
  os << "\n";
  return os.str();
}

}  // namespace cqfb
