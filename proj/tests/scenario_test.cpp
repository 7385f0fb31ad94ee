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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cqfb/scenario.hpp"
#include "cqfb/two_qubit.hpp"

namespace {

using namespace cqfb;
namespace fs = std::filesystem;

const fs::path kConfigs = CQFB_CONFIG_DIR;

std::string config_field_of(const std::string& text) {
  try {
    build_scenario(parse_config_text(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

const char* kMinimal = R"({
  "plant": {"dim": 4, "hamiltonian": {"preset": "pauli_xx"}},
  "protocol": {"gamma": 5}
})";

TEST(Config, ShippedFilesRoundTrip) {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".cfg") continue;
    ++seen;
    const ScenarioConfig c = load_config(entry.path());
    const ScenarioConfig again = parse_config(serialize_config(c));
    EXPECT_EQ(c, again) << entry.path();
  }
  EXPECT_GE(seen, 9u);
}

TEST(Config, MinimalDefaults) {
  const ScenarioConfig c = parse_config_text(kMinimal);
  EXPECT_EQ(c.plant_dim, 4u);
  EXPECT_EQ(c.controller_dim, 2u);
  EXPECT_EQ(c.design, "builtin");
  EXPECT_FALSE(c.run.t_end.has_value());
  EXPECT_EQ(c.run.grid_points, 1001u);
  EXPECT_EQ(c.run.rel_tol, 1e-9);
  EXPECT_EQ(c.run.abs_tol, 1e-11);
  EXPECT_EQ(c.outputs.csv, "scenario.csv");
  const BuiltScenario b = build_scenario(c);
  EXPECT_LT(max_abs_diff(b.sigma0.matrix(), steady_candidate(b.design).matrix()), 0.0 + 1e-15);
  EXPECT_DOUBLE_EQ(b.design.gamma(), 1.0);
}

TEST(Config, MalformedFieldsNameThePath) {
  EXPECT_EQ(config_field_of(R"({"plant": {"dim": 2, "hamiltonian": {"entries": [[0, 1], [0, 0]]}}})"),
            "plant.hamiltonian");
  EXPECT_EQ(config_field_of(R"({"plant": {"dim": 4, "hamiltonian": {"preset": "pauli_xx"}},
                                "protocol": {"gamma": -1}})"),
            "protocol.gamma");
  EXPECT_EQ(config_field_of(R"({"plant": {"dim": 4, "hamiltonian": {"preset": "pauli_xx"}},
                                "noise": {"transient": [{"time": 1, "channel": "melt"}]}})"),
            "noise.transient[0].channel");
  EXPECT_EQ(config_field_of(R"({"plant": {"dim": 4, "hamiltonian": {"preset": "pauli_xx"}},
                                "colour": "blue"})"),
            "colour");
  EXPECT_EQ(config_field_of(R"({"plant": {"dim": 4, "hamiltonian": {"preset": "pauli_xx"}},
                                "run": {"tail_fraction": 2}})"),
            "run.tail_fraction");
  EXPECT_EQ(config_field_of(R"({"plant": {"dim": 4, "hamiltonian": {"preset": "pauli_x"}}})"),
            "plant.hamiltonian");
  EXPECT_EQ(config_field_of(R"({"plant": {"dim": 4, "hamiltonian": {"preset": "pauli_xx"}},
                                "initial_state": {"product": [{"populations": [1, 0, 0, 0]},
                                                              {"populations": [0.5, 0.4]}]}})"),
            "initial_state");
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Config, ShippedMalformedHamiltonianIsRejected) {
  try {
    build_scenario(load_config(kConfigs / "malformed_hamiltonian.cfg"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "plant.hamiltonian");
  }
}

TEST(MatrixSpec, Forms) {
  const Dims dims{4, 2};
  auto parse = [&](const char* text) { return parse_matrix(json::parse(text), "m", dims); };
  EXPECT_LT(max_abs_diff(parse(R"({"preset": "pauli_xz"})"), kron(pauli_x(), pauli_z())), 1e-15);
  EXPECT_LT(max_abs_diff(parse(R"({"preset": "lowering"})"), ket_bra(0, 1, 2)), 1e-15);
  EXPECT_LT(max_abs_diff(parse(R"({"preset": "identity", "dim": 3})"), identity(3)), 1e-15);
  EXPECT_LT(max_abs_diff(parse(R"({"populations": [0.7, 0.3]})"),
                         0.7 * projector(qubit_ket(0)) + 0.3 * projector(qubit_ket(1))),
            1e-15);
  CMatrix e(2, 2);
  e << 1.0, cplx(0.0, 2.0), 3.0, 4.0;
  EXPECT_LT(max_abs_diff(parse(R"({"entries": [[1, [0, 2]], [3, 4]]})"), e), 1e-15);
  EXPECT_LT(max_abs_diff(parse(R"({"diag": [1, 2]})"), CMatrix(RVector::LinSpaced(2, 1, 2).cast<cplx>().asDiagonal())),
            1e-15);
  EXPECT_LT(max_abs_diff(parse(R"({"ket_bra": [0, 2], "dim": 3})"), ket_bra(0, 2, 3)), 1e-15);
  EXPECT_LT(max_abs_diff(parse(R"({"sum": [{"preset": "pauli_x"}, {"preset": "pauli_z"}], "scale": 2})"),
                         2.0 * (pauli_x() + pauli_z())),
            1e-15);
  EXPECT_LT(max_abs_diff(parse(R"({"preset": "pauli_x", "embed": "controller"})"),
                         embed_controller(pauli_x(), 4)),
            1e-15);
  EXPECT_THROW(parse(R"({"preset": "pauli_x", "diag": [1, 2]})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "banana"})"), ConfigError);
}

TEST(Build, Fig2MatchesReferenceSystem) {
  const BuiltScenario b = build_scenario(load_config(kConfigs / "fig2.cfg"));
  EXPECT_LT(max_abs_diff(b.sigma0.matrix(), two_qubit::mixed_initial_state().matrix()), 1e-15);
  EXPECT_LT(max_abs_diff(b.plant_hamiltonian.matrix(), two_qubit::plant_hamiltonian().matrix()),
            1e-15);
  const auto expected = two_qubit::noise_couplings();
  ASSERT_EQ(b.noise_generator.couplings().size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    EXPECT_LT(max_abs_diff(b.noise_generator.couplings()[k], expected[k]), 1e-15);
  }
  EXPECT_LT(max_abs_diff(b.design.unit_h_i0().matrix(),
                         two_qubit::protocol(1.0).unit_h_i0().matrix()),
            1e-15);
}

TEST(Build, CorrelatedNoiseAndPerturbation) {
  const BuiltScenario corr = build_scenario(load_config(kConfigs / "correlated_noise.cfg"));
  const auto expected = two_qubit::correlated_noise_couplings();
  ASSERT_EQ(corr.noise_generator.couplings().size(), expected.size());
  EXPECT_LT(max_abs_diff(corr.noise_generator.couplings()[2], expected[2]), 1e-15);

  const BuiltScenario pert = build_scenario(load_config(kConfigs / "perturbed.cfg"));
  ASSERT_TRUE(pert.noise.uncertainty.has_value());
  EXPECT_DOUBLE_EQ(pert.noise.uncertainty_bound(), 0.05);
  const auto reference = two_qubit::sinusoidal_perturbation(0.05, 2.0);
  for (double t : {0.1, 0.8, 3.3}) {
    const CMatrix h = pert.noise.uncertainty->hamiltonian(t);
    EXPECT_LT(max_abs_diff(h, reference.hamiltonian(t)), 1e-15);
    EXPECT_LE(2.0 * operator_norm(h), 0.05 + 1e-15);
  }
}

TEST(Run, DeterministicCsvAndChecks) {
  ScenarioConfig c = load_config(kConfigs / "fig1.cfg");
  c.run.t_end = 4.0;
  c.run.grid_points = 401;
  c.expect.final_error_below.reset();
  const BuiltScenario b = build_scenario(c);
  const RunResult r1 = run_gamma(c, b, c.gamma);
  const RunResult r2 = run_gamma(c, b, c.gamma);
  EXPECT_EQ(trajectory_csv(r1.trajectory), trajectory_csv(r2.trajectory));
  EXPECT_TRUE(r1.pass);
  EXPECT_TRUE(r1.failed_checks.empty());
  EXPECT_EQ(r1.trajectory.meta.events_applied, 1u);

  // An impossible expectation is reported, not hidden.
  c.expect.final_error_below = 1e-30;
  const RunResult r3 = run_gamma(c, b, c.gamma);
  EXPECT_FALSE(r3.pass);
  EXPECT_FALSE(r3.failed_checks.empty());
  EXPECT_NE(summary_line(r3).find("pass=false"), std::string::npos);
}

TEST(Sweep, ConcurrentMatchesSequentialAndBoundScales) {
  ScenarioConfig c = load_config(kConfigs / "fig2.cfg");
  c.run.t_end = 6.0;
  c.run.grid_points = 121;
  c.expect.plateau_within_bound = false;
  c.expect.plateaus_decreasing = false;
  const BuiltScenario b = build_scenario(c);
  const SweepResult s = sweep(c, b, {5.0, 10.0});
  ASSERT_EQ(s.items.size(), 2u);
  ASSERT_TRUE(s.items[0].result && s.items[1].result);
  const auto& r5 = *s.items[0].result;
  const auto& r10 = *s.items[1].result;
  EXPECT_NEAR(r10.bound, 0.5 * r5.bound, 1e-14 * r5.bound);
  const SpectralCertificate unit = certify_scenario(c, b, 1.0);
  const RunResult seq = run_gamma(c, b, 10.0, {}, unit);
  EXPECT_EQ(trajectory_csv(seq.trajectory), trajectory_csv(r10.trajectory));
  EXPECT_THROW(sweep(c, b, {}), ValidationError);
}

TEST(Sweep, MonotoneRule) {
  EXPECT_TRUE(plateaus_monotone({{0, 1.6}, {5, 0.4}, {10, 0.2}, {20, 0.1}}));
  EXPECT_FALSE(plateaus_monotone({{5, 0.4}, {10, 0.4}}));
  EXPECT_FALSE(plateaus_monotone({{0, 0.3}, {5, 0.4}}));
  EXPECT_TRUE(plateaus_monotone({{20, 0.1}, {5, 0.4}}));
}

TEST(Output, FileNamesAndAtomicWrite) {
  EXPECT_EQ(gamma_file("fig2.csv", 5.0), "fig2_gamma5.csv");
  EXPECT_EQ(gamma_file("out/fig2.csv", 0.5), "out/fig2_gamma0.5.csv");
  const fs::path dir = fs::temp_directory_path() / "cqfb_scenario_test";
  fs::remove_all(dir);
  write_file_atomic(dir / "nested" / "a.txt", "hello\n");
  std::ifstream in(dir / "nested" / "a.txt");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "hello");
  EXPECT_FALSE(fs::exists(dir / "nested" / "a.txt.tmp"));
  fs::remove_all(dir);
  const std::string gp = gnuplot_script({{5.0, "a.csv"}, {10.0, "b.csv"}});
  EXPECT_NE(gp.find("'a.csv'"), std::string::npos);
  EXPECT_NE(gp.find("'b.csv'"), std::string::npos);
}

TEST(Discretize, RuleNamesAndStudy) {
  EXPECT_EQ(parse_rule("left"), CellRule::LeftEndpoint);
  EXPECT_EQ(parse_rule("midpoint"), CellRule::Midpoint);
  EXPECT_FALSE(parse_rule("right").has_value());
  const ScenarioConfig c = load_config(kConfigs / "appendix_b.cfg");
  const DiscretizeResult d = discretize_study(c, build_scenario(c), {32, 64});
  EXPECT_TRUE(d.pass);
  EXPECT_EQ(d.tables.size(), 2u);
}

}  // namespace
