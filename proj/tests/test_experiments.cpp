#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "qrc/experiments.hpp"

using namespace qrc;

namespace {

ExperimentConfig quick(const std::string& name, std::uint64_t seed = 1) {
  ExperimentConfig c = preset(name);
  c.seed = seed;
  c.test_size = 200;
  return c;
}

}  // namespace

TEST(Histogram, AllOnesLandInLastBin) {
  const std::vector<double> v(37, 1.0);
  const Histogram h = histogram(v, 10);
  ASSERT_EQ(h.counts.size(), 10u);
  ASSERT_EQ(h.edges.size(), 11u);
  EXPECT_EQ(h.counts.back(), 37u);
  EXPECT_DOUBLE_EQ(h.edges.front(), 0.9);
  EXPECT_DOUBLE_EQ(h.edges.back(), 1.0);
}

TEST(Histogram, CountsSumAndDeterminism) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.3, 1.0);
  std::vector<double> v(1000);
  for (double& x : v) x = u(rng);
  const Histogram a = histogram(v, 17);
  const Histogram b = histogram(v, 17);
  EXPECT_EQ(std::accumulate(a.counts.begin(), a.counts.end(), std::size_t{0}), v.size());
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_LE(a.edges.front(), *std::min_element(v.begin(), v.end()));
}

TEST(Histogram, Errors) {
  EXPECT_THROW(histogram({}, 3), std::invalid_argument);
  EXPECT_THROW(histogram({1.0}, 0), std::invalid_argument);
}

TEST(Presets, AllNamesResolveAndValidate) {
  for (const std::string& n : experiment_names()) {
    SCOPED_TRACE(n);
    ExperimentConfig c = preset(n);
    EXPECT_EQ(c.name, n);
    EXPECT_NO_THROW(c.validate());
  }
  EXPECT_THROW(preset("fig9"), std::out_of_range);
}

TEST(Presets, PresetParameters) {
  const ExperimentConfig cnot = preset("fig2-cnot");
  EXPECT_EQ(cnot.n_qubits, 2);
  EXPECT_EQ(cnot.n_sites, 6);
  EXPECT_DOUBLE_EQ(cnot.P.real(), 400.0);
  EXPECT_DOUBLE_EQ(cnot.tau, 0.23);
  const ExperimentConfig f6 = preset("fig6");
  EXPECT_EQ(f6.n_qubits, 3);
  EXPECT_EQ(f6.n_sites, 5);
  EXPECT_DOUBLE_EQ(f6.E0, 2990.0);
  const ExperimentConfig h = preset("fig3-h");
  EXPECT_EQ(h.ga.trainables, Trainables::coupling_drive_tau);
  EXPECT_DOUBLE_EQ(h.P.real(), 4.96);
  EXPECT_DOUBLE_EQ(h.tau, 1.53);
}

TEST(ConfigJson, RoundTrip) {
  for (const std::string& n : experiment_names()) {
    SCOPED_TRACE(n);
    ExperimentConfig c = preset(n);
    c.seed = 42;
    const nlohmann::json j = to_json(c);
    const ExperimentConfig back = config_from_json(j);
    EXPECT_EQ(to_json(back), j);
  }
}

TEST(ConfigJson, RejectsUnknownKeysAndSchema) {
  nlohmann::json j = to_json(preset("fig3-x"));
  j["typo"] = 1;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = to_json(preset("fig3-x"));
  j["ga"]["populaton"] = 3;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j = to_json(preset("fig3-x"));
  j.erase("schema_version");
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  j["schema_version"] = 99;
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
}

TEST(ConfigJson, OverridesPreset) {
  const ExperimentConfig c = config_from_json({{"schema_version", 1}, {"experiment", "fig2-cz"}, {"tau", 0.5}});
  EXPECT_DOUBLE_EQ(c.tau, 0.5);
  EXPECT_DOUBLE_EQ(c.P.real(), 154.0);
  EXPECT_EQ(c.target, "cz");
}

TEST(ConfigJson, ValidationErrors) {
  ExperimentConfig c = preset("fig2-cnot");
  c.n_qubits = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = preset("robustness");
  c.deltas.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = preset("fig4");
  c.gamma = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(GateExperiment, SingleQubitReportIsConsistent) {
  const FidelityReport r = run_gate_experiment(quick("fig3-x"));
  ASSERT_EQ(r.values.size(), 200u);
  for (double v : r.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(r.stats.min, r.stats.mean - 5 * r.stats.stddev - 1e-12);
  EXPECT_EQ(std::accumulate(r.hist.counts.begin(), r.hist.counts.end(), std::size_t{0}), 200u);
  EXPECT_GE(r.stats.mean, 0.995);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.fidelity_measure, "overlap");
}

TEST(GateExperiment, BitReproducible) {
  const nlohmann::json a = to_json(run_gate_experiment(quick("fig3-t", 9)));
  const nlohmann::json b = to_json(run_gate_experiment(quick("fig3-t", 9)));
  EXPECT_EQ(a.dump(), b.dump());
  const nlohmann::json c = to_json(run_gate_experiment(quick("fig3-t", 10)));
  EXPECT_NE(a.dump(), c.dump());
}

TEST(GateExperiment, ProvenanceRecordsStreams) {
  const nlohmann::json j = to_json(run_gate_experiment(quick("fig3-s")));
  const auto& streams = j.at("provenance").at("streams");
  EXPECT_NE(streams.at("train"), streams.at("test"));
  EXPECT_EQ(j.at("provenance").at("seed"), 1);
}

TEST(SixSite, OnlyFirstCouplingTrained) {
  ExperimentConfig c = quick("figS1-z");
  c.ga.max_generations = 5;
  c.nm.max_evaluations = 50;
  const FidelityReport r = run_single_qubit_6site(c);
  EXPECT_TRUE(r.extra.at("mask_respected").get<bool>());
  EXPECT_EQ(r.training.params.layout.n_sites, 6);
}

TEST(PurityTrace, StartsAtOneAndStaysOneWithoutCoupling) {
  ProtocolParams p;
  p.network = single_site_network(1.0, 0.3);
  p.layout = RegisterLayout(1, 1);
  p.coupling = CouplingMatrix::zero(1, 1);
  p.tau = 1.0;
  p.convention = LadderConvention::ladder;
  const auto grid = linear_grid(0.0, 5.0, 51);
  const QuantumState plus = QuantumState::normalized(Vector::Constant(2, 1.0 / std::sqrt(2.0)));
  for (const PurityPoint& pt : run_purity_trace(p, plus, grid)) EXPECT_NEAR(pt.purity, 1.0, 1e-12);
  p.coupling.J(0, 0) = 0.7;
  const auto trace = run_purity_trace(p, plus, grid);
  EXPECT_NEAR(trace.front().purity, 1.0, 1e-12);
  EXPECT_LT(std::min_element(trace.begin(), trace.end(), [](auto& a, auto& b) { return a.purity < b.purity; })->purity, 0.99);
  for (const PurityPoint& pt : trace) {
    EXPECT_GT(pt.purity, 0.0);
    EXPECT_LE(pt.purity, 1.0 + 1e-12);
  }
}

TEST(PurityTrace, ResonantExchangeReturnsRepeatedly) {
  // Resonant single-site exchange: purity is 1 whenever J t is a multiple of pi/2.
  ProtocolParams p;
  p.network = single_site_network(0.0, 0.0);
  p.network.E0 = 1.0;
  p.layout = RegisterLayout(1, 1);
  p.coupling = CouplingMatrix::zero(1, 1);
  p.coupling.J(0, 0) = 1.0;
  p.tau = 1.0;
  p.convention = LadderConvention::ladder;
  const auto trace = run_purity_trace(p, QuantumState::basis(1, 1), linear_grid(0.0, 10.0, 1001));
  EXPECT_GE(count_purity_returns(trace), 2);
  EXPECT_NEAR(trace[157].purity, 1.0, 1e-3);  // t = 1.57
}

TEST(Markovian, ZeroGammaIsIdentityTask) {
  ExperimentConfig c = quick("fig4");
  c.gamma = 0.0;
  const FidelityReport r = run_markovian_experiment(c);
  EXPECT_GE(r.stats.mean, 0.999);
  EXPECT_EQ(r.fidelity_measure, "uhlmann");
}

TEST(Markovian, TrainedChannelMatches) {
  std::vector<PurityPoint> trace;
  const FidelityReport r = run_markovian_experiment(quick("fig4"), &trace);
  EXPECT_GE(r.stats.mean, 0.98);
  EXPECT_GE(r.extra.at("purity_returns_above_0.999").get<int>(), 2);
  EXPECT_EQ(trace.size(), 801u);
}

TEST(Markovian, IdealExcitedPopulation) {
  const DensityMatrix out = amplitude_damping_output(DensityMatrix::pure(QuantumState::basis(1, 1)), 1.0, 0.5);
  EXPECT_NEAR(out.matrix()(1, 1).real(), std::exp(-0.5), 1e-12);
}

TEST(Grover, IdealReferenceIsDeterministic) {
  const GateMatrix diffusion = compose_circuit(circuits::by_name("grover2_diffusion"));
  for (Eigen::Index m = 0; m < 4; ++m) {
    const GateMatrix prep = compose_circuit(circuits::grover_preparation(2, m));
    const Vector out = diffusion.matrix() * prep.apply(QuantumState::basis(2, 0)).amplitudes();
    EXPECT_NEAR(std::norm(out(m)), 1.0, 1e-10);
    EXPECT_NEAR(out.squaredNorm(), 1.0, 1e-10);
  }
}

TEST(Grover, SmallBudgetRunReportsProbabilities) {
  ExperimentConfig c = quick("fig5");
  c.test_size = 20;
  c.ga.population = 6;
  c.ga.max_generations = 2;
  c.nm.max_evaluations = 10;
  const GroverRun g = run_grover2(c);
  ASSERT_EQ(g.probabilities.size(), 4u);
  for (const auto& p : g.probabilities) {
    ASSERT_EQ(p.size(), 4u);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-10);
  }
  EXPECT_EQ(g.report.values.size(), 20u);
}

TEST(Grover, ThreeQubitCircuitCheckedBeforeTraining) {
  const double dev =
      phase_aligned_deviation(compose_circuit(circuits::by_name("grover3_diffusion")).matrix(), grover_diffusion(3).matrix());
  EXPECT_LT(dev, 1e-10);
}

TEST(Robustness, ZeroDeltaEqualsBaselineAndFrozenColumn) {
  // Single-site X task keeps the sweep cheap; the mechanics are the same.
  ExperimentConfig c = quick("fig3-x");
  c.kind = ExperimentKind::robustness;
  c.n_sites = 2;
  c.adjacency = chain_adjacency(2);
  c.ga.trainables = Trainables::coupling;
  c.ga.max_generations = 10;
  c.nm.max_evaluations = 200;
  c.deltas = {0.0, 0.5};
  const RobustnessResult r = run_robustness_sweep(c);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_DOUBLE_EQ(r.rows[0].retrained, r.baseline);
  EXPECT_DOUBLE_EQ(r.rows[0].frozen, r.baseline);
  EXPECT_NE(r.rows[1].frozen, r.baseline);
  EXPECT_TRUE(r.baseline_report.extra.contains("sweep"));
}

TEST(DirectTable, AllRowsPassAndMatchClosedForm) {
  for (const TableCheck& c : verify_direct_table(20000, 3)) {
    SCOPED_TRACE(c.gate);
    EXPECT_GT(c.sampled_mean, 0.999);
    EXPECT_GT(c.closed_form, 0.999);
    EXPECT_NEAR(c.sampled_mean, c.closed_form, 1e-4);
    EXPECT_TRUE(c.passed);
  }
}

TEST(DirectTable, CorruptedEntryFails) {
  GateTable t = GateTable::standard();
  t.set("cz", GateMatrix(Matrix::Identity(4, 4)));
  for (const TableCheck& c : verify_direct_table(2000, 3, t)) EXPECT_EQ(c.passed, c.gate != "cz") << c.gate;
}

TEST(Output, AtomicWriteAndCsv) {
  const auto dir = std::filesystem::temp_directory_path() / "qrc_test_output";
  std::filesystem::remove_all(dir);
  write_file_atomic(dir / "a.csv", histogram_csv(histogram({0.95, 1.0}, 2)));
  std::ifstream in(dir / "a.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "bin_lo,bin_hi,count");
  EXPECT_FALSE(std::filesystem::exists(dir / "a.csv.tmp"));
  EXPECT_EQ(report_stem("fig4", 7), "fig4-7");
  std::filesystem::remove_all(dir);
}

TEST(ConfigJson, CheckedInConfigsLoad) {
  const auto dir = std::filesystem::path(QRC_SOURCE_DIR) / "configs";
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    SCOPED_TRACE(e.path().string());
    std::ifstream in(e.path());
    const nlohmann::json j = nlohmann::json::parse(in);
    // Documents without a target are overrides for a named preset.
    if (j.contains("experiment") || j.contains("target"))
      EXPECT_NO_THROW(config_from_json(j));
    else
      EXPECT_NO_THROW(apply_json(preset("robustness"), j));
    ++n;
  }
  EXPECT_GE(n, 4);
}
