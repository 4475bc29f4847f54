// Named experiment runs: gate training, the purity trace and the
// Markovian channel, Grover compression, the robustness sweep and the
// direct-model table check. Every random draw comes from a labelled stream of
// the experiment seed, so a (config, seed) pair fully determines a report.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qrc/gates.hpp"
#include "qrc/model.hpp"
#include "qrc/rng.hpp"
#include "qrc/trainer.hpp"

namespace qrc {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentKind { gate, single_qubit_6site, markovian, grover2, grover3, robustness };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::gate: return "gate";
    case ExperimentKind::single_qubit_6site: return "single_qubit_6site";
    case ExperimentKind::markovian: return "markovian";
    case ExperimentKind::grover2: return "grover2";
    case ExperimentKind::grover3: return "grover3";
    case ExperimentKind::robustness: return "robustness";
  }
  return "gate";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (ExperimentKind k : {ExperimentKind::gate, ExperimentKind::single_qubit_6site, ExperimentKind::markovian, ExperimentKind::grover2,
                           ExperimentKind::grover3, ExperimentKind::robustness})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

struct ExperimentConfig {
  std::string name;
  ExperimentKind kind = ExperimentKind::gate;
  std::string target;  // gate name, circuit name, or "amplitude_damping"
  int n_qubits = 1;
  int n_sites = 1;
  // Energies are in units of the reference scale of the run (K0 for
  // multi-site networks, E0 for a single site), so K0 = 1 or E0 = 1.
  double E0 = 1.0;
  double K0 = 1.0;
  cplx P = 0.0;
  double tau = 1.0;
  std::optional<std::vector<Edge>> adjacency;  // open chain when absent
  LadderConvention convention = LadderConvention::pauli_sum;
  GAConfig ga;
  NelderMeadOptions nm;
  bool only_first_coupling = false;  // J_11 the only free coupling
  int train_size = 10;
  int test_size = 2000;
  int histogram_bins = 20;
  double threshold = 0.99;
  double gamma = 1.0;  // amplitude damping
  double t = 0.5;
  std::vector<double> deltas;  // robustness sweep
  double robustness_tolerance = 0.02;
  std::uint64_t seed = 0;

  void validate() const {
    if (name.empty()) throw std::invalid_argument("ExperimentConfig: empty name");
    if (n_qubits < 1 || n_sites < 1) throw std::invalid_argument("ExperimentConfig: need at least one qubit and one site");
    if (n_qubits + n_sites > 16) throw std::invalid_argument("ExperimentConfig: register too large");
    if (test_size < 1) throw std::invalid_argument("ExperimentConfig: test_size must be >= 1");
    if (train_size < 1) throw std::invalid_argument("ExperimentConfig: train_size must be >= 1");
    if (histogram_bins < 1) throw std::invalid_argument("ExperimentConfig: histogram_bins must be >= 1");
    if (!(tau >= 0)) throw std::invalid_argument("ExperimentConfig: tau must be >= 0");
    if (E0 < 0 || K0 < 0) throw std::invalid_argument("ExperimentConfig: negative scale");
    ga.validate();
    if (kind == ExperimentKind::markovian) {
      if (n_qubits != 1) throw std::invalid_argument("ExperimentConfig: the Markovian task is single-qubit");
      if (gamma < 0 || t < 0) throw std::invalid_argument("ExperimentConfig: gamma and t must be >= 0");
    } else if (kind == ExperimentKind::grover2 || kind == ExperimentKind::grover3) {
      circuits::by_name(target);
    } else {
      const GateMatrix g = standard_gate(target);
      if (g.arity() != n_qubits) throw std::invalid_argument("ExperimentConfig: target arity does not match n_qubits");
    }
    if (kind == ExperimentKind::robustness && deltas.empty()) throw std::invalid_argument("ExperimentConfig: robustness needs deltas");
    for (double d : deltas)
      if (!(d >= 0)) throw std::invalid_argument("ExperimentConfig: deltas must be >= 0");
  }
};

// --- presets ------------------------------------------------------------------

namespace detail {

// Spread of the initial J population. Couplings that close a full Rabi
// cycle with a strongly driven site sit on a lattice of spacing pi/(2 tau),
// so the population starts at that scale when it exceeds the reference.
inline double default_coupling_scale(double tau, double reference) {
  return tau > 0 ? std::max(reference, std::numbers::pi / (2.0 * tau)) : reference;
}

inline ExperimentConfig two_qubit_preset(std::string name, std::string target, double E0, double P, double tau) {
  ExperimentConfig c;
  c.name = std::move(name);
  c.kind = ExperimentKind::gate;
  c.target = std::move(target);
  c.n_qubits = 2;
  c.n_sites = 6;
  c.E0 = E0;
  c.P = P;
  c.tau = tau;
  c.threshold = 0.98;
  c.ga.population = 24;
  c.ga.max_generations = 200;
  c.ga.coupling_scale = default_coupling_scale(tau, 1.0);
  c.nm.max_evaluations = 3000;
  return c;
}

inline ExperimentConfig single_site_preset(std::string name, std::string target, double P, double tau) {
  ExperimentConfig c;
  c.name = std::move(name);
  c.kind = ExperimentKind::gate;
  c.target = std::move(target);
  c.n_qubits = 1;
  c.n_sites = 1;
  c.P = P;
  c.tau = tau;
  c.convention = LadderConvention::ladder;
  c.ga.trainables = Trainables::coupling_drive_tau;
  c.ga.population = 16;
  c.ga.max_generations = 100;
  c.ga.coupling_scale = default_coupling_scale(tau, 1.0);
  c.nm.max_evaluations = 4000;
  c.threshold = 0.995;
  return c;
}

inline ExperimentConfig six_site_single_qubit_preset(std::string name, std::string target, double P, double tau) {
  ExperimentConfig c;
  c.name = std::move(name);
  c.kind = ExperimentKind::single_qubit_6site;
  c.target = std::move(target);
  c.n_qubits = 1;
  c.n_sites = 6;
  c.P = P;
  c.tau = tau;
  c.only_first_coupling = true;
  c.ga.population = 16;
  c.ga.max_generations = 60;
  c.ga.coupling_scale = default_coupling_scale(tau, 1.0);
  c.nm.max_evaluations = 1000;
  c.threshold = 0.99;
  return c;
}

}  // namespace detail

inline std::vector<std::string> experiment_names() {
  return {"fig2-cnot", "fig2-cy",  "fig2-cz",  "fig2-swap", "fig3-x",   "fig3-y",   "fig3-z",   "fig3-h",   "fig3-s",
          "fig3-t",    "fig4",     "fig5",     "fig6",      "figS1-x",  "figS1-y",  "figS1-z",  "figS1-h",  "figS1-s",
          "figS1-t",   "robustness"};
}

/// Fixed parameters of each named run.
inline ExperimentConfig preset(const std::string& name) {
  using detail::single_site_preset;
  using detail::six_site_single_qubit_preset;
  using detail::two_qubit_preset;
  if (name == "fig2-cnot") return two_qubit_preset(name, "cnot", 1.0, 400.0, 0.23);
  if (name == "fig2-cy") return two_qubit_preset(name, "cy", 1.0, 400.0, 0.2);
  if (name == "fig2-cz") return two_qubit_preset(name, "cz", 1.0, 154.0, 0.23);
  if (name == "fig2-swap") return two_qubit_preset(name, "swap", 2.0, 5.5, 0.3);
  if (name == "fig3-x") return single_site_preset(name, "x", 60.0, 3.08);
  if (name == "fig3-y") return single_site_preset(name, "y", 60.0, 16.68);
  if (name == "fig3-z") return single_site_preset(name, "z", 0.1, 6.28);
  if (name == "fig3-h") return single_site_preset(name, "h", 4.96, 1.53);
  if (name == "fig3-s") return single_site_preset(name, "s", 0.1, 3.07);
  if (name == "fig3-t") return single_site_preset(name, "t", 0.1, 4.71);
  if (name == "figS1-x") return six_site_single_qubit_preset(name, "x", 60.0, 0.89);
  if (name == "figS1-y") return six_site_single_qubit_preset(name, "y", 60.0, 0.1);
  if (name == "figS1-z") return six_site_single_qubit_preset(name, "z", 0.1, 0.01);
  if (name == "figS1-h") return six_site_single_qubit_preset(name, "h", 50.0, 0.15);
  if (name == "figS1-s") return six_site_single_qubit_preset(name, "s", 0.1, 12.33);
  if (name == "figS1-t") return six_site_single_qubit_preset(name, "t", 0.1, 13.75);
  if (name == "fig4") {
    ExperimentConfig c = detail::single_site_preset(name, "amplitude_damping", 0.5, 1.0);
    c.kind = ExperimentKind::markovian;
    c.threshold = 0.98;
    return c;
  }
  if (name == "fig5") {
    ExperimentConfig c = two_qubit_preset(name, "grover2_diffusion", 300.0, 98.0, 10.6);
    c.kind = ExperimentKind::grover2;
    return c;
  }
  if (name == "fig6") {
    ExperimentConfig c = two_qubit_preset(name, "grover3_diffusion", 2990.0, 994.25, 1.22);
    c.kind = ExperimentKind::grover3;
    c.n_qubits = 3;
    c.n_sites = 5;
    c.threshold = 0.97;
    return c;
  }
  if (name == "robustness") {
    ExperimentConfig c = preset("fig2-cnot");
    c.name = name;
    c.kind = ExperimentKind::robustness;
    c.deltas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    return c;
  }
  throw std::out_of_range("unknown experiment '" + name + "'");
}

// --- config JSON -----------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const GAConfig& g) {
  return {{"population", g.population},         {"mutation", g.mutation},     {"max_generations", g.max_generations},
          {"fitness_target", g.fitness_target}, {"trainables", to_string(g.trainables)},
          {"coupling_scale", g.coupling_scale}, {"halve_after", g.halve_after}, {"stop_after", g.stop_after}};
}

inline void apply_json(GAConfig& g, const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"population", "mutation", "max_generations", "fitness_target", "trainables", "coupling_scale",
                                  "halve_after", "stop_after"},
                              "ga");
  g.population = j.value("population", g.population);
  g.mutation = j.value("mutation", g.mutation);
  g.max_generations = j.value("max_generations", g.max_generations);
  g.fitness_target = j.value("fitness_target", g.fitness_target);
  if (j.contains("trainables")) g.trainables = trainables_from_string(j.at("trainables").get<std::string>());
  g.coupling_scale = j.value("coupling_scale", g.coupling_scale);
  g.halve_after = j.value("halve_after", g.halve_after);
  g.stop_after = j.value("stop_after", g.stop_after);
}

inline nlohmann::json to_json(const NelderMeadOptions& o) {
  return {{"initial_step", o.initial_step}, {"max_evaluations", o.max_evaluations}, {"f_tol", o.f_tol},
          {"x_tol", o.x_tol},               {"adaptive", o.adaptive},               {"restarts", o.restarts}};
}

inline void apply_json(NelderMeadOptions& o, const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"initial_step", "max_evaluations", "f_tol", "x_tol", "adaptive", "restarts"}, "nm");
  o.initial_step = j.value("initial_step", o.initial_step);
  o.max_evaluations = j.value("max_evaluations", o.max_evaluations);
  o.f_tol = j.value("f_tol", o.f_tol);
  o.x_tol = j.value("x_tol", o.x_tol);
  o.adaptive = j.value("adaptive", o.adaptive);
  o.restarts = j.value("restarts", o.restarts);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"schema_version", kConfigSchemaVersion},
                      {"experiment", c.name},
                      {"kind", to_string(c.kind)},
                      {"target", c.target},
                      {"n_qubits", c.n_qubits},
                      {"n_sites", c.n_sites},
                      {"E0", c.E0},
                      {"K0", c.K0},
                      {"P", complex_to_json(c.P)},
                      {"tau", c.tau},
                      {"convention", to_string(c.convention)},
                      {"ga", to_json(c.ga)},
                      {"nm", to_json(c.nm)},
                      {"only_first_coupling", c.only_first_coupling},
                      {"train_size", c.train_size},
                      {"test_size", c.test_size},
                      {"histogram_bins", c.histogram_bins},
                      {"threshold", c.threshold},
                      {"seed", c.seed}};
  if (c.adjacency) {
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : *c.adjacency) edges.push_back({e.a, e.b});
    j["adjacency"] = edges;
  }
  if (c.kind == ExperimentKind::markovian) {
    j["gamma"] = c.gamma;
    j["t"] = c.t;
  }
  if (c.kind == ExperimentKind::robustness) {
    j["deltas"] = c.deltas;
    j["robustness_tolerance"] = c.robustness_tolerance;
  }
  return j;
}

/// Overrides fields of `base` from a config document. Unknown keys and a
/// missing or unsupported schema_version are rejected.
inline ExperimentConfig apply_json(ExperimentConfig c, const nlohmann::json& j, bool require_schema = true) {
  detail::reject_unknown_keys(j, {"schema_version", "experiment", "kind", "target", "n_qubits", "n_sites", "E0", "K0", "P", "tau",
                                  "adjacency", "convention", "ga", "nm", "only_first_coupling", "train_size", "test_size",
                                  "histogram_bins", "threshold", "gamma", "t", "deltas", "robustness_tolerance", "seed"},
                              "config");
  if (require_schema) {
    if (!j.contains("schema_version")) throw std::invalid_argument("config: missing schema_version");
    if (j.at("schema_version").get<int>() != kConfigSchemaVersion)
      throw std::invalid_argument("config: unsupported schema_version " + j.at("schema_version").dump());
  }
  c.name = j.value("experiment", c.name);
  if (j.contains("kind")) c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
  c.target = j.value("target", c.target);
  c.n_qubits = j.value("n_qubits", c.n_qubits);
  c.n_sites = j.value("n_sites", c.n_sites);
  c.E0 = j.value("E0", c.E0);
  c.K0 = j.value("K0", c.K0);
  if (j.contains("P")) c.P = complex_from_json(j.at("P"));
  c.tau = j.value("tau", c.tau);
  if (j.contains("adjacency")) {
    std::vector<Edge> edges;
    for (const auto& e : j.at("adjacency")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    c.adjacency = edges;
  }
  if (j.contains("convention")) c.convention = ladder_convention_from_string(j.at("convention").get<std::string>());
  if (j.contains("ga")) apply_json(c.ga, j.at("ga"));
  if (j.contains("nm")) apply_json(c.nm, j.at("nm"));
  c.only_first_coupling = j.value("only_first_coupling", c.only_first_coupling);
  c.train_size = j.value("train_size", c.train_size);
  c.test_size = j.value("test_size", c.test_size);
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  c.threshold = j.value("threshold", c.threshold);
  c.gamma = j.value("gamma", c.gamma);
  c.t = j.value("t", c.t);
  if (j.contains("deltas")) c.deltas = j.at("deltas").get<std::vector<double>>();
  c.robustness_tolerance = j.value("robustness_tolerance", c.robustness_tolerance);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

/// A full config document: a known "experiment" name selects the preset that
/// the remaining keys override; otherwise every field starts at its default.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig base;
  if (j.is_object() && j.contains("experiment")) {
    const std::string name = j.at("experiment").get<std::string>();
    const auto names = experiment_names();
    if (std::find(names.begin(), names.end(), name) != names.end()) base = preset(name);
  }
  return apply_json(base, j);
}

// --- reports ----------------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, 1] with lo = min(0.9, smallest value rounded
/// down to 0.01); the last bin is closed on the right.
inline Histogram histogram(const std::vector<double>& values, int n_bins) {
  if (values.empty()) throw std::invalid_argument("histogram: no values");
  if (n_bins < 1) throw std::invalid_argument("histogram: n_bins must be >= 1");
  const double vmin = *std::min_element(values.begin(), values.end());
  const double lo = std::min(0.9, std::floor(std::max(vmin, 0.0) * 100.0) / 100.0);
  const double width = (1.0 - lo) / n_bins;
  Histogram h;
  h.edges.resize(n_bins + 1);
  for (int b = 0; b <= n_bins; ++b) h.edges[b] = lo + width * b;
  h.edges.back() = 1.0;
  h.counts.assign(n_bins, 0);
  for (double v : values) {
    int b = static_cast<int>(std::floor((v - lo) / width));
    b = std::clamp(b, 0, n_bins - 1);
    ++h.counts[b];
  }
  return h;
}

struct FidelityStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double stddev = 0.0;
};

inline FidelityStats fidelity_stats(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("fidelity_stats: no values");
  FidelityStats s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(v.size()));
  return s;
}

struct FidelityReport {
  std::string experiment;
  ExperimentConfig config;
  std::vector<double> values;  // per test state
  FidelityStats stats;
  Histogram hist;
  double training_fitness = 0.0;
  TrainResult training;
  std::string fidelity_measure = "overlap";  // or "uhlmann"
  bool passed = false;
  nlohmann::json extra = nlohmann::json::object();  // experiment-specific results
};

inline std::map<std::string, std::string> stream_labels() {
  return {{"network", "network"}, {"train", "train"}, {"test", "test"}, {"ga", "ga"}, {"perturbation", "perturbation"}};
}

inline nlohmann::json to_json(const FidelityReport& r) {
  nlohmann::json hist = {{"edges", r.hist.edges}, {"counts", r.hist.counts}};
  nlohmann::json training = {{"fitness", r.training.fitness},
                             {"ga_generations", r.training.ga_generations},
                             {"nm_evaluations", r.training.nm_evaluations},
                             {"nm_converged", r.training.nm_converged},
                             {"reached_target", r.training.reached_target}};
  return {{"experiment", r.experiment},
          {"config", to_json(r.config)},
          {"provenance",
           {{"seed", r.config.seed}, {"streams", stream_labels()}, {"fidelity_measure", r.fidelity_measure}, {"model", to_json(r.training.params)}}},
          {"training", training},
          {"evaluation",
           {{"n", r.values.size()},
            {"mean", r.stats.mean},
            {"min", r.stats.min},
            {"max", r.stats.max},
            {"stddev", r.stats.stddev},
            {"threshold", r.config.threshold},
            {"passed", r.passed},
            {"values", r.values}}},
          {"histogram", hist},
          {"results", r.extra}};
}

inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os.precision(17);
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) os << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
  return os.str();
}

inline std::string history_csv(const std::vector<GenerationRecord>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "generation,best,mean\n";
  for (const GenerationRecord& g : history) os << g.generation << ',' << g.best << ',' << g.mean << '\n';
  return os.str();
}

// --- building blocks -----------------------------------------------------------------

/// A single site with energy E1 (in units of itself when E1 = E0 = 1).
inline NetworkSpec single_site_network(double E1, cplx P) {
  NetworkSpec s;
  s.n_sites = 1;
  s.E0 = 2.0 * std::abs(E1);
  s.energies = {E1};
  s.P = P;
  s.validate();
  return s;
}

inline NetworkSpec experiment_network(const ExperimentConfig& c) {
  if (c.n_sites == 1 && !c.adjacency) return single_site_network(c.E0, c.P);
  return draw_network(c.n_sites, c.E0, c.K0, c.adjacency.value_or(chain_adjacency(c.n_sites)), c.P, c.seed);
}

inline ProtocolParams experiment_params(const ExperimentConfig& c, const NetworkSpec& network) {
  ProtocolParams p;
  p.network = network;
  p.layout = RegisterLayout(c.n_qubits, c.n_sites);
  p.coupling = CouplingMatrix::zero(c.n_qubits, c.n_sites);
  p.tau = c.tau;
  p.convention = c.convention;
  return p;
}

inline ChannelTarget experiment_target(const ExperimentConfig& c) {
  switch (c.kind) {
    case ExperimentKind::markovian: return ChannelTarget::amplitude_damping(c.gamma, c.t);
    case ExperimentKind::grover2:
    case ExperimentKind::grover3: return ChannelTarget::unitary(c.target, compose_circuit(circuits::by_name(c.target)));
    default: return ChannelTarget::unitary(normalize_gate_name(c.target), standard_gate(c.target));
  }
}

inline TrainOptions experiment_train_options(const ExperimentConfig& c) {
  TrainOptions o;
  o.ga = c.ga;
  o.ga.seed = c.seed;
  o.nm = c.nm;
  if (c.only_first_coupling) {
    CouplingMask m = CouplingMask::Constant(c.n_qubits, c.n_sites, false);
    m(0, 0) = true;
    o.mask = m;
  }
  return o;
}

inline TrainingSet experiment_test_set(const ExperimentConfig& c, const ChannelTarget& target) {
  return make_training_set(target, haar_sample(target.n_qubits(), static_cast<std::size_t>(c.test_size), c.seed, "test"));
}

/// Evaluates trained parameters on the fresh test sample and fills the report.
inline FidelityReport evaluate_trained(const ExperimentConfig& c, const ChannelTarget& target, const TrainResult& trained) {
  FidelityReport r;
  r.experiment = c.name;
  r.config = c;
  r.training = trained;
  r.training_fitness = trained.fitness;
  r.fidelity_measure = target.is_unitary() ? "overlap" : to_string(MixedFidelity::uhlmann);
  const TrainingSet test = experiment_test_set(c, target);
  r.values = per_state_fidelities(Protocol(trained.params), test);
  r.stats = fidelity_stats(r.values);
  r.hist = histogram(r.values, c.histogram_bins);
  r.passed = r.stats.mean >= c.threshold;
  return r;
}

inline TrainResult train_experiment(const ExperimentConfig& c, const NetworkSpec& network, const ChannelTarget& target) {
  const TrainingSet set = make_training_set(target, static_cast<std::size_t>(c.train_size), c.seed);
  return train_gate(experiment_params(c, network), set, experiment_train_options(c));
}

// --- experiments -----------------------------------------------------------------------

/// Draw the network, train the target, evaluate on a fresh Haar sample.
inline FidelityReport run_gate_experiment(const ExperimentConfig& c) {
  c.validate();
  const ChannelTarget target = experiment_target(c);
  const NetworkSpec network = experiment_network(c);
  return evaluate_trained(c, target, train_experiment(c, network, target));
}

/// Six-site network with J_11 the only nonzero coupling.
inline FidelityReport run_single_qubit_6site(ExperimentConfig c) {
  c.only_first_coupling = true;
  FidelityReport r = run_gate_experiment(c);
  const Matrix& J = r.training.params.coupling.J;
  bool masked = true;
  for (Eigen::Index k = 0; k < J.rows(); ++k)
    for (Eigen::Index l = 0; l < J.cols(); ++l)
      if ((k || l) && J(k, l) != cplx(0.0)) masked = false;
  r.extra["mask_respected"] = masked;
  r.passed = r.passed && masked;
  return r;
}

struct PurityPoint {
  double t = 0.0;
  double purity = 1.0;
};

/// Qubit purity along a time grid for fixed parameters.
inline std::vector<PurityPoint> run_purity_trace(const ProtocolParams& params, const QuantumState& input, const std::vector<double>& times) {
  params.validate();
  const Protocol base(params);
  std::vector<PurityPoint> out;
  out.reserve(times.size());
  for (double t : times) out.push_back({t, purity(base.retimed(t).output(input))});
  return out;
}

/// Local maxima of the trace above `level` (endpoints included when they
/// exceed their single neighbour).
inline int count_purity_returns(const std::vector<PurityPoint>& trace, double level = 0.999) {
  int count = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double p = trace[i].purity;
    const bool left = i == 0 || p >= trace[i - 1].purity;
    const bool right = i + 1 == trace.size() || p > trace[i + 1].purity;
    if (p > level && left && right) ++count;
  }
  return count;
}

inline std::vector<double> linear_grid(double t0, double t1, int points) {
  if (points < 2) throw std::invalid_argument("linear_grid: need at least two points");
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = t0 + (t1 - t0) * i / (points - 1);
  return g;
}

inline std::string purity_csv(const std::vector<PurityPoint>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "t,purity\n";
  for (const PurityPoint& p : trace) os << p.t << ',' << p.purity << '\n';
  return os.str();
}

/// Trains {J, P, tau} against the amplitude-damping channel and evaluates
/// with the Uhlmann fidelity. The purity trace of the trained coupling
/// (input |1>, drive off the resonance window) goes into the report.
inline FidelityReport run_markovian_experiment(const ExperimentConfig& c, std::vector<PurityPoint>* trace_out = nullptr) {
  c.validate();
  const ChannelTarget target = experiment_target(c);
  FidelityReport r = evaluate_trained(c, target, train_experiment(c, experiment_network(c), target));
  // Purity over several multiples of the trained evolution time.
  const double tau = std::max(r.training.params.tau, 1e-3);
  const auto trace = run_purity_trace(r.training.params, QuantumState::basis(1, 1), linear_grid(0.0, 8.0 * tau, 801));
  r.extra["purity_returns_above_0.999"] = count_purity_returns(trace);
  r.extra["gamma_t"] = c.gamma * c.t;
  if (trace_out) *trace_out = trace;
  return r;
}

struct GroverRun {
  FidelityReport report;
  std::vector<std::vector<double>> probabilities;  // [marked][basis state]
};

/// Two-qubit Grover with the diffusion block replaced by the trained network.
inline GroverRun run_grover2(const ExperimentConfig& c) {
  GroverRun out;
  out.report = run_gate_experiment(c);
  const Protocol proto(out.report.training.params);
  const Eigen::Index dim = Eigen::Index{1} << c.n_qubits;
  bool marked_ok = true;
  nlohmann::json probs = nlohmann::json::array();
  for (Eigen::Index m = 0; m < dim; ++m) {
    const GateMatrix prep = compose_circuit(circuits::grover_preparation(c.n_qubits, m));
    const DensityMatrix rho = proto.output(prep.apply(QuantumState::basis(c.n_qubits, 0)));
    std::vector<double> p(dim);
    for (Eigen::Index k = 0; k < dim; ++k) p[k] = rho.matrix()(k, k).real();
    if (p[m] < 0.95) marked_ok = false;
    probs.push_back(p);
    out.probabilities.push_back(std::move(p));
  }
  out.report.extra["probabilities"] = probs;
  out.report.extra["marked_probability_ok"] = marked_ok;
  out.report.passed = out.report.passed && marked_ok;
  return out;
}

inline std::string probabilities_csv(const std::vector<std::vector<double>>& probs) {
  std::ostringstream os;
  os.precision(17);
  os << "marked";
  for (std::size_t k = 0; k < probs.size(); ++k) os << ",p" << k;
  os << '\n';
  for (std::size_t m = 0; m < probs.size(); ++m) {
    os << m;
    for (double p : probs[m]) os << ',' << p;
    os << '\n';
  }
  return os.str();
}

/// Three-qubit diffusion compression. The composed circuit must equal the
/// diffusion operator before any training happens.
inline FidelityReport run_grover3(const ExperimentConfig& c) {
  const double dev = phase_aligned_deviation(compose_circuit(circuits::by_name(c.target)).matrix(), grover_diffusion(c.n_qubits).matrix());
  if (dev > 1e-10) throw std::logic_error("run_grover3: composed circuit differs from the diffusion operator");
  FidelityReport r = run_gate_experiment(c);
  r.extra["circuit_deviation"] = dev;
  return r;
}

struct RobustnessRow {
  double delta = 0.0;
  double retrained = 0.0;  // mean test fidelity after retraining J
  double frozen = 0.0;     // mean test fidelity with the delta = 0 couplings
  double training_fitness = 0.0;
};

struct RobustnessResult {
  std::vector<RobustnessRow> rows;
  double baseline = 0.0;
  bool within_tolerance = false;
  bool ablation_lower = false;
  FidelityReport baseline_report;
};

/// Perturbs E_l and K by delta * U[-1, 1], retrains J from scratch for each
/// delta and records the evaluation mean; the frozen column reuses the
/// unperturbed couplings.
inline RobustnessResult run_robustness_sweep(const ExperimentConfig& c) {
  c.validate();
  const ChannelTarget target = experiment_target(c);
  const NetworkSpec base_network = experiment_network(c);
  const TrainingSet test = experiment_test_set(c, target);
  auto mean_on_test = [&](const ProtocolParams& p) { return fidelity_stats(per_state_fidelities(Protocol(p), test)).mean; };

  RobustnessResult out;
  const TrainResult base = train_experiment(c, base_network, target);
  out.baseline_report = evaluate_trained(c, target, base);
  out.baseline = out.baseline_report.stats.mean;
  for (std::size_t i = 0; i < c.deltas.size(); ++i) {
    const double delta = c.deltas[i];
    RobustnessRow row;
    row.delta = delta;
    if (delta == 0.0) {
      row.retrained = out.baseline;
      row.frozen = out.baseline;
      row.training_fitness = base.fitness;
    } else {
      const NetworkSpec perturbed = perturb_network(base_network, delta, derive_seed(c.seed, "robustness", i));
      const TrainResult retrained = train_experiment(c, perturbed, target);
      row.retrained = mean_on_test(retrained.params);
      row.training_fitness = retrained.fitness;
      ProtocolParams frozen = base.params;
      frozen.network = perturbed;
      row.frozen = mean_on_test(frozen);
    }
    out.rows.push_back(row);
  }
  out.within_tolerance = std::all_of(out.rows.begin(), out.rows.end(),
                                     [&](const RobustnessRow& r) { return std::abs(r.retrained - out.baseline) <= c.robustness_tolerance; });
  const auto largest = std::max_element(out.rows.begin(), out.rows.end(), [](const auto& a, const auto& b) { return a.delta < b.delta; });
  out.ablation_lower = largest != out.rows.end() && largest->delta > 0 && largest->frozen < largest->retrained;
  nlohmann::json rows = nlohmann::json::array();
  for (const RobustnessRow& r : out.rows)
    rows.push_back({{"delta", r.delta}, {"retrained", r.retrained}, {"frozen", r.frozen}, {"training_fitness", r.training_fitness}});
  out.baseline_report.experiment = c.name;
  out.baseline_report.extra["sweep"] = rows;
  out.baseline_report.extra["within_tolerance"] = out.within_tolerance;
  out.baseline_report.extra["ablation_lower"] = out.ablation_lower;
  out.baseline_report.passed = out.within_tolerance && out.ablation_lower;
  return out;
}

inline std::string robustness_csv(const RobustnessResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "delta,retrained_mean,frozen_mean,training_fitness\n";
  for (const RobustnessRow& row : r.rows) os << row.delta << ',' << row.retrained << ',' << row.frozen << ',' << row.training_fitness << '\n';
  return os.str();
}

// --- direct-model table ------------------------------------------------------------------

struct TableRow {
  std::string gate;
  DirectTwoQubitSpec spec;
};

inline std::vector<TableRow> direct_table_rows() {
  return {
      {"sswap", {0.923091, 1.0, 5.158696, 5.155802, 0.937275, 48.168039}},
      {"cnot", {140.703597, 1.0, 0.958346, 140.627941, 2.826258, 40.303524}},
      {"cy", {138.217022, 1.0, {-0.089054, -0.920161}, {0.079873, -138.295970}, 2.881602, 40.778441}},
      {"cz", {1.006724, 1.0, 1.094922, 0.932635, 117.958714, 45.402586}},
      {"siswap", {1.0, 1.0, 0.01, 0.01, 0.01, 1181.0}},
      {"swap", {1.0, 1.0, 1.5, 1.5, 42.8, 37.6}},
  };
}

struct TableCheck {
  std::string gate;
  double sampled_mean = 0.0;  // over Haar states
  double closed_form = 0.0;   // (|Tr(U_t^dag U)|^2 + d) / (d (d + 1))
  bool passed = false;
};

/// Mean overlap fidelity of every row over `n_states` Haar states.
inline std::vector<TableCheck> verify_direct_table(std::size_t n_states = 100000, std::uint64_t seed = 0,
                                                 const GateTable& table = GateTable::standard(), double threshold = 0.999) {
  std::vector<TableCheck> out;
  for (const TableRow& row : direct_table_rows()) {
    const Matrix u = direct_two_qubit_unitary(row.spec);
    const Matrix t = table.at(row.gate).matrix();
    Rng rng = make_stream(seed, "table:" + row.gate);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_states; ++i) {
      const QuantumState phi = haar_random_state(2, rng);
      sum += std::norm((t * phi.amplitudes()).dot(u * phi.amplitudes()));
    }
    TableCheck c;
    c.gate = row.gate;
    c.sampled_mean = sum / static_cast<double>(n_states);
    c.closed_form = average_gate_fidelity(t, u);
    c.passed = c.sampled_mean > threshold;
    out.push_back(c);
  }
  return out;
}

// --- output files -------------------------------------------------------------------------

/// Writes `contents` to `path` through a temporary file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string report_stem(const std::string& experiment, std::uint64_t seed) { return experiment + "-" + std::to_string(seed); }

}  // namespace qrc
