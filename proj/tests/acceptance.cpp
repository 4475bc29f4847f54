// Acceptance gate. `acceptance N` checks criterion N and prints one line
// "[PASS] N ..." or "[FAIL] N ..."; without arguments every criterion runs.
// Exit status is 0 only when every requested criterion passed.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qrc/experiments.hpp"

using namespace qrc;

namespace {

// Pinned tolerances.
constexpr double kTableThreshold = 0.999;
constexpr std::size_t kTableStates = 100000;
constexpr double kIdentityTol = 1e-10;
constexpr double kCircuitTol = 1e-10;
constexpr double kSingleQubitThreshold = 0.995;
constexpr double kTwoQubitThreshold = 0.98;
constexpr double kMarkovianThreshold = 0.98;
constexpr int kPurityReturns = 2;
constexpr double kGrover2Threshold = 0.98;
constexpr double kMarkedProbability = 0.95;
constexpr double kGrover3Threshold = 0.97;
constexpr double kRobustnessTolerance = 0.02;
constexpr int kTestStates = 2000;
constexpr int kPropertyInstances = 1000;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 5) {
  std::ostringstream os;
  os.precision(precision);
  os << std::fixed << v;
  return os.str();
}

// Training budget for the 256-dimensional runs. One objective evaluation
// costs ~15 ms on one core, so this is about a minute per seed.
void large_budget(ExperimentConfig& c) {
  c.ga.population = 24;
  c.ga.max_generations = 60;
  c.nm.max_evaluations = 1000;
  c.nm.restarts = 1;
}

// Best of the seeds, stopping at the first that clears the threshold.
template <typename Run>
std::pair<double, std::uint64_t> best_of_seeds(Run run, double threshold, std::string& log) {
  double best = -1.0;
  std::uint64_t best_seed = 0;
  for (std::uint64_t s : kSeeds) {
    const double v = run(s);
    log += " seed" + std::to_string(s) + "=" + fmt(v);
    if (v > best) {
      best = v;
      best_seed = s;
    }
    if (best >= threshold) break;
  }
  return {best, best_seed};
}

Outcome criterion1() {
  const auto rows = verify_direct_table(kTableStates, 0);
  Outcome o{true, "direct-model table, 1e5 Haar states:"};
  for (const TableCheck& c : rows) {
    o.pass = o.pass && c.sampled_mean > kTableThreshold;
    o.detail += " " + c.gate + "=" + fmt(c.sampled_mean);
  }
  return o;
}

Outcome criterion2() {
  Outcome o{true, "cNOT constructions, max deviation:"};
  for (const std::string& id : identity_names()) {
    const double d = verify_identity(id);
    o.pass = o.pass && d < kIdentityTol;
    std::ostringstream os;
    os << d;
    o.detail += " " + id + "=" + os.str();
  }
  return o;
}

Outcome criterion3() {
  const double toffoli = phase_aligned_deviation(compose_circuit(circuits::by_name("toffoli_decomposition")).matrix(), standard_gate("toffoli").matrix());
  const CircuitDescription g3 = circuits::by_name("grover3_diffusion");
  const double grover = phase_aligned_deviation(compose_circuit(g3).matrix(), grover_diffusion(3).matrix());
  std::ostringstream os;
  os << "toffoli deviation " << toffoli << ", 3-qubit diffusion deviation " << grover << " (" << g3.gates.size() << " gates)";
  return {toffoli < kCircuitTol && grover < kCircuitTol && g3.gates.size() == 29, os.str()};
}

Outcome criterion4() {
  Outcome o{true, "single-qubit gates, mean test fidelity (best of 3):"};
  for (const char* g : {"x", "y", "z", "h", "s", "t"}) {
    std::string log;
    const auto [best, seed] = best_of_seeds(
        [&](std::uint64_t s) {
          ExperimentConfig c = preset(std::string("fig3-") + g);
          c.seed = s;
          c.test_size = kTestStates;
          return run_gate_experiment(c).stats.mean;
        },
        kSingleQubitThreshold, log);
    o.pass = o.pass && best >= kSingleQubitThreshold;
    o.detail += std::string(" ") + g + "=" + fmt(best);
  }
  return o;
}

Outcome criterion5() {
  Outcome o{true, "two-qubit gates on a 6-site chain, mean test fidelity (best of 3):"};
  for (const char* g : {"cnot", "cy", "cz", "swap"}) {
    std::string log;
    const auto [best, seed] = best_of_seeds(
        [&](std::uint64_t s) {
          ExperimentConfig c = preset(std::string("fig2-") + g);
          c.seed = s;
          c.test_size = kTestStates;
          large_budget(c);
          return run_gate_experiment(c).stats.mean;
        },
        kTwoQubitThreshold, log);
    o.pass = o.pass && best >= kTwoQubitThreshold;
    o.detail += std::string(" ") + g + "=" + fmt(best);
    std::cerr << "  criterion 5 " << g << ":" << log << '\n';
  }
  return o;
}

Outcome criterion6() {
  std::string log;
  int returns = 0;
  const auto [best, seed] = best_of_seeds(
      [&](std::uint64_t s) {
        ExperimentConfig c = preset("fig4");
        c.seed = s;
        c.test_size = kTestStates;
        const FidelityReport r = run_markovian_experiment(c);
        returns = r.extra.at("purity_returns_above_0.999").get<int>();
        return r.stats.mean;
      },
      kMarkovianThreshold, log);
  return {best >= kMarkovianThreshold && returns >= kPurityReturns,
          "amplitude damping (gamma t = 0.5), mean Uhlmann fidelity " + fmt(best) + ", purity returns above 0.999: " + std::to_string(returns)};
}

Outcome criterion7() {
  // Grover-2: a seed counts only when the mean and every marked probability clear their bars.
  double g2 = 0.0, g2_marked = 0.0;
  bool g2_pass = false;
  std::string log2;
  for (std::uint64_t s : kSeeds) {
    ExperimentConfig c = preset("fig5");
    c.seed = s;
    c.test_size = kTestStates;
    large_budget(c);
    const GroverRun run = run_grover2(c);
    double worst = 1.0;
    for (std::size_t m = 0; m < run.probabilities.size(); ++m) worst = std::min(worst, run.probabilities[m][m]);
    const double mean = run.report.stats.mean;
    log2 += " seed" + std::to_string(s) + "=" + fmt(mean) + "/" + fmt(worst);
    const bool pass = mean >= kGrover2Threshold && worst >= kMarkedProbability;
    if (pass || (!g2_pass && mean > g2)) {
      g2 = mean;
      g2_marked = worst;
    }
    g2_pass = g2_pass || pass;
    if (g2_pass) break;
  }
  std::cerr << "  criterion 7 grover2 (mean/min marked):" << log2 << '\n';
  std::string log3;
  const auto [g3, s3] = best_of_seeds(
      [&](std::uint64_t s) {
        ExperimentConfig c = preset("fig6");
        c.seed = s;
        c.test_size = kTestStates;
        large_budget(c);
        return run_grover3(c).stats.mean;
      },
      kGrover3Threshold, log3);
  std::cerr << "  criterion 7 grover3:" << log3 << '\n';
  return {g2_pass && g3 >= kGrover3Threshold,
          "Grover-2 mean fidelity " + fmt(g2) + " (min marked probability " + fmt(g2_marked) + "), Grover-3 mean fidelity " + fmt(g3)};
}

Outcome criterion8() {
  ExperimentConfig c = preset("robustness");
  c.seed = 1;
  c.test_size = kTestStates;
  c.deltas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  c.robustness_tolerance = kRobustnessTolerance;
  large_budget(c);
  const RobustnessResult r = run_robustness_sweep(c);
  std::string detail = "cNOT sweep (delta: retrained/frozen):";
  for (const RobustnessRow& row : r.rows) detail += " " + fmt(row.delta, 1) + ": " + fmt(row.retrained, 4) + "/" + fmt(row.frozen, 4);
  return {r.within_tolerance && r.ablation_lower, detail};
}

// --- criterion 9 helpers ---------------------------------------------------------

bool valid_density(const Matrix& rho, double tol = 1e-10) {
  if (std::abs(rho.trace() - 1.0) > tol) return false;
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
  return es.eigenvalues().minCoeff() > -tol;
}

Matrix random_hermitian(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> n;
  Matrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = cplx(n(rng), n(rng));
  return (m + m.adjoint()) / 2.0;
}

ProtocolParams random_protocol(int nq, int ns, std::uint64_t seed, Rng& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  ProtocolParams p;
  p.network = draw_network(ns, 2.0, 1.0, chain_adjacency(ns), cplx(u(rng), u(rng)), seed);
  p.layout = RegisterLayout(nq, ns);
  Matrix J(nq, ns);
  for (Eigen::Index i = 0; i < J.size(); ++i) J(i) = cplx(u(rng), u(rng));
  p.coupling = CouplingMatrix(J);
  p.tau = std::abs(u(rng));
  p.convention = (rng() & 1) ? LadderConvention::ladder : LadderConvention::pauli_sum;
  return p;
}

Outcome criterion9() {
  Rng rng(derive_seed(20240, "acceptance-properties"));
  int failures = 0;
  std::string detail;

  // qcore: evolution is unitary and preserves the norm; partial traces are states.
  int qcore_bad = 0;
  for (int i = 0; i < kPropertyInstances; ++i) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const Eigen::Index d = Eigen::Index{1} << n;
    const Eigensystem es{HermitianOperator(random_hermitian(d, rng))};
    const double t = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
    const QuantumState psi = haar_random_state(n, rng);
    const QuantumState out = evolve(es, t, psi);
    const std::vector<int> keep = {0};
    if (unitarity_defect(es.unitary(t)) > 1e-10 || std::abs(out.amplitudes().norm() - 1.0) > 1e-12 ||
        !valid_density(partial_trace(out, keep).matrix()))
      ++qcore_bad;
  }
  detail += "qcore " + std::to_string(kPropertyInstances - qcore_bad) + "/" + std::to_string(kPropertyInstances);
  failures += qcore_bad;

  // model: protocol outputs are density matrices.
  int model_bad = 0;
  for (int i = 0; i < kPropertyInstances; ++i) {
    const int nq = 1 + static_cast<int>(rng() % 2);
    const int ns = 1 + static_cast<int>(rng() % 3);
    const ProtocolParams p = random_protocol(nq, ns, rng(), rng);
    const DensityMatrix rho = Protocol(p).output(haar_random_state(nq, rng));
    if (!valid_density(rho.matrix())) ++model_bad;
  }
  detail += ", model " + std::to_string(kPropertyInstances - model_bad) + "/" + std::to_string(kPropertyInstances);
  failures += model_bad;

  // gates: random circuits compose to unitaries; the damping channel maps states to states.
  int gates_bad = 0;
  const std::vector<std::string> one = {"x", "y", "z", "h", "s", "t", "sdg", "tdg"};
  const std::vector<std::string> two = {"cnot", "cy", "cz", "swap", "sswap", "siswap"};
  for (int i = 0; i < kPropertyInstances; ++i) {
    CircuitDescription c;
    c.n_qubits = 3;
    for (int k = 0; k < 8; ++k) {
      const int a = static_cast<int>(rng() % 3);
      if (rng() & 1) {
        c.gates.push_back({one[rng() % one.size()], {a}});
      } else {
        const int b = (a + 1 + static_cast<int>(rng() % 2)) % 3;
        c.gates.push_back({two[rng() % two.size()], {a, b}});
      }
    }
    const double angle = std::uniform_real_distribution<double>(-10.0, 10.0)(rng);
    const double gamma = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
    const DensityMatrix damped = amplitude_damping_output(DensityMatrix::pure(haar_random_state(1, rng)), gamma, 0.5);
    if (unitarity_defect(compose_circuit(c).matrix()) > 1e-10 || unitarity_defect(rotation(Axis::x, angle).matrix()) > 1e-12 ||
        !valid_density(damped.matrix()))
      ++gates_bad;
  }
  detail += ", gates " + std::to_string(kPropertyInstances - gates_bad) + "/" + std::to_string(kPropertyInstances);
  failures += gates_bad;

  // GA elitism: the best fitness never drops between recorded generations.
  int histories = 0, elitism_bad = 0;
  for (const char* name : {"fig3-x", "fig3-h", "fig3-z", "fig4", "figS1-z"}) {
    for (std::uint64_t s : kSeeds) {
      ExperimentConfig c = preset(name);
      c.seed = s;
      c.test_size = 10;
      if (c.kind == ExperimentKind::single_qubit_6site) c.ga.max_generations = 10;
      const ChannelTarget target = experiment_target(c);
      const TrainResult r = train_experiment(c, experiment_network(c), target);
      ++histories;
      for (std::size_t g = 1; g < r.history.size(); ++g)
        if (r.history[g].best < r.history[g - 1].best) {
          ++elitism_bad;
          break;
        }
    }
  }
  detail += ", elitism " + std::to_string(histories - elitism_bad) + "/" + std::to_string(histories) + " histories";
  failures += elitism_bad;

  // Reproducibility: identical reports from identical (config, seed).
  int repro_bad = 0;
  for (const char* name : {"fig3-h", "fig4", "figS1-y"}) {
    ExperimentConfig c = preset(name);
    c.seed = 11;
    c.test_size = 100;
    const std::string a = to_json(c.kind == ExperimentKind::markovian ? run_markovian_experiment(c) : run_gate_experiment(c)).dump();
    const std::string b = to_json(c.kind == ExperimentKind::markovian ? run_markovian_experiment(c) : run_gate_experiment(c)).dump();
    if (a != b) ++repro_bad;
  }
  detail += ", reproducible " + std::to_string(3 - repro_bad) + "/3";
  failures += repro_bad;
  return {failures == 0, detail};
}

const std::vector<std::function<Outcome()>> kCriteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::stoi(argv[i]));
  if (which.empty())
    for (int i = 1; i <= static_cast<int>(kCriteria.size()); ++i) which.push_back(i);

  bool all = true;
  for (int n : which) {
    if (n < 1 || n > static_cast<int>(kCriteria.size())) {
      std::cerr << "no criterion " << n << '\n';
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = kCriteria[n - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << n << ": " << o.detail << " (" << fmt(secs, 1) << " s)" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
