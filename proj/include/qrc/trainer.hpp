// Learning engine: average-fidelity objective, genetic algorithm with the
// two-parent cross-breeding rule, Nelder-Mead refinement, and the combined
// training schedule.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrc/gates.hpp"
#include "qrc/model.hpp"
#include "qrc/qcore.hpp"
#include "qrc/rng.hpp"

namespace qrc {

using ParamVector = Eigen::VectorXd;

/// Fitness to maximize.
using Objective = std::function<double(const ParamVector&)>;

// --- training set -----------------------------------------------------------

enum class MixedFidelity { uhlmann };

inline std::string to_string(MixedFidelity) { return "uhlmann"; }

struct TrainingSet {
  std::vector<QuantumState> inputs;
  std::vector<QuantumState> ideal_states;   // unitary targets
  std::vector<DensityMatrix> ideal_mixed;   // channel targets

  bool mixed() const { return !ideal_mixed.empty(); }
  std::size_t size() const { return inputs.size(); }

  void validate() const {
    if (inputs.empty()) throw std::invalid_argument("TrainingSet: empty");
    const std::size_t ideals = mixed() ? ideal_mixed.size() : ideal_states.size();
    if (ideals != inputs.size() || (!ideal_mixed.empty() && !ideal_states.empty()))
      throw std::invalid_argument("TrainingSet: inputs and ideal outputs do not pair up");
    const Eigen::Index dim = inputs.front().dim();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Eigen::Index d = mixed() ? ideal_mixed[i].dim() : ideal_states[i].dim();
      if (inputs[i].dim() != dim || d != dim) throw std::invalid_argument("TrainingSet: dimension mismatch");
    }
  }
};

inline TrainingSet make_training_set(const ChannelTarget& target, std::vector<QuantumState> inputs) {
  TrainingSet set;
  for (const QuantumState& in : inputs) {
    if (target.is_unitary()) {
      set.ideal_states.push_back(target.gate.apply(in));
    } else {
      set.ideal_mixed.push_back(amplitude_damping_output(DensityMatrix::pure(in), target.gamma, target.t));
    }
  }
  set.inputs = std::move(inputs);
  set.validate();
  return set;
}

/// Haar inputs drawn from the run's "train" stream.
inline TrainingSet make_training_set(const ChannelTarget& target, std::size_t count, std::uint64_t seed) {
  return make_training_set(target, haar_sample(target.n_qubits(), count, seed, "train"));
}

/// Fidelity of one protocol output against the j-th ideal.
inline double pair_fidelity(const Protocol& protocol, const TrainingSet& set, std::size_t j) {
  if (set.mixed()) return uhlmann_fidelity(set.ideal_mixed[j], protocol.output(set.inputs[j]));
  return protocol.fidelity(set.inputs[j], set.ideal_states[j]);
}

inline std::vector<double> per_state_fidelities(const Protocol& protocol, const TrainingSet& set) {
  set.validate();
  if (set.inputs.front().dim() != protocol.layout().qubit_dim())
    throw std::invalid_argument("average_fidelity: training set does not match the qubit register");
  std::vector<double> f(set.size());
  for (std::size_t j = 0; j < set.size(); ++j) f[j] = pair_fidelity(protocol, set, j);
  return f;
}

/// Mean fidelity over the training set.
inline double average_fidelity(const Protocol& protocol, const TrainingSet& set) {
  const std::vector<double> f = per_state_fidelities(protocol, set);
  return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
}

inline double average_fidelity(const ProtocolParams& params, const TrainingSet& set) {
  return average_fidelity(Protocol(params), set);
}

// --- parameter encoding -----------------------------------------------------

/// Which protocol parameters join the optimization vector.
enum class Trainables {
  coupling,           ///< J only
  coupling_drive_tau  ///< J, per-site P_l and tau (very small networks)
};

inline std::string to_string(Trainables t) { return t == Trainables::coupling ? "J" : "J,P,tau"; }

inline Trainables trainables_from_string(const std::string& s) {
  if (s == "J") return Trainables::coupling;
  if (s == "J,P,tau") return Trainables::coupling_drive_tau;
  throw std::invalid_argument("unknown trainable set '" + s + "'");
}

using CouplingMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Maps protocol parameters to a flat real vector: interleaved (Re, Im) of
/// every unmasked J_kl in row-major order, then (Re, Im) of each P_l, then
/// tau (decoded as |x|).
class ParameterCodec {
 public:
  ParameterCodec(ProtocolParams base, Trainables trainables, std::optional<CouplingMask> mask = std::nullopt)
      : base_(std::move(base)), trainables_(trainables) {
    base_.validate();
    mask_ = mask.value_or(CouplingMask::Constant(base_.layout.n_qubits, base_.layout.n_sites, true));
    if (mask_.rows() != base_.layout.n_qubits || mask_.cols() != base_.layout.n_sites)
      throw std::invalid_argument("ParameterCodec: mask shape mismatch");
    if (trainables_ == Trainables::coupling_drive_tau && base_.network.site_drives.empty())
      base_.network.site_drives.assign(base_.network.n_sites, base_.network.P);
    // Masked-out couplings are pinned to zero.
    for (int k = 0; k < mask_.rows(); ++k)
      for (int l = 0; l < mask_.cols(); ++l)
        if (!mask_(k, l)) base_.coupling.J(k, l) = 0.0;
  }

  Trainables trainables() const { return trainables_; }
  const CouplingMask& mask() const { return mask_; }
  const ProtocolParams& base() const { return base_; }

  Eigen::Index coupling_size() const { return 2 * mask_.count(); }
  Eigen::Index size() const {
    Eigen::Index n = coupling_size();
    if (trainables_ == Trainables::coupling_drive_tau) n += 2 * base_.network.n_sites + 1;
    return n;
  }

  ParamVector encode(const ProtocolParams& p) const {
    ParamVector x(size());
    Eigen::Index i = 0;
    for (int k = 0; k < mask_.rows(); ++k)
      for (int l = 0; l < mask_.cols(); ++l)
        if (mask_(k, l)) {
          x(i++) = p.coupling.J(k, l).real();
          x(i++) = p.coupling.J(k, l).imag();
        }
    if (trainables_ == Trainables::coupling_drive_tau) {
      for (int l = 0; l < p.network.n_sites; ++l) {
        x(i++) = p.network.drive(l).real();
        x(i++) = p.network.drive(l).imag();
      }
      x(i++) = p.tau;
    }
    return x;
  }

  ProtocolParams decode(const ParamVector& x) const {
    if (x.size() != size()) throw std::invalid_argument("ParameterCodec: vector size mismatch");
    if (!x.allFinite()) throw std::invalid_argument("ParameterCodec: non-finite parameter");
    ProtocolParams p = base_;
    Eigen::Index i = 0;
    for (int k = 0; k < mask_.rows(); ++k)
      for (int l = 0; l < mask_.cols(); ++l)
        if (mask_(k, l)) {
          p.coupling.J(k, l) = cplx(x(i), x(i + 1));
          i += 2;
        }
    if (trainables_ == Trainables::coupling_drive_tau) {
      for (int l = 0; l < p.network.n_sites; ++l, i += 2) p.network.site_drives[l] = cplx(x(i), x(i + 1));
      p.tau = std::abs(x(i++));
    }
    return p;
  }

  /// Characteristic magnitude of each parameter, used for initial spread
  /// and mutation: the coupling scale for J, |P| for drives, tau for tau.
  ParamVector scales(double coupling_scale) const {
    ParamVector s(size());
    s.head(coupling_size()).setConstant(coupling_scale);
    if (trainables_ == Trainables::coupling_drive_tau) {
      Eigen::Index i = coupling_size();
      for (int l = 0; l < base_.network.n_sites; ++l) {
        const double p = std::max(std::abs(base_.network.drive(l)), 0.1 * coupling_scale);
        s(i++) = p;
        s(i++) = p;
      }
      s(i) = std::max(base_.tau, 1e-3);
    }
    return s;
  }

 private:
  ProtocolParams base_;
  Trainables trainables_;
  CouplingMask mask_;
};

inline Objective make_objective(const ParameterCodec& codec, const TrainingSet& set) {
  return [&codec, &set](const ParamVector& x) { return average_fidelity(codec.decode(x), set); };
}

// --- genetic algorithm -------------------------------------------------------

struct Individual {
  ParamVector params;
  std::optional<double> fitness;
};

using Population = std::vector<Individual>;

struct GAConfig {
  int population = 24;
  double mutation = 0.1;          // fraction of each parameter's scale
  int max_generations = 300;
  double fitness_target = 0.999;
  std::uint64_t seed = 0;
  Trainables trainables = Trainables::coupling;
  double coupling_scale = 1.0;    // spread of the initial J population
  int halve_after = 50;           // stagnant generations before halving the mutation
  int stop_after = 100;           // stagnant generations before handing over to Nelder-Mead

  void validate() const {
    if (population < 2) throw std::invalid_argument("GAConfig: population must be >= 2");
    if (!(mutation >= 0)) throw std::invalid_argument("GAConfig: mutation must be >= 0");
    if (max_generations < 0) throw std::invalid_argument("GAConfig: max_generations must be >= 0");
    if (!(coupling_scale >= 0)) throw std::invalid_argument("GAConfig: coupling_scale must be >= 0");
    if (halve_after < 1 || stop_after < 1) throw std::invalid_argument("GAConfig: stagnation windows must be >= 1");
  }
};

/// Gaussian population around `center` with per-parameter spread.
inline Population initial_population(int size, const ParamVector& center, const ParamVector& spread, Rng& rng) {
  if (center.size() != spread.size()) throw std::invalid_argument("initial_population: shape mismatch");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Population pop(size);
  for (Individual& ind : pop) {
    ind.params = center;
    for (Eigen::Index i = 0; i < center.size(); ++i) ind.params(i) += spread(i) * gauss(rng);
  }
  return pop;
}

inline void evaluate(Population& pop, const Objective& objective) {
  for (Individual& ind : pop)
    if (!ind.fitness) {
      const double f = objective(ind.params);
      if (!std::isfinite(f)) throw std::domain_error("objective returned a non-finite fitness");
      ind.fitness = f;
    }
}

/// Indices sorted by descending fitness; ties keep population order.
inline std::vector<std::size_t> ranking(const Population& pop) {
  std::vector<std::size_t> idx(pop.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return *pop[a].fitness > *pop[b].fitness; });
  return idx;
}

/// One generation: evaluate, keep the best individual, and breed the rest
/// from the two fittest parents as (p + q)/2 + delta * N(0, 1), with delta
/// scaled per parameter by `scale`.
inline Population ga_step(Population pop, const ParamVector& delta, const Objective& objective, Rng& rng) {
  if (pop.size() < 2) throw std::invalid_argument("ga_step: population must have at least two individuals");
  evaluate(pop, objective);
  const auto order = ranking(pop);
  const Individual& p = pop[order[0]];
  const Individual& q = pop[order[1]];
  if (delta.size() != p.params.size()) throw std::invalid_argument("ga_step: mutation vector size mismatch");
  const ParamVector mid = 0.5 * (p.params + q.params);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Population next;
  next.reserve(pop.size());
  next.push_back(p);
  while (next.size() < pop.size()) {
    Individual child{mid, std::nullopt};
    for (Eigen::Index i = 0; i < mid.size(); ++i)
      if (delta(i) != 0.0) child.params(i) += delta(i) * gauss(rng);
    next.push_back(std::move(child));
  }
  return next;
}

inline Population ga_step(Population pop, double delta, const Objective& objective, Rng& rng) {
  const Eigen::Index n = pop.empty() ? 0 : pop.front().params.size();
  return ga_step(std::move(pop), ParamVector::Constant(n, delta), objective, rng);
}

struct GenerationRecord {
  int generation = 0;
  double best = 0.0;
  double mean = 0.0;
};

struct GAResult {
  Individual best;
  std::vector<GenerationRecord> history;
  bool reached_target = false;
};

/// Runs generations until the fitness target, the generation cap, or
/// `stop_after` stagnant generations. The mutation is halved after every
/// `halve_after` stagnant generations.
inline GAResult run_ga(Population pop, const GAConfig& cfg, const ParamVector& scale, const Objective& objective, Rng& rng) {
  cfg.validate();
  if (static_cast<int>(pop.size()) != cfg.population) throw std::invalid_argument("run_ga: population size mismatch");
  GAResult result;
  ParamVector delta = cfg.mutation * scale;
  double best = -std::numeric_limits<double>::infinity();
  int stagnant = 0;
  for (int gen = 0;; ++gen) {
    evaluate(pop, objective);
    const auto order = ranking(pop);
    double mean = 0.0;
    for (const Individual& ind : pop) mean += *ind.fitness;
    mean /= static_cast<double>(pop.size());
    const Individual& top = pop[order[0]];
    result.history.push_back({gen, *top.fitness, mean});
    if (*top.fitness > best) {
      if (*top.fitness > best + 1e-12) stagnant = 0;
      best = *top.fitness;
      result.best = top;
    } else {
      ++stagnant;
      if (stagnant % cfg.halve_after == 0) delta *= 0.5;
    }
    if (best >= cfg.fitness_target) {
      result.reached_target = true;
      break;
    }
    if (gen >= cfg.max_generations || stagnant >= cfg.stop_after) break;
    pop = ga_step(std::move(pop), delta, objective, rng);
  }
  return result;
}

// --- Nelder-Mead ---------------------------------------------------------------

struct NelderMeadOptions {
  double initial_step = 0.1;   // simplex edge along each axis, times `scale`
  int max_evaluations = 2000;
  double f_tol = 1e-12;        // spread of simplex values
  double x_tol = 1e-10;        // simplex diameter
  bool adaptive = true;        // dimension-dependent coefficients
  int restarts = 2;            // re-seed the simplex around the best point
};

struct NelderMeadResult {
  ParamVector x;
  double value = 0.0;  // objective (maximized)
  int evaluations = 0;
  bool converged = false;  // false when the evaluation budget ran out
};

namespace detail {

// Nelder-Mead minimization of f.
inline NelderMeadResult nm_minimize(const std::function<double(const ParamVector&)>& f, const ParamVector& start,
                                    const ParamVector& step, const NelderMeadOptions& opt) {
  const Eigen::Index n = start.size();
  if (n == 0) return {start, f(start), 1, true};
  const double dn = static_cast<double>(n);
  const double alpha = 1.0;
  const double gamma = opt.adaptive ? 1.0 + 2.0 / dn : 2.0;
  const double rho = opt.adaptive ? 0.75 - 1.0 / (2.0 * dn) : 0.5;
  const double sigma = opt.adaptive ? 1.0 - 1.0 / dn : 0.5;

  int evals = 0;
  auto eval = [&](const ParamVector& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  ParamVector best_x = start;
  double best_f = eval(start);
  bool converged = false;

  for (int round = 0; round <= opt.restarts && evals < opt.max_evaluations; ++round) {
    std::vector<ParamVector> xs(n + 1, best_x);
    std::vector<double> fs(n + 1, best_f);
    for (Eigen::Index i = 0; i < n; ++i) {
      xs[i + 1](i) += step(i) != 0.0 ? step(i) : 1e-3;
      fs[i + 1] = eval(xs[i + 1]);
    }
    std::vector<std::size_t> idx(n + 1);
    converged = false;
    while (evals < opt.max_evaluations) {
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
      const std::size_t lo = idx[0], hi = idx[n], second = idx[n - 1];
      double diameter = 0.0;
      for (std::size_t j = 1; j <= static_cast<std::size_t>(n); ++j)
        diameter = std::max(diameter, (xs[idx[j]] - xs[lo]).cwiseAbs().maxCoeff());
      if (std::abs(fs[hi] - fs[lo]) <= opt.f_tol && diameter <= opt.x_tol) {
        converged = true;
        break;
      }
      if (diameter <= opt.x_tol * 1e-3) {
        converged = true;
        break;
      }
      ParamVector centroid = ParamVector::Zero(n);
      for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) centroid += xs[idx[j]];
      centroid /= dn;

      const ParamVector xr = centroid + alpha * (centroid - xs[hi]);
      const double fr = eval(xr);
      if (fr < fs[lo]) {
        const ParamVector xe = centroid + gamma * (xr - centroid);
        const double fe = eval(xe);
        if (fe < fr) {
          xs[hi] = xe;
          fs[hi] = fe;
        } else {
          xs[hi] = xr;
          fs[hi] = fr;
        }
        continue;
      }
      if (fr < fs[second]) {
        xs[hi] = xr;
        fs[hi] = fr;
        continue;
      }
      const bool outside = fr < fs[hi];
      const ParamVector xc = outside ? ParamVector(centroid + rho * (xr - centroid)) : ParamVector(centroid + rho * (xs[hi] - centroid));
      const double fc = eval(xc);
      if (fc < (outside ? fr : fs[hi])) {
        xs[hi] = xc;
        fs[hi] = fc;
        continue;
      }
      for (std::size_t j = 0; j <= static_cast<std::size_t>(n); ++j) {
        if (j == lo) continue;
        xs[j] = xs[lo] + sigma * (xs[j] - xs[lo]);
        fs[j] = eval(xs[j]);
      }
    }
    for (std::size_t j = 0; j <= static_cast<std::size_t>(n); ++j)
      if (fs[j] < best_f) {
        best_f = fs[j];
        best_x = xs[j];
      }
  }
  return {best_x, best_f, evals, converged};
}

}  // namespace detail

/// Maximizes `objective` from `start`; never returns a point worse than the
/// start. `scale` sets the per-parameter size of the initial simplex.
inline NelderMeadResult nelder_mead(const ParamVector& start, const Objective& objective, const NelderMeadOptions& opt,
                                    const std::optional<ParamVector>& scale = std::nullopt) {
  if (!start.allFinite()) throw std::invalid_argument("nelder_mead: non-finite start");
  const ParamVector s = scale.value_or(ParamVector::Ones(start.size()));
  if (s.size() != start.size()) throw std::invalid_argument("nelder_mead: scale size mismatch");
  NelderMeadResult r = detail::nm_minimize([&](const ParamVector& x) { return -objective(x); }, start, opt.initial_step * s, opt);
  r.value = -r.value;
  return r;
}

/// Minimization form, for plain cost functions.
inline NelderMeadResult nelder_mead_minimize(const ParamVector& start, const std::function<double(const ParamVector&)>& cost,
                                             const NelderMeadOptions& opt) {
  if (!start.allFinite()) throw std::invalid_argument("nelder_mead: non-finite start");
  return detail::nm_minimize(cost, start, ParamVector::Constant(start.size(), opt.initial_step), opt);
}

// --- combined schedule ------------------------------------------------------------

struct TrainOptions {
  GAConfig ga;
  NelderMeadOptions nm;
  std::optional<CouplingMask> mask;
  // Starting point for J; zero when absent.
  std::optional<CouplingMatrix> initial_coupling;
};

struct TrainResult {
  ProtocolParams params;
  double fitness = 0.0;
  std::vector<GenerationRecord> history;
  int ga_generations = 0;
  int nm_evaluations = 0;
  bool nm_converged = false;
  bool reached_target = false;
};

/// GA over the trainable parameters followed by Nelder-Mead from the best
/// individual. `base` supplies the fixed network, tau, layout and convention.
inline TrainResult train_gate(const ProtocolParams& base, const TrainingSet& set, const TrainOptions& options) {
  set.validate();
  options.ga.validate();
  if (set.inputs.front().dim() != base.layout.qubit_dim()) throw std::invalid_argument("train_gate: training set does not match the register");
  ProtocolParams start = base;
  if (options.initial_coupling) start.coupling = *options.initial_coupling;
  const ParameterCodec codec(start, options.ga.trainables, options.mask);
  const Objective objective = make_objective(codec, set);
  const ParamVector center = codec.encode(codec.base());
  const ParamVector scale = codec.scales(options.ga.coupling_scale);

  Rng rng = make_stream(options.ga.seed, "ga");
  ParamVector spread = scale;
  // J starts spread at its full scale around the given coupling; P and tau
  // start near their configured values.
  spread.tail(spread.size() - codec.coupling_size()) *= options.ga.mutation;
  Population pop = initial_population(options.ga.population, center, spread, rng);
  // The configured starting point itself competes in generation 0.
  pop.front().params = center;

  TrainResult result;
  GAResult ga = run_ga(std::move(pop), options.ga, scale, objective, rng);
  result.history = ga.history;
  result.ga_generations = static_cast<int>(ga.history.size());
  Individual best = ga.best;

  if (!ga.reached_target && options.nm.max_evaluations > 0) {
    const NelderMeadResult nm = nelder_mead(best.params, objective, options.nm, scale);
    result.nm_evaluations = nm.evaluations;
    result.nm_converged = nm.converged;
    if (nm.value > *best.fitness) best = {nm.x, nm.value};
  }
  result.params = codec.decode(best.params);
  result.fitness = *best.fitness;
  result.reached_target = result.fitness >= options.ga.fitness_target;
  return result;
}

/// Coarse (P, tau) scan: a short training run per cell, best cell returned.
struct RegimeCell {
  cplx P;
  double tau = 0.0;
  double fitness = 0.0;
};

inline std::vector<RegimeCell> scan_regime(const ProtocolParams& base, const TrainingSet& set, const std::vector<cplx>& drives,
                                           const std::vector<double>& taus, const TrainOptions& options) {
  std::vector<RegimeCell> cells;
  for (cplx p : drives)
    for (double tau : taus) {
      ProtocolParams cell = base;
      cell.network.P = p;
      cell.network.site_drives.clear();
      cell.tau = tau;
      const TrainResult r = train_gate(cell, set, options);
      cells.push_back({p, tau, r.fitness});
    }
  std::stable_sort(cells.begin(), cells.end(), [](const RegimeCell& a, const RegimeCell& b) { return a.fitness > b.fitness; });
  return cells;
}

}  // namespace qrc
