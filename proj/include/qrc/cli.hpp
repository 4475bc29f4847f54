// Command-line front end: train, eval, verify and experiment subcommands.
// Exit codes: 0 pass, 1 check failed, 2 usage or unreadable input,
// 3 result under the configured threshold.

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qrc/experiments.hpp"

namespace qrc::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kPass = 0, kCheckFailed = 1, kUsage = 2, kBelowThreshold = 3 };

struct RunManifest {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_from_entropy = false;
  std::string output_dir;
  std::string version = kVersion;
  std::string timestamp;
};

/// UTC ISO-8601. SOURCE_DATE_EPOCH pins the value so artifacts can be
/// compared byte for byte.
inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      now = static_cast<std::time_t>(std::stoll(sde));
    } catch (const std::exception&) {
    }
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"config_path", m.config_path}, {"seed", m.seed},           {"seed_from_entropy", m.seed_from_entropy},
          {"output_dir", m.output_dir},   {"version", m.version}, {"timestamp", m.timestamp}};
}

inline std::filesystem::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("QN_OUT_DIR"); env && *env) return env;
  return "out";
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Output files are write-once: an existing file is an error unless forced.
class OutputWriter {
 public:
  OutputWriter(std::filesystem::path dir, bool force) : dir_(std::move(dir)), force_(force) {}

  std::filesystem::path write(const std::string& file, const std::string& contents) {
    const std::filesystem::path path = dir_ / file;
    if (!force_ && std::filesystem::exists(path)) throw UsageError(path.string() + " already exists (use --force to overwrite)");
    write_file_atomic(path, contents);
    written_.push_back(path);
    return path;
  }

  std::filesystem::path write_json(const std::string& file, const nlohmann::json& j) { return write(file, j.dump(2) + "\n"); }

  const std::vector<std::filesystem::path>& written() const { return written_; }

 private:
  std::filesystem::path dir_;
  bool force_;
  std::vector<std::filesystem::path> written_;
};

// --- model files ---------------------------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) throw std::invalid_argument("matrix: empty");
  Matrix m(rows, rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != rows) throw std::invalid_argument("matrix: not square");
    for (Eigen::Index c = 0; c < rows; ++c) m(r, c) = complex_from_json(j.at(r).at(c));
  }
  return m;
}

inline nlohmann::json to_json(const ChannelTarget& t) {
  if (t.is_unitary()) return {{"kind", "unitary"}, {"name", t.name}, {"matrix", matrix_to_json(t.gate.matrix())}};
  return {{"kind", "amplitude_damping"}, {"gamma", t.gamma}, {"t", t.t}};
}

inline ChannelTarget channel_target_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "unitary") return ChannelTarget::unitary(j.at("name").get<std::string>(), GateMatrix(matrix_from_json(j.at("matrix"))));
  if (kind == "amplitude_damping") return ChannelTarget::amplitude_damping(j.at("gamma").get<double>(), j.at("t").get<double>());
  throw std::invalid_argument("unknown target kind '" + kind + "'");
}

struct ModelFile {
  std::string experiment;
  ChannelTarget target;
  ProtocolParams params;
  double fitness = 0.0;
};

inline nlohmann::json model_to_json(const ModelFile& m, const RunManifest& manifest) {
  return {{"schema_version", kConfigSchemaVersion},
          {"experiment", m.experiment},
          {"target", to_json(m.target)},
          {"protocol", to_json(m.params)},
          {"training_fitness", m.fitness},
          {"manifest", to_json(manifest)}};
}

inline ModelFile model_from_json(const nlohmann::json& j) {
  ModelFile m;
  m.experiment = j.at("experiment").get<std::string>();
  m.target = channel_target_from_json(j.at("target"));
  m.params = protocol_from_json(j.at("protocol"));
  m.fitness = j.value("training_fitness", 0.0);
  if (m.target.n_qubits() != m.params.layout.n_qubits) throw std::invalid_argument("model: target arity does not match n_qubits");
  return m;
}

// --- commands ------------------------------------------------------------------

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
};

inline RunManifest make_manifest(const std::string& config_path, std::uint64_t seed, bool from_entropy, const std::filesystem::path& dir) {
  RunManifest m;
  m.config_path = config_path;
  m.seed = seed;
  m.seed_from_entropy = from_entropy;
  m.output_dir = dir.string();
  m.timestamp = utc_timestamp();
  return m;
}

/// --seed wins, then a "seed" key in the config, then fresh entropy.
inline std::pair<std::uint64_t, bool> resolve_seed(const std::optional<std::uint64_t>& flag, const nlohmann::json* config) {
  if (flag) return {*flag, false};
  if (config && config->contains("seed")) return {config->at("seed").get<std::uint64_t>(), false};
  return {entropy_seed(), true};
}

inline nlohmann::json report_json(const FidelityReport& r, const RunManifest& m) {
  nlohmann::json j = to_json(r);
  j["manifest"] = to_json(m);
  return j;
}

inline void print_summary(const FidelityReport& r, std::ostream& out) {
  out << std::setprecision(6) << r.experiment << ": train " << r.training_fitness << ", test mean " << r.stats.mean << " (min "
      << r.stats.min << ", n " << r.values.size() << "), threshold " << r.config.threshold << (r.passed ? " PASS" : " BELOW") << '\n';
}

struct TrainArgs {
  Common common;
  std::string config;
};

inline int cmd_train(const TrainArgs& a, Streams io) {
  const nlohmann::json j = read_json_file(a.config);
  const auto [seed, from_entropy] = resolve_seed(a.common.seed, &j);
  ExperimentConfig c;
  try {
    c = config_from_json(j);
  } catch (const std::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  c.seed = seed;
  const std::filesystem::path dir = output_root(a.common.out_dir);
  const RunManifest manifest = make_manifest(a.config, seed, from_entropy, dir);

  const ChannelTarget target = experiment_target(c);
  const TrainResult trained = train_experiment(c, experiment_network(c), target);
  OutputWriter w(dir, a.common.force);
  const std::string stem = report_stem(c.name, seed);
  w.write_json(stem + "-model.json", model_to_json({c.name, target, trained.params, trained.fitness}, manifest));
  w.write(stem + "-history.csv", history_csv(trained.history));
  const bool ok = trained.fitness >= c.threshold;
  io.out << std::setprecision(6) << c.name << ": training fidelity " << trained.fitness << " (threshold " << c.threshold << ") "
         << (ok ? "PASS" : "BELOW") << "\n";
  for (const auto& p : w.written()) io.out << "wrote " << p.string() << '\n';
  return ok ? kPass : kBelowThreshold;
}

struct EvalArgs {
  Common common;
  std::string model;
  int states = 2000;
  int bins = 20;
};

inline int cmd_eval(const EvalArgs& a, Streams io) {
  if (a.states < 1) throw UsageError("--states must be >= 1");
  ModelFile m;
  try {
    m = model_from_json(read_json_file(a.model));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("unreadable model '" + a.model + "': " + e.what());
  }
  const auto [seed, from_entropy] = resolve_seed(a.common.seed, nullptr);
  const std::filesystem::path dir = output_root(a.common.out_dir);
  const RunManifest manifest = make_manifest(a.model, seed, from_entropy, dir);

  const TrainingSet test = make_training_set(m.target, haar_sample(m.target.n_qubits(), static_cast<std::size_t>(a.states), seed, "test"));
  FidelityReport r;
  r.experiment = m.experiment;
  r.config.name = m.experiment;
  r.config.seed = seed;
  r.config.test_size = a.states;
  r.config.threshold = 0.0;
  r.training.params = m.params;
  r.training.fitness = m.fitness;
  r.training_fitness = m.fitness;
  r.fidelity_measure = m.target.is_unitary() ? "overlap" : to_string(MixedFidelity::uhlmann);
  r.values = per_state_fidelities(Protocol(m.params), test);
  r.stats = fidelity_stats(r.values);
  r.hist = histogram(r.values, a.bins);
  r.passed = true;

  nlohmann::json j = {{"experiment", m.experiment},
                      {"model", a.model},
                      {"target", to_json(m.target)},
                      {"provenance", {{"seed", seed}, {"streams", stream_labels()}, {"fidelity_measure", r.fidelity_measure}}},
                      {"evaluation",
                       {{"n", r.values.size()},
                        {"mean", r.stats.mean},
                        {"min", r.stats.min},
                        {"max", r.stats.max},
                        {"stddev", r.stats.stddev},
                        {"values", r.values}}},
                      {"histogram", {{"edges", r.hist.edges}, {"counts", r.hist.counts}}},
                      {"manifest", to_json(manifest)}};
  OutputWriter w(dir, a.common.force);
  const std::string stem = report_stem(m.experiment + "-eval", seed);
  w.write_json(stem + ".json", j);
  w.write(stem + ".csv", histogram_csv(r.hist));
  io.out << std::setprecision(6) << m.experiment << ": mean " << r.stats.mean << " min " << r.stats.min << " over " << r.values.size()
         << " states\n";
  for (const auto& p : w.written()) io.out << "wrote " << p.string() << '\n';
  return kPass;
}

inline std::string display_name(const std::string& gate) {
  static const std::map<std::string, std::string> names = {{"cnot", "cNOT"},   {"cy", "cY"},     {"cz", "cZ"},
                                                           {"sswap", "sSWAP"}, {"siswap", "siSWAP"}, {"swap", "SWAP"}};
  const auto it = names.find(gate);
  return it == names.end() ? gate : it->second;
}

struct VerifyArgs {
  bool table = false;
  bool identities = false;
  std::size_t states = 100000;
  std::uint64_t seed = 0;
  std::vector<std::string> inject_fault;  // gates replaced by the identity
};

inline int cmd_verify(const VerifyArgs& a, Streams io) {
  GateTable table = GateTable::standard();
  for (const std::string& g : a.inject_fault) {
    const int arity = table.at(g).arity();
    table.set(g, GateMatrix::unchecked(Matrix::Identity(Eigen::Index{1} << arity, Eigen::Index{1} << arity)));
  }
  const bool both = !a.table && !a.identities;
  std::vector<std::string> failed;
  io.out << std::setprecision(8);
  if (a.identities || both) {
    for (const std::string& id : identity_names()) {
      const double dev = verify_identity(id, table);
      const bool ok = dev < 1e-10;
      io.out << "identity " << display_name(id) << ": deviation " << dev << (ok ? " PASS" : " FAIL") << '\n';
      if (!ok) failed.push_back("identity " + display_name(id));
    }
  }
  if (a.table || both) {
    for (const TableCheck& c : verify_direct_table(a.states, a.seed, table)) {
      io.out << "table " << display_name(c.gate) << ": mean " << c.sampled_mean << " closed form " << c.closed_form
             << (c.passed ? " PASS" : " FAIL") << '\n';
      if (!c.passed) failed.push_back("table " + display_name(c.gate));
    }
  }
  if (failed.empty()) {
    io.out << "all checks passed\n";
    return kPass;
  }
  io.err << "failed:";
  for (const std::string& f : failed) io.err << ' ' << f << ';';
  io.err << '\n';
  return kCheckFailed;
}

struct ExperimentArgs {
  Common common;
  std::string name;
  std::string config;  // optional override document
  std::vector<double> deltas;
  std::optional<int> states;
  std::optional<int> generations;
  std::optional<int> evaluations;
};

inline int cmd_experiment(const ExperimentArgs& a, Streams io) {
  const auto names = experiment_names();
  if (std::find(names.begin(), names.end(), a.name) == names.end()) throw UsageError("unknown experiment '" + a.name + "'");
  ExperimentConfig c = preset(a.name);
  nlohmann::json overrides;
  if (!a.config.empty()) {
    overrides = read_json_file(a.config);
    try {
      c = apply_json(c, overrides);
    } catch (const std::exception& e) {
      throw UsageError(std::string("malformed config: ") + e.what());
    }
  }
  if (!a.deltas.empty()) c.deltas = a.deltas;
  if (a.states) c.test_size = *a.states;
  if (a.generations) c.ga.max_generations = *a.generations;
  if (a.evaluations) c.nm.max_evaluations = *a.evaluations;
  const auto [seed, from_entropy] = resolve_seed(a.common.seed, a.config.empty() ? nullptr : &overrides);
  c.seed = seed;
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid parameters: ") + e.what());
  }

  const std::filesystem::path dir = output_root(a.common.out_dir);
  const RunManifest manifest = make_manifest(a.config, seed, from_entropy, dir);
  OutputWriter w(dir, a.common.force);
  const std::string stem = report_stem(c.name, seed);

  FidelityReport r;
  switch (c.kind) {
    case ExperimentKind::gate: r = run_gate_experiment(c); break;
    case ExperimentKind::single_qubit_6site: r = run_single_qubit_6site(c); break;
    case ExperimentKind::markovian: {
      std::vector<PurityPoint> trace;
      r = run_markovian_experiment(c, &trace);
      w.write(stem + "-purity.csv", purity_csv(trace));
      break;
    }
    case ExperimentKind::grover2: {
      GroverRun g = run_grover2(c);
      r = std::move(g.report);
      w.write(stem + "-probabilities.csv", probabilities_csv(g.probabilities));
      break;
    }
    case ExperimentKind::grover3: r = run_grover3(c); break;
    case ExperimentKind::robustness: {
      RobustnessResult rr = run_robustness_sweep(c);
      r = std::move(rr.baseline_report);
      w.write(stem + "-deltas.csv", robustness_csv(rr));
      io.out << "delta,retrained,frozen\n";
      for (const RobustnessRow& row : rr.rows) io.out << row.delta << ',' << row.retrained << ',' << row.frozen << '\n';
      break;
    }
  }
  w.write_json(stem + ".json", report_json(r, manifest));
  w.write(stem + ".csv", histogram_csv(r.hist));
  w.write(stem + "-history.csv", history_csv(r.training.history));
  print_summary(r, io.out);
  for (const auto& p : w.written()) io.out << "wrote " << p.string() << '\n';
  return r.passed ? kPass : kBelowThreshold;
}

// --- entry point ------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Train driven quantum networks to act as gates and channels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "Master seed (drawn from entropy when omitted)");
    sub->add_option("--out", c.out_dir, "Output directory (default: $QN_OUT_DIR or ./out)");
    sub->add_flag("--force", c.force, "Overwrite existing output files");
  };

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a target from a JSON config");
  train_cmd->add_option("config", train.config, "Config file")->required();
  add_common(train_cmd, train.common);

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a trained model on fresh Haar states");
  eval_cmd->add_option("model", eval.model, "Model file written by train")->required();
  eval_cmd->add_option("--states", eval.states, "Number of test states")->capture_default_str();
  eval_cmd->add_option("--bins", eval.bins, "Histogram bins")->capture_default_str();
  add_common(eval_cmd, eval.common);

  VerifyArgs verify;
  CLI::App* verify_cmd = app.add_subcommand("verify", "Check the direct-model table and the cNOT identities");
  verify_cmd->add_flag("--table", verify.table, "Direct two-qubit table over Haar states");
  verify_cmd->add_flag("--identities", verify.identities, "cNOT constructions");
  verify_cmd->add_option("--states", verify.states, "Haar states per table row")->capture_default_str();
  verify_cmd->add_option("--seed", verify.seed, "Seed for the table sample")->capture_default_str();
  verify_cmd->add_option("--inject-fault", verify.inject_fault, "Replace a gate by the identity (test fixture)")->group("");

  ExperimentArgs exp;
  CLI::App* exp_cmd = app.add_subcommand("experiment", "Run a named experiment");
  exp_cmd->add_option("name", exp.name, "Experiment name (see --list)");
  exp_cmd->add_option("--config", exp.config, "JSON document overriding preset fields");
  exp_cmd->add_option("--deltas", exp.deltas, "Robustness strengths")->delimiter(',');
  exp_cmd->add_option("--states", exp.states, "Test states");
  exp_cmd->add_option("--generations", exp.generations, "GA generation budget");
  exp_cmd->add_option("--evaluations", exp.evaluations, "Nelder-Mead evaluation budget");
  bool list = false;
  exp_cmd->add_flag("--list", list, "Print the experiment names");
  add_common(exp_cmd, exp.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kUsage;
  }

  const Streams io{out, err};
  try {
    if (*train_cmd) return cmd_train(train, io);
    if (*eval_cmd) return cmd_eval(eval, io);
    if (*verify_cmd) return cmd_verify(verify, io);
    if (*exp_cmd) {
      if (list) {
        for (const std::string& n : experiment_names()) out << n << '\n';
        return kPass;
      }
      if (exp.name.empty()) throw UsageError("experiment name required");
      return cmd_experiment(exp, io);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace qrc::cli
