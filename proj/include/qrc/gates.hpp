// Target operations: gate matrices, rotations, circuits, Grover operators,
// the amplitude-damping channel, and the cNOT construction identities.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qrc/qcore.hpp"

namespace qrc {

/// Unitary acting on `arity` qubits.
class GateMatrix {
 public:
  GateMatrix() = default;
  explicit GateMatrix(Matrix u, double tol = 1e-10) : u_(std::move(u)) {
    detail::require_square(u_, "GateMatrix");
    arity_ = detail::log2_exact(u_.rows());
    if (unitarity_defect(u_) > tol) throw std::invalid_argument("GateMatrix: not unitary");
  }
  // For fault-injection fixtures and other deliberately broken tables.
  static GateMatrix unchecked(Matrix u) {
    GateMatrix g;
    g.arity_ = detail::log2_exact(u.rows());
    g.u_ = std::move(u);
    return g;
  }

  const Matrix& matrix() const { return u_; }
  int arity() const { return arity_; }
  Eigen::Index dim() const { return u_.rows(); }

  QuantumState apply(const QuantumState& psi) const {
    if (psi.dim() != dim()) throw std::invalid_argument("GateMatrix: state dimension mismatch");
    return QuantumState(u_ * psi.amplitudes(), 1e-9);
  }

 private:
  Matrix u_;
  int arity_ = 0;
};

inline std::string normalize_gate_name(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (name == "cx" || name == "cnot") return "cnot";
  if (name == "phase" || name == "s") return "s";
  if (name == "pi/8" || name == "t") return "t";
  if (name == "t†" || name == "tdagger" || name == "tdg") return "tdg";
  if (name == "ccx" || name == "toffoli") return "toffoli";
  if (name == "id" || name == "i" || name == "identity") return "identity";
  return name;
}

/// Named gate matrices. The standard table holds the textbook gates;
/// copies may override entries (used to inject faults in tests).
class GateTable {
 public:
  static const GateTable& standard() {
    static const GateTable table = build_standard();
    return table;
  }

  bool contains(const std::string& name) const { return gates_.count(normalize_gate_name(name)) > 0; }

  const GateMatrix& at(const std::string& name) const {
    const auto it = gates_.find(normalize_gate_name(name));
    if (it == gates_.end()) throw std::invalid_argument("unknown gate '" + name + "'");
    return it->second;
  }

  void set(const std::string& name, GateMatrix g) { gates_[normalize_gate_name(name)] = std::move(g); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : gates_) out.push_back(k);
    return out;
  }

 private:
  static GateTable build_standard() {
    using std::numbers::sqrt2;
    const cplx i(0, 1);
    GateTable t;
    auto add = [&](const char* name, const Matrix& m) { t.gates_[name] = GateMatrix(m, 1e-12); };
    add("identity", ops::identity());
    add("x", ops::pauli_x());
    add("y", ops::pauli_y());
    add("z", ops::pauli_z());
    Matrix h(2, 2);
    h << 1, 1, 1, -1;
    add("h", h / sqrt2);
    Matrix s = Matrix::Identity(2, 2);
    s(1, 1) = i;
    add("s", s);
    add("sdg", s.adjoint());
    Matrix tt = Matrix::Identity(2, 2);
    tt(1, 1) = std::polar(1.0, std::numbers::pi / 4);
    add("t", tt);
    add("tdg", tt.adjoint());

    auto controlled = [](const Matrix& u) {
      Matrix c = Matrix::Identity(4, 4);
      c.bottomRightCorner(2, 2) = u;
      return c;
    };
    add("cnot", controlled(ops::pauli_x()));
    add("cy", controlled(ops::pauli_y()));
    add("cz", controlled(ops::pauli_z()));
    Matrix swap = Matrix::Zero(4, 4);
    swap(0, 0) = swap(3, 3) = 1;
    swap(1, 2) = swap(2, 1) = 1;
    add("swap", swap);
    Matrix sswap = Matrix::Zero(4, 4);
    sswap(0, 0) = sswap(3, 3) = 2;
    sswap(1, 1) = sswap(2, 2) = 1.0 + i;
    sswap(1, 2) = sswap(2, 1) = 1.0 - i;
    add("sswap", sswap / 2.0);
    Matrix siswap = Matrix::Zero(4, 4);
    siswap(0, 0) = siswap(3, 3) = sqrt2;
    siswap(1, 1) = siswap(2, 2) = 1.0;
    siswap(1, 2) = siswap(2, 1) = i;
    add("siswap", siswap / sqrt2);
    Matrix toffoli = Matrix::Identity(8, 8);
    toffoli.bottomRightCorner(2, 2) = ops::pauli_x();
    add("toffoli", toffoli);
    return t;
  }

  std::map<std::string, GateMatrix> gates_;
};

inline GateMatrix standard_gate(const std::string& name) { return GateTable::standard().at(name); }

enum class Axis { x, y, z };

inline Axis axis_from_char(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'x': return Axis::x;
    case 'y': return Axis::y;
    case 'z': return Axis::z;
  }
  throw std::invalid_argument(std::string("unknown rotation axis '") + c + "'");
}

/// R_x and R_y are the usual half-angle rotations; R_z(d) = diag(1, e^{i d}).
inline GateMatrix rotation(Axis axis, double angle) {
  if (!std::isfinite(angle)) throw std::invalid_argument("rotation: non-finite angle");
  const double c = std::cos(angle / 2), s = std::sin(angle / 2);
  const cplx i(0, 1);
  Matrix m(2, 2);
  switch (axis) {
    case Axis::x: m << c, -i * s, -i * s, c; break;
    case Axis::y: m << c, -s, s, c; break;
    case Axis::z: m << 1, 0, 0, std::polar(1.0, angle); break;
  }
  return GateMatrix(m, 1e-12);
}

// --- comparisons modulo global phase ---------------------------------------

/// Max elementwise |e^{i phi} a - b| with phi = arg Tr(a^dagger b).
inline double phase_aligned_deviation(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("phase_aligned_deviation: shape mismatch");
  const cplx overlap = (a.adjoint() * b).trace();
  const cplx phase = std::abs(overlap) > 0 ? overlap / std::abs(overlap) : cplx(1.0);
  return (phase * a - b).cwiseAbs().maxCoeff();
}

/// |Tr(a^dagger b)| / dim; 1 iff equal up to global phase.
inline double phase_insensitive_overlap(const Matrix& a, const Matrix& b) {
  return std::abs((a.adjoint() * b).trace()) / static_cast<double>(a.rows());
}

/// Haar average of |<phi| target^dagger actual |phi>|^2 in closed form.
inline double average_gate_fidelity(const Matrix& target, const Matrix& actual) {
  const double d = static_cast<double>(target.rows());
  const double tr = std::abs((target.adjoint() * actual).trace());
  return (tr * tr + d) / (d * (d + 1.0));
}

// --- circuits --------------------------------------------------------------

struct GatePlacement {
  std::string gate;                 // gate name, or rx/ry/rz
  std::vector<int> targets;         // first target is most significant for multi-qubit gates
  std::optional<double> angle;      // rotations only
  std::optional<Matrix> matrix;     // explicit matrix instead of a name

  friend bool operator==(const GatePlacement& a, const GatePlacement& b) {
    return a.gate == b.gate && a.targets == b.targets && a.angle == b.angle && a.matrix.has_value() == b.matrix.has_value() &&
           (!a.matrix || *a.matrix == *b.matrix);
  }
};

struct CircuitDescription {
  int n_qubits = 0;
  std::vector<GatePlacement> gates;  // application order: gates[0] acts first

  CircuitDescription& add(std::string gate, std::vector<int> targets) {
    gates.push_back({std::move(gate), std::move(targets), std::nullopt, std::nullopt});
    return *this;
  }
  CircuitDescription& add(std::string gate, std::vector<int> targets, double angle) {
    gates.push_back({std::move(gate), std::move(targets), angle, std::nullopt});
    return *this;
  }

  friend bool operator==(const CircuitDescription&, const CircuitDescription&) = default;
};

inline GateMatrix placement_matrix(const GatePlacement& g, const GateTable& table = GateTable::standard()) {
  if (g.matrix) return GateMatrix(*g.matrix);
  const std::string name = normalize_gate_name(g.gate);
  if (name.size() == 2 && name[0] == 'r') {
    if (!g.angle) throw std::invalid_argument("rotation '" + g.gate + "' needs an angle");
    return rotation(axis_from_char(name[1]), *g.angle);
  }
  if (g.angle) throw std::invalid_argument("gate '" + g.gate + "' takes no angle");
  return table.at(name);
}

/// Product of the embedded gates, first listed gate applied first.
inline GateMatrix compose_circuit(const CircuitDescription& c, const GateTable& table = GateTable::standard()) {
  if (c.n_qubits < 1) throw std::invalid_argument("compose_circuit: circuit needs at least one qubit");
  const Eigen::Index dim = Eigen::Index{1} << c.n_qubits;
  Matrix u = Matrix::Identity(dim, dim);
  for (const GatePlacement& g : c.gates) {
    const GateMatrix m = placement_matrix(g, table);
    if (static_cast<int>(g.targets.size()) != m.arity())
      throw std::invalid_argument("compose_circuit: gate '" + g.gate + "' has wrong number of targets");
    u = embed(m.matrix(), std::span<const int>(g.targets), c.n_qubits) * u;
  }
  return GateMatrix(u, 1e-10);
}

inline nlohmann::json to_json(const CircuitDescription& c) {
  nlohmann::json gates = nlohmann::json::array();
  for (const GatePlacement& g : c.gates) {
    if (g.matrix) throw std::invalid_argument("circuit JSON: explicit matrices are not serializable");
    nlohmann::json r = {{"gate", g.gate}, {"targets", g.targets}};
    if (g.angle) r["angle"] = *g.angle;
    gates.push_back(r);
  }
  return {{"n_qubits", c.n_qubits}, {"gates", gates}};
}

inline CircuitDescription circuit_from_json(const nlohmann::json& j) {
  CircuitDescription c;
  c.n_qubits = j.at("n_qubits").get<int>();
  for (const auto& r : j.at("gates")) {
    GatePlacement g;
    g.gate = r.at("gate").get<std::string>();
    g.targets = r.at("targets").get<std::vector<int>>();
    if (r.contains("angle")) g.angle = r.at("angle").get<double>();
    c.gates.push_back(std::move(g));
  }
  compose_circuit(c);  // rejects invalid placements
  return c;
}

// --- Grover ----------------------------------------------------------------

inline Matrix hadamard_all(int n) {
  Matrix h = standard_gate("h").matrix();
  Matrix out = h;
  for (int k = 1; k < n; ++k) out = kron(out, h);
  return out;
}

/// H^{(x)n} (I - 2|0..0><0..0|) H^{(x)n}
inline GateMatrix grover_diffusion(int n_qubits) {
  if (n_qubits < 1) throw std::invalid_argument("grover_diffusion: n_qubits must be >= 1");
  const Matrix h = hadamard_all(n_qubits);
  Matrix reflect = Matrix::Identity(h.rows(), h.cols());
  reflect(0, 0) = -1.0;
  return GateMatrix(h * reflect * h, 1e-10);
}

/// Sign flip on the marked basis state.
inline GateMatrix grover_oracle(int n_qubits, Eigen::Index marked_index) {
  if (n_qubits < 1) throw std::invalid_argument("grover_oracle: n_qubits must be >= 1");
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  if (marked_index < 0 || marked_index >= dim) throw std::out_of_range("grover_oracle: marked index out of range");
  Matrix u = Matrix::Identity(dim, dim);
  u(marked_index, marked_index) = -1.0;
  return GateMatrix(u, 1e-12);
}

namespace circuits {

inline void layer(CircuitDescription& c, const char* gate) {
  for (int q = 0; q < c.n_qubits; ++q) c.add(gate, {q});
}

/// Toffoli on (control a, control b, target t) from H, T, T^dagger and six cNOTs.
inline void append_toffoli(CircuitDescription& c, int a, int b, int t) {
  c.add("h", {t});
  c.add("cnot", {b, t});
  c.add("tdg", {t});
  c.add("cnot", {a, t});
  c.add("t", {t});
  c.add("cnot", {b, t});
  c.add("tdg", {t});
  c.add("cnot", {a, t});
  c.add("t", {b});
  c.add("t", {t});
  c.add("h", {t});
  c.add("cnot", {a, b});
  c.add("t", {a});
  c.add("tdg", {b});
  c.add("cnot", {a, b});
}

/// 15-gate Toffoli decomposition.
inline CircuitDescription toffoli_decomposition() {
  CircuitDescription c{3, {}};
  append_toffoli(c, 0, 1, 2);
  return c;
}

/// 11-gate two-qubit diffusion block: H H, X X, H, cNOT, H, X X, H H.
inline CircuitDescription grover2_diffusion() {
  CircuitDescription c{2, {}};
  layer(c, "h");
  layer(c, "x");
  c.add("h", {1});
  c.add("cnot", {0, 1});
  c.add("h", {1});
  layer(c, "x");
  layer(c, "h");
  return c;
}

/// 29-gate three-qubit diffusion operator with the Toffoli expanded.
inline CircuitDescription grover3_diffusion() {
  CircuitDescription c{3, {}};
  layer(c, "h");
  layer(c, "x");
  c.add("h", {2});
  append_toffoli(c, 0, 1, 2);
  c.add("h", {2});
  layer(c, "x");
  layer(c, "h");
  return c;
}

/// Uniform superposition followed by the oracle for `marked`.
inline CircuitDescription grover_preparation(int n_qubits, Eigen::Index marked) {
  CircuitDescription c{n_qubits, {}};
  layer(c, "h");
  GatePlacement oracle;
  oracle.gate = "oracle";
  for (int q = 0; q < n_qubits; ++q) oracle.targets.push_back(q);
  oracle.matrix = grover_oracle(n_qubits, marked).matrix();
  c.gates.push_back(std::move(oracle));
  return c;
}

inline std::vector<std::string> names() { return {"toffoli_decomposition", "grover2_diffusion", "grover3_diffusion"}; }

inline CircuitDescription by_name(const std::string& name) {
  if (name == "toffoli_decomposition") return toffoli_decomposition();
  if (name == "grover2_diffusion") return grover2_diffusion();
  if (name == "grover3_diffusion") return grover3_diffusion();
  throw std::invalid_argument("unknown built-in circuit '" + name + "'");
}

}  // namespace circuits

// --- amplitude damping -----------------------------------------------------

/// Closed-form solution of hbar rho' = (gamma/2)(2 s- rho s+ - s+ s- rho - rho s+ s-)
/// with |1> decaying into |0>.
inline DensityMatrix amplitude_damping_output(const DensityMatrix& rho_in, double gamma, double t) {
  if (rho_in.dim() != 2) throw std::invalid_argument("amplitude_damping_output: single-qubit input required");
  if (gamma < 0 || t < 0) throw std::invalid_argument("amplitude_damping_output: gamma and t must be >= 0");
  const double keep = std::exp(-gamma * t);  // 1 - p
  const Matrix& r = rho_in.matrix();
  Matrix out(2, 2);
  out(0, 0) = r(0, 0) + (1.0 - keep) * r(1, 1);
  out(1, 1) = keep * r(1, 1);
  out(0, 1) = std::sqrt(keep) * r(0, 1);
  out(1, 0) = std::sqrt(keep) * r(1, 0);
  return DensityMatrix::trusted(std::move(out));
}

// --- targets ---------------------------------------------------------------

/// What the trained protocol should reproduce: a unitary gate or the
/// amplitude-damping channel with strength gamma over time t.
struct ChannelTarget {
  enum class Kind { unitary, amplitude_damping };

  Kind kind = Kind::unitary;
  std::string name;
  GateMatrix gate;
  double gamma = 0.0;
  double t = 0.0;

  static ChannelTarget unitary(std::string name, GateMatrix g) {
    ChannelTarget c;
    c.kind = Kind::unitary;
    c.name = std::move(name);
    c.gate = std::move(g);
    return c;
  }

  static ChannelTarget amplitude_damping(double gamma, double t) {
    if (gamma < 0 || t < 0) throw std::invalid_argument("ChannelTarget: gamma and t must be >= 0");
    ChannelTarget c;
    c.kind = Kind::amplitude_damping;
    c.name = "amplitude_damping";
    c.gamma = gamma;
    c.t = t;
    return c;
  }

  bool is_unitary() const { return kind == Kind::unitary; }
  int n_qubits() const { return is_unitary() ? gate.arity() : 1; }
};

inline std::vector<std::string> identity_names() { return {"cy", "cz", "sswap", "siswap"}; }

/// Right-hand side of a cNOT construction from cY, cZ, sSWAP or siSWAP.
inline Matrix identity_rhs(const std::string& id_name, const GateTable& table = GateTable::standard()) {
  using std::numbers::pi;
  const Matrix id = ops::identity();
  auto g = [&](const char* n) { return table.at(n).matrix(); };
  auto r = [](Axis a, double angle) { return rotation(a, angle).matrix(); };
  const std::string name = normalize_gate_name(id_name);
  if (name == "cy") return kron(id, r(Axis::z, -pi / 2)) * g("cy") * kron(id, r(Axis::z, pi / 2));
  if (name == "cz") return kron(id, r(Axis::y, pi / 2)) * g("cz") * kron(id, r(Axis::y, -pi / 2));
  if (name == "sswap")
    return kron(id, r(Axis::y, -pi / 2)) * g("sswap") * kron(g("z"), id) * g("sswap") *
           kron(r(Axis::z, -pi / 2), r(Axis::z, -pi / 2)) * kron(id, r(Axis::y, pi / 2));
  if (name == "siswap")
    return kron(g("x"), g("x")) * kron(r(Axis::y, -pi / 2), id) * kron(r(Axis::x, pi / 2), r(Axis::x, -pi / 2)) *
           g("siswap") * kron(r(Axis::x, pi), id) * g("siswap") * kron(r(Axis::y, pi / 2), id) * kron(g("z"), id) *
           kron(g("x"), g("x")) * std::polar(1.0, pi / 4);
  throw std::invalid_argument("unknown identity '" + id_name + "'");
}

/// Max elementwise deviation of the construction from cNOT after removing
/// the global phase.
inline double verify_identity(const std::string& id_name, const GateTable& table = GateTable::standard()) {
  return phase_aligned_deviation(identity_rhs(id_name, table), table.at("cnot").matrix());
}

}  // namespace qrc
