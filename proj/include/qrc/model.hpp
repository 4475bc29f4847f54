// Hamiltonians of the driven two-level network, its tunnelling coupling to the
// computational qubits, and the input -> reduced-output protocol.
//
// Site convention: |g> = |0>, a = |0><1|, a^dagger = |1><0|, and the network
// vacuum is every site in |g>. Qubits carry no local Hamiltonian.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qrc/qcore.hpp"
#include "qrc/rng.hpp"

namespace qrc {

/// How the qubit operators in the tunnelling term are built.
enum class LadderConvention {
  pauli_sum,  ///< sigma^{+/-} = sigma^x +/- i sigma^y (twice the usual ladder operator)
  ladder,     ///< sigma^- = |0><1|, sigma^+ = |1><0|, same as the site operators
};

inline std::string to_string(LadderConvention c) { return c == LadderConvention::pauli_sum ? "pauli_sum" : "ladder"; }

inline LadderConvention ladder_convention_from_string(const std::string& s) {
  if (s == "pauli_sum") return LadderConvention::pauli_sum;
  if (s == "ladder") return LadderConvention::ladder;
  throw std::invalid_argument("unknown ladder convention '" + s + "'");
}

/// Qubit operator pairing with a_l^dagger in the tunnelling term.
inline Matrix qubit_sigma_minus(LadderConvention c) {
  if (c == LadderConvention::pauli_sum) return ops::pauli_x() - cplx(0, 1) * ops::pauli_y();
  return ops::lower();
}

inline Matrix qubit_sigma_plus(LadderConvention c) { return qubit_sigma_minus(c).adjoint(); }

struct Edge {
  int a = 0;
  int b = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Open 1-D chain 0-1-...-(n-1).
inline std::vector<Edge> chain_adjacency(int n_sites) {
  std::vector<Edge> edges;
  for (int l = 0; l + 1 < n_sites; ++l) edges.push_back({l, l + 1});
  return edges;
}

struct NetworkSpec {
  int n_sites = 0;
  double E0 = 0.0;
  double K0 = 0.0;
  cplx P = 0.0;
  std::uint64_t seed = 0;
  std::vector<Edge> adjacency;
  std::vector<double> energies;  // one per site
  std::vector<double> hoppings;  // one per adjacency edge
  // Per-site drives; empty means the uniform drive P on every site.
  std::vector<cplx> site_drives;
  // Strength of a random perturbation applied after the draw; widens the
  // admissible parameter intervals by this amount.
  double perturbation = 0.0;

  cplx drive(int l) const { return site_drives.empty() ? P : site_drives.at(l); }

  void validate() const {
    if (n_sites < 1) throw std::invalid_argument("NetworkSpec: n_sites must be >= 1");
    if (E0 < 0 || K0 < 0 || perturbation < 0) throw std::invalid_argument("NetworkSpec: negative scale");
    if (static_cast<int>(energies.size()) != n_sites) throw std::invalid_argument("NetworkSpec: energies size mismatch");
    if (hoppings.size() != adjacency.size()) throw std::invalid_argument("NetworkSpec: hoppings size mismatch");
    if (!site_drives.empty() && static_cast<int>(site_drives.size()) != n_sites)
      throw std::invalid_argument("NetworkSpec: site_drives size mismatch");
    for (const Edge& e : adjacency) {
      if (e.a < 0 || e.b < 0 || e.a >= n_sites || e.b >= n_sites)
        throw std::out_of_range("NetworkSpec: edge references nonexistent site");
      if (e.a == e.b) throw std::invalid_argument("NetworkSpec: self-loop in adjacency");
    }
    const double tol = 1e-12;
    for (double e : energies)
      if (!std::isfinite(e) || std::abs(e) > E0 / 2 + perturbation + tol) throw std::invalid_argument("NetworkSpec: energy out of range");
    for (double k : hoppings)
      if (!std::isfinite(k) || std::abs(k) > K0 / 2 + perturbation + tol) throw std::invalid_argument("NetworkSpec: hopping out of range");
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

namespace detail {
// Uniform on [-1/2, 1/2] from 53 random bits; avoids library-specific
// distribution implementations so draws match across standard libraries.
inline double centered_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5; }
}  // namespace detail

/// Draws E_l ~ U[-E0/2, E0/2] and K ~ U[-K0/2, K0/2] per edge.
inline NetworkSpec draw_network(int n_sites, double E0, double K0, std::vector<Edge> adjacency, cplx P, std::uint64_t seed) {
  if (n_sites < 1) throw std::invalid_argument("draw_network: n_sites must be >= 1");
  if (E0 < 0 || K0 < 0) throw std::invalid_argument("draw_network: scales must be non-negative");
  NetworkSpec spec;
  spec.n_sites = n_sites;
  spec.E0 = E0;
  spec.K0 = K0;
  spec.P = P;
  spec.seed = seed;
  spec.adjacency = std::move(adjacency);
  Rng rng = make_stream(seed, "network");
  spec.energies.resize(n_sites);
  for (double& e : spec.energies) e = E0 * detail::centered_unit(rng);
  spec.hoppings.resize(spec.adjacency.size());
  for (double& k : spec.hoppings) k = K0 * detail::centered_unit(rng);
  spec.validate();
  return spec;
}

/// E_l -> E_l + delta r_l, K -> K + delta r with r ~ U[-1, 1].
inline NetworkSpec perturb_network(const NetworkSpec& base, double delta, std::uint64_t seed) {
  if (delta < 0) throw std::invalid_argument("perturb_network: delta must be >= 0");
  NetworkSpec out = base;
  Rng rng = make_stream(seed, "perturbation");
  for (double& e : out.energies) e += delta * 2.0 * detail::centered_unit(rng);
  for (double& k : out.hoppings) k += delta * 2.0 * detail::centered_unit(rng);
  out.perturbation = base.perturbation + delta;
  out.validate();
  return out;
}

/// Trainable tunnelling amplitudes J_kl, rows = qubits, columns = sites.
struct CouplingMatrix {
  Matrix J;

  CouplingMatrix() = default;
  explicit CouplingMatrix(Matrix j) : J(std::move(j)) {
    if (!J.allFinite()) throw std::invalid_argument("CouplingMatrix: non-finite entry");
  }
  static CouplingMatrix zero(int n_qubits, int n_sites) { return CouplingMatrix(Matrix::Zero(n_qubits, n_sites)); }

  int n_qubits() const { return static_cast<int>(J.rows()); }
  int n_sites() const { return static_cast<int>(J.cols()); }

  friend bool operator==(const CouplingMatrix& a, const CouplingMatrix& b) {
    return a.J.rows() == b.J.rows() && a.J.cols() == b.J.cols() && a.J == b.J;
  }
};

/// Network Hamiltonian embedded in the full register (identity on qubits):
/// sum E_l n_l + sum_edges K (a_l^dag a_l' + h.c.) + sum_l (P_l^* a_l + P_l a_l^dag).
inline HermitianOperator network_hamiltonian(const NetworkSpec& spec, const RegisterLayout& layout) {
  spec.validate();
  if (layout.n_sites != spec.n_sites) throw std::invalid_argument("network_hamiltonian: layout has a different site count");
  const int n = layout.subsystems();
  Matrix h = Matrix::Zero(layout.dim(), layout.dim());
  const Matrix num = ops::number();
  const Matrix a = ops::lower();
  const Matrix ad = ops::raise();
  const Matrix hop = kron(ad, a) + kron(a, ad);
  for (int l = 0; l < spec.n_sites; ++l) {
    const int s = layout.site(l);
    const int t[] = {s};
    if (spec.energies[l] != 0.0) embed_add(h, spec.energies[l], num, t, n);
    const cplx p = spec.drive(l);
    if (p != cplx(0.0)) embed_add(h, 1.0, std::conj(p) * a + p * ad, t, n);
  }
  for (std::size_t e = 0; e < spec.adjacency.size(); ++e) {
    if (spec.hoppings[e] == 0.0) continue;
    const int t[] = {layout.site(spec.adjacency[e].a), layout.site(spec.adjacency[e].b)};
    embed_add(h, spec.hoppings[e], hop, t, n);
  }
  return HermitianOperator(std::move(h), 1e-12);
}

/// sum_kl (J_kl^* sigma_k^+ a_l + J_kl a_l^dag sigma_k^-).
inline HermitianOperator coupling_hamiltonian(const CouplingMatrix& coupling, const RegisterLayout& layout,
                                              LadderConvention convention = LadderConvention::pauli_sum) {
  if (coupling.n_qubits() != layout.n_qubits || coupling.n_sites() != layout.n_sites)
    throw std::invalid_argument("coupling_hamiltonian: J shape does not match layout");
  const int n = layout.subsystems();
  Matrix h = Matrix::Zero(layout.dim(), layout.dim());
  // a_l^dag sigma_k^- as a two-subsystem operator on (qubit k, site l).
  const Matrix forward = kron(qubit_sigma_minus(convention), ops::raise());
  const Matrix backward = forward.adjoint();
  for (int k = 0; k < layout.n_qubits; ++k) {
    for (int l = 0; l < layout.n_sites; ++l) {
      const cplx j = coupling.J(k, l);
      if (j == cplx(0.0)) continue;
      const int t[] = {layout.qubit(k), layout.site(l)};
      embed_add(h, j, forward, t, n);
      embed_add(h, std::conj(j), backward, t, n);
    }
  }
  return HermitianOperator(std::move(h), 1e-12);
}

/// One qubit on a one-site network:
/// E1 n + P a^dag + P^* a + J11 (sigma^+ a + a^dag sigma^-).
inline HermitianOperator one_site_hamiltonian(double E1, cplx P, cplx J11, const RegisterLayout& layout,
                                              LadderConvention convention = LadderConvention::ladder) {
  if (layout.n_qubits != 1 || layout.n_sites != 1) throw std::invalid_argument("one_site_hamiltonian: layout must be 1 qubit + 1 site");
  NetworkSpec site;
  site.n_sites = 1;
  site.E0 = 2.0 * std::abs(E1);
  site.energies = {E1};
  site.P = P;
  CouplingMatrix j(Matrix::Constant(1, 1, J11));
  return network_hamiltonian(site, layout) + coupling_hamiltonian(j, layout, convention);
}

struct ProtocolParams {
  NetworkSpec network;
  CouplingMatrix coupling;
  double tau = 0.0;
  RegisterLayout layout;
  LadderConvention convention = LadderConvention::pauli_sum;

  void validate() const {
    network.validate();
    if (layout.n_sites != network.n_sites) throw std::invalid_argument("ProtocolParams: layout/network site count mismatch");
    if (coupling.n_qubits() != layout.n_qubits || coupling.n_sites() != layout.n_sites)
      throw std::invalid_argument("ProtocolParams: coupling shape mismatch");
    if (!std::isfinite(tau) || tau < 0.0) throw std::invalid_argument("ProtocolParams: tau must be >= 0");
  }

  friend bool operator==(const ProtocolParams&, const ProtocolParams&) = default;
};

inline HermitianOperator total_hamiltonian(const ProtocolParams& p) {
  return network_hamiltonian(p.network, p.layout) + coupling_hamiltonian(p.coupling, p.layout, p.convention);
}

/// The induced qubit channel for fixed parameters. Holds the eigensystem of
/// the total Hamiltonian and the propagated images U|k>|vac> of each qubit
/// basis state, reshaped to (qubit_dim x site_dim) blocks.
class Protocol {
 public:
  explicit Protocol(const ProtocolParams& params)
      : Protocol(params, std::make_shared<const Eigensystem>(total_hamiltonian((params.validate(), params)))) {}

  Protocol(const ProtocolParams& params, std::shared_ptr<const Eigensystem> eig)
      : layout_(params.layout), tau_(params.tau), eig_(std::move(eig)) {
    build_branches();
  }

  /// Same Hamiltonian, different evolution time.
  Protocol retimed(double tau) const {
    if (!std::isfinite(tau) || tau < 0.0) throw std::invalid_argument("Protocol: tau must be >= 0");
    Protocol p = *this;
    p.tau_ = tau;
    p.build_branches();
    return p;
  }

  const RegisterLayout& layout() const { return layout_; }
  double tau() const { return tau_; }
  const Eigensystem& eigensystem() const { return *eig_; }

  /// Joint qubit-network state after the evolution, as a (qubit x site) matrix.
  Matrix joint_output(const QuantumState& in) const {
    check_input(in.dim());
    Matrix psi = Matrix::Zero(layout_.qubit_dim(), layout_.site_dim());
    for (Eigen::Index k = 0; k < in.dim(); ++k)
      if (in.amplitudes()(k) != cplx(0.0)) psi += in.amplitudes()(k) * branches_[k];
    return psi;
  }

  DensityMatrix output(const QuantumState& in) const {
    const Matrix psi = joint_output(in);
    return DensityMatrix::trusted(psi * psi.adjoint());
  }

  /// Linear extension of the channel to mixed inputs.
  DensityMatrix output(const DensityMatrix& in) const {
    check_input(in.dim());
    Matrix out = Matrix::Zero(layout_.qubit_dim(), layout_.qubit_dim());
    for (Eigen::Index i = 0; i < in.dim(); ++i)
      for (Eigen::Index j = 0; j < in.dim(); ++j) {
        const cplx r = in.matrix()(i, j);
        if (r != cplx(0.0)) out += r * branches_[i] * branches_[j].adjoint();
      }
    return DensityMatrix::trusted(std::move(out));
  }

  /// <ideal| Tr_R(|Psi><Psi|) |ideal> without forming the reduced state.
  double fidelity(const QuantumState& in, const QuantumState& ideal) const {
    if (ideal.dim() != layout_.qubit_dim()) throw std::invalid_argument("Protocol: ideal state dimension mismatch");
    const Matrix psi = joint_output(in);
    const double f = (ideal.amplitudes().adjoint() * psi).squaredNorm();
    return detail::clip_unit(f, "fidelity");
  }

 private:
  void check_input(Eigen::Index dim) const {
    if (dim != layout_.qubit_dim()) throw std::invalid_argument("Protocol: input dimension does not match qubit count");
  }

  void build_branches() {
    const Eigen::Index qd = layout_.qubit_dim();
    const Eigen::Index sd = layout_.site_dim();
    const Matrix& v = eig_->vectors();
    // Rows of V^dagger at the columns |k>|vac> = index k * sd.
    Matrix coeffs(v.cols(), qd);
    for (Eigen::Index k = 0; k < qd; ++k) coeffs.col(k) = v.row(k * sd).adjoint();
    coeffs = eig_->phases(tau_).asDiagonal() * coeffs;
    const Matrix images = v * coeffs;
    branches_.assign(qd, Matrix());
    for (Eigen::Index k = 0; k < qd; ++k) {
      // Full index = q * sd + s, so the image reshapes row-major into (q, s).
      branches_[k] = Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(images.col(k).data(), qd, sd);
    }
  }

  RegisterLayout layout_;
  double tau_ = 0.0;
  std::shared_ptr<const Eigensystem> eig_;
  std::vector<Matrix> branches_;
};

/// Tr_R[U (|phi_in><phi_in| (x) |vac><vac|) U^dagger]. Reuses the most recent
/// eigendecomposition on this thread when called again with equal params.
inline DensityMatrix apply_protocol(const QuantumState& phi_in, const ProtocolParams& params) {
  thread_local std::optional<ProtocolParams> cached_params;
  thread_local std::shared_ptr<const Protocol> cached;
  if (phi_in.dim() != params.layout.qubit_dim()) throw std::invalid_argument("apply_protocol: input dimension mismatch");
  if (!cached || !cached_params || !(*cached_params == params)) {
    cached = std::make_shared<const Protocol>(params);
    cached_params = params;
  }
  return cached->output(phi_in);
}

/// Two directly coupled two-level systems, energies in units of E2 and
/// tau = E2 t / hbar.
struct DirectTwoQubitSpec {
  double E1 = 0.0;
  double E2 = 1.0;
  cplx P1 = 0.0;
  cplx P2 = 0.0;
  double J = 0.0;
  double tau = 0.0;
};

inline HermitianOperator direct_two_qubit_hamiltonian(const DirectTwoQubitSpec& s) {
  const Matrix a = ops::lower();
  const Matrix ad = ops::raise();
  const Matrix id = ops::identity();
  const Matrix a1 = kron(a, id), a2 = kron(id, a);
  const Matrix ad1 = a1.adjoint(), ad2 = a2.adjoint();
  Matrix h = s.E1 * ad1 * a1 + s.E2 * ad2 * a2;
  h += s.P1 * ad1 + std::conj(s.P1) * a1 + s.P2 * ad2 + std::conj(s.P2) * a2;
  h += s.J * (a1 * ad2 + a2 * ad1);
  return HermitianOperator(std::move(h), 1e-12);
}

inline Matrix direct_two_qubit_unitary(const DirectTwoQubitSpec& s) {
  if (!std::isfinite(s.tau)) throw std::invalid_argument("direct_two_qubit_unitary: non-finite tau");
  return Eigensystem(direct_two_qubit_hamiltonian(s)).unitary(s.tau);
}

// --- JSON ------------------------------------------------------------------

inline nlohmann::json complex_to_json(cplx z) { return {{"re", z.real()}, {"im", z.imag()}}; }

inline cplx complex_from_json(const nlohmann::json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  return {j.at("re").get<double>(), j.at("im").get<double>()};
}

inline nlohmann::json to_json(const NetworkSpec& s) {
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : s.adjacency) edges.push_back({e.a, e.b});
  nlohmann::json j = {{"n_sites", s.n_sites}, {"seed", s.seed},       {"E0", s.E0},
                      {"K0", s.K0},           {"P", complex_to_json(s.P)}, {"adjacency", edges},
                      {"energies", s.energies}, {"hoppings", s.hoppings}};
  if (!s.site_drives.empty()) {
    nlohmann::json d = nlohmann::json::array();
    for (cplx p : s.site_drives) d.push_back(complex_to_json(p));
    j["site_drives"] = d;
  }
  if (s.perturbation != 0.0) j["perturbation"] = s.perturbation;
  return j;
}

inline NetworkSpec network_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.n_sites = j.at("n_sites").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.E0 = j.at("E0").get<double>();
  s.K0 = j.at("K0").get<double>();
  s.P = complex_from_json(j.at("P"));
  for (const auto& e : j.at("adjacency")) s.adjacency.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  s.energies = j.at("energies").get<std::vector<double>>();
  s.hoppings = j.at("hoppings").get<std::vector<double>>();
  if (j.contains("site_drives"))
    for (const auto& p : j.at("site_drives")) s.site_drives.push_back(complex_from_json(p));
  s.perturbation = j.value("perturbation", 0.0);
  s.validate();
  return s;
}

inline nlohmann::json to_json(const CouplingMatrix& c) {
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  for (int k = 0; k < c.n_qubits(); ++k) {
    std::vector<double> r, i;
    for (int l = 0; l < c.n_sites(); ++l) {
      r.push_back(c.J(k, l).real());
      i.push_back(c.J(k, l).imag());
    }
    re.push_back(r);
    im.push_back(i);
  }
  return {{"re", re}, {"im", im}};
}

inline CouplingMatrix coupling_from_json(const nlohmann::json& j) {
  const auto re = j.at("re").get<std::vector<std::vector<double>>>();
  const auto im = j.at("im").get<std::vector<std::vector<double>>>();
  if (re.size() != im.size()) throw std::invalid_argument("coupling JSON: re/im shape mismatch");
  const Eigen::Index rows = static_cast<Eigen::Index>(re.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(re[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < rows; ++k) {
    if (static_cast<Eigen::Index>(re[k].size()) != cols || im[k].size() != re[k].size())
      throw std::invalid_argument("coupling JSON: ragged rows");
    for (Eigen::Index l = 0; l < cols; ++l) m(k, l) = cplx(re[k][l], im[k][l]);
  }
  return CouplingMatrix(std::move(m));
}

inline nlohmann::json to_json(const ProtocolParams& p) {
  return {{"network", to_json(p.network)},
          {"J", to_json(p.coupling)},
          {"tau", p.tau},
          {"n_qubits", p.layout.n_qubits},
          {"convention", to_string(p.convention)}};
}

inline ProtocolParams protocol_from_json(const nlohmann::json& j) {
  ProtocolParams p;
  p.network = network_from_json(j.at("network"));
  p.coupling = coupling_from_json(j.at("J"));
  p.tau = j.at("tau").get<double>();
  p.layout = RegisterLayout(j.at("n_qubits").get<int>(), p.network.n_sites);
  p.convention = ladder_convention_from_string(j.value("convention", std::string("pauli_sum")));
  p.validate();
  return p;
}

}  // namespace qrc
