// Dense linear algebra for registers of two-level systems.
//
// Ordering convention: subsystem 0 is the leftmost (most significant) tensor
// factor, so basis index bit (n-1-k) belongs to subsystem k. Every register
// in the toolkit is laid out as [qubit 0 .. qubit n-1, site 0 .. site N-1].
// hbar = 1 throughout.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qrc {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr double kNormTol = 1e-12;
inline constexpr double kHermTol = 1e-10;
inline constexpr double kFidelityTol = 1e-9;

namespace detail {

inline bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

inline int log2_exact(Eigen::Index n) {
  if (!is_power_of_two(n)) throw std::invalid_argument("dimension " + std::to_string(n) + " is not a power of two");
  int k = 0;
  while ((Eigen::Index{1} << k) < n) ++k;
  return k;
}

inline double hermiticity_defect(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("operator is not square");
  if (m.size() == 0) return 0.0;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + ": operator is not square");
}

// Clip a fidelity-like quantity to [0,1] after checking it is only noise away.
inline double clip_unit(double raw, const char* what) {
  if (!std::isfinite(raw) || raw < -kFidelityTol || raw > 1.0 + kFidelityTol)
    throw std::domain_error(std::string(what) + " out of [0,1]: " + std::to_string(raw));
  return std::clamp(raw, 0.0, 1.0);
}

}  // namespace detail

/// Subsystem bookkeeping for a register of qubits followed by network sites.
struct RegisterLayout {
  int n_qubits = 0;
  int n_sites = 0;

  RegisterLayout() = default;
  RegisterLayout(int qubits, int sites) : n_qubits(qubits), n_sites(sites) {
    if (qubits < 0 || sites < 0 || qubits + sites < 1) throw std::invalid_argument("RegisterLayout: need at least one subsystem");
    if (qubits + sites > 16) throw std::invalid_argument("RegisterLayout: more than 16 subsystems is not supported");
  }

  int subsystems() const { return n_qubits + n_sites; }
  Eigen::Index dim() const { return Eigen::Index{1} << subsystems(); }
  Eigen::Index qubit_dim() const { return Eigen::Index{1} << n_qubits; }
  Eigen::Index site_dim() const { return Eigen::Index{1} << n_sites; }
  int qubit(int k) const {
    if (k < 0 || k >= n_qubits) throw std::out_of_range("qubit index " + std::to_string(k));
    return k;
  }
  int site(int l) const {
    if (l < 0 || l >= n_sites) throw std::out_of_range("site index " + std::to_string(l));
    return n_qubits + l;
  }
  std::vector<int> qubit_indices() const {
    std::vector<int> v(n_qubits);
    for (int k = 0; k < n_qubits; ++k) v[k] = k;
    return v;
  }

  friend bool operator==(const RegisterLayout&, const RegisterLayout&) = default;
};

/// Normalized pure state over n two-level subsystems.
class QuantumState {
 public:
  QuantumState() = default;

  explicit QuantumState(Vector amplitudes, double tol = kNormTol) : amps_(std::move(amplitudes)) {
    n_ = detail::log2_exact(amps_.size());
    const double norm = amps_.norm();
    if (std::abs(norm - 1.0) > tol) throw std::invalid_argument("QuantumState: norm " + std::to_string(norm) + " is not 1");
  }

  /// Normalizes any nonzero vector.
  static QuantumState normalized(Vector v) {
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw std::invalid_argument("QuantumState: cannot normalize zero vector");
    v /= norm;
    return QuantumState(std::move(v));
  }

  static QuantumState basis(int n, Eigen::Index index) {
    const Eigen::Index dim = Eigen::Index{1} << n;
    if (index < 0 || index >= dim) throw std::out_of_range("basis index out of range");
    Vector v = Vector::Zero(dim);
    v(index) = 1.0;
    return QuantumState(std::move(v));
  }

  const Vector& amplitudes() const { return amps_; }
  int subsystems() const { return n_; }
  Eigen::Index dim() const { return amps_.size(); }

  friend bool operator==(const QuantumState& a, const QuantumState& b) { return a.amps_ == b.amps_; }

 private:
  Vector amps_;
  int n_ = 0;
};

/// Hermitian, unit-trace, positive-semidefinite operator.
class DensityMatrix {
 public:
  DensityMatrix() = default;

  explicit DensityMatrix(Matrix m, double tol = kHermTol) : m_(std::move(m)) {
    detail::require_square(m_, "DensityMatrix");
    n_ = detail::log2_exact(m_.rows());
    if (detail::hermiticity_defect(m_) > tol) throw std::invalid_argument("DensityMatrix: not Hermitian");
    const cplx tr = m_.trace();
    if (std::abs(tr - 1.0) > tol) throw std::invalid_argument("DensityMatrix: trace " + std::to_string(tr.real()) + " is not 1");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) throw std::invalid_argument("DensityMatrix: not positive semidefinite");
  }

  static DensityMatrix pure(const QuantumState& psi) {
    DensityMatrix rho;
    rho.m_ = psi.amplitudes() * psi.amplitudes().adjoint();
    rho.n_ = psi.subsystems();
    return rho;
  }

  static DensityMatrix maximally_mixed(int n) {
    DensityMatrix rho;
    const Eigen::Index dim = Eigen::Index{1} << n;
    rho.m_ = Matrix::Identity(dim, dim) / static_cast<double>(dim);
    rho.n_ = n;
    return rho;
  }

  // Skips the eigenvalue check; used on outputs that are PSD by construction.
  static DensityMatrix trusted(Matrix m) {
    DensityMatrix rho;
    rho.n_ = detail::log2_exact(m.rows());
    rho.m_ = std::move(m);
    return rho;
  }

  const Matrix& matrix() const { return m_; }
  int subsystems() const { return n_; }
  Eigen::Index dim() const { return m_.rows(); }

 private:
  Matrix m_;
  int n_ = 0;
};

/// Hermitian generator in units of the chosen reference energy.
class HermitianOperator {
 public:
  HermitianOperator() = default;
  explicit HermitianOperator(Matrix m, double tol = kHermTol) : m_(std::move(m)) {
    detail::require_square(m_, "HermitianOperator");
    detail::log2_exact(m_.rows());
    if (detail::hermiticity_defect(m_) > tol) throw std::invalid_argument("HermitianOperator: not Hermitian");
  }
  static HermitianOperator zero(Eigen::Index dim) { return HermitianOperator(Matrix::Zero(dim, dim)); }

  const Matrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

  HermitianOperator& operator+=(const HermitianOperator& o) {
    if (o.dim() != dim()) throw std::invalid_argument("HermitianOperator: dimension mismatch");
    m_ += o.m_;
    return *this;
  }
  friend HermitianOperator operator+(HermitianOperator a, const HermitianOperator& b) { return a += b; }

 private:
  Matrix m_;
};

// --- basic operators -------------------------------------------------------

namespace ops {
inline Matrix identity(Eigen::Index d = 2) { return Matrix::Identity(d, d); }
inline Matrix pauli_x() { Matrix m(2, 2); m << 0, 1, 1, 0; return m; }
inline Matrix pauli_y() { Matrix m(2, 2); m << 0, cplx(0, -1), cplx(0, 1), 0; return m; }
inline Matrix pauli_z() { Matrix m(2, 2); m << 1, 0, 0, -1; return m; }
/// |0><1|: lowering operator with |0> the ground state.
inline Matrix lower() { Matrix m(2, 2); m << 0, 1, 0, 0; return m; }
/// |1><0|
inline Matrix raise() { Matrix m(2, 2); m << 0, 0, 1, 0; return m; }
/// |1><1|
inline Matrix number() { Matrix m(2, 2); m << 0, 0, 0, 1; return m; }
}  // namespace ops

inline Matrix kron(const Matrix& a, const Matrix& b) {
  detail::require_square(a, "kron");
  detail::require_square(b, "kron");
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

inline QuantumState kron(const QuantumState& a, const QuantumState& b) {
  return QuantumState(kron(a.amplitudes(), b.amplitudes()), 1e-10);
}

namespace detail {

inline void check_targets(std::span<const int> targets, int n_subsystems) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= n_subsystems)
      throw std::out_of_range("subsystem index " + std::to_string(targets[i]) + " out of range");
    for (std::size_t j = 0; j < i; ++j)
      if (targets[i] == targets[j]) throw std::invalid_argument("duplicate subsystem index " + std::to_string(targets[i]));
  }
}

// Bit position (from the least significant end) of subsystem k.
inline int bit_of(int k, int n_subsystems) { return n_subsystems - 1 - k; }

// Gathers the bits of `index` at the given subsystems into a local index,
// first listed subsystem most significant.
inline Eigen::Index gather(Eigen::Index index, std::span<const int> subs, int n_subsystems) {
  Eigen::Index local = 0;
  for (int s : subs) local = (local << 1) | ((index >> bit_of(s, n_subsystems)) & 1);
  return local;
}

inline Eigen::Index scatter(Eigen::Index base, Eigen::Index local, std::span<const int> subs, int n_subsystems) {
  const int m = static_cast<int>(subs.size());
  for (int i = 0; i < m; ++i) {
    const Eigen::Index bit = (local >> (m - 1 - i)) & 1;
    const int pos = bit_of(subs[i], n_subsystems);
    base = (base & ~(Eigen::Index{1} << pos)) | (bit << pos);
  }
  return base;
}

inline Eigen::Index target_mask(std::span<const int> subs, int n_subsystems) {
  Eigen::Index mask = 0;
  for (int s : subs) mask |= Eigen::Index{1} << bit_of(s, n_subsystems);
  return mask;
}

}  // namespace detail

/// Accumulates coeff * op (acting on `targets`) into the full-register matrix
/// `out` without materializing the embedded operator.
inline void embed_add(Matrix& out, cplx coeff, const Matrix& op, std::span<const int> targets, int n_subsystems) {
  detail::require_square(op, "embed");
  detail::check_targets(targets, n_subsystems);
  const Eigen::Index local_dim = Eigen::Index{1} << targets.size();
  if (op.rows() != local_dim) throw std::invalid_argument("embed: operator dimension does not match target count");
  const Eigen::Index dim = Eigen::Index{1} << n_subsystems;
  if (out.rows() != dim || out.cols() != dim) throw std::invalid_argument("embed: output dimension mismatch");
  const Eigen::Index mask = detail::target_mask(targets, n_subsystems);
  for (Eigen::Index rest = 0; rest < dim; ++rest) {
    if (rest & mask) continue;
    for (Eigen::Index c = 0; c < local_dim; ++c) {
      const Eigen::Index col = detail::scatter(rest, c, targets, n_subsystems);
      for (Eigen::Index r = 0; r < local_dim; ++r) {
        const cplx v = op(r, c);
        if (v == cplx(0.0)) continue;
        out(detail::scatter(rest, r, targets, n_subsystems), col) += coeff * v;
      }
    }
  }
}

inline Matrix embed(const Matrix& op, std::span<const int> targets, int n_subsystems) {
  const Eigen::Index dim = Eigen::Index{1} << n_subsystems;
  Matrix out = Matrix::Zero(dim, dim);
  embed_add(out, 1.0, op, targets, n_subsystems);
  return out;
}

inline Matrix embed(const Matrix& op, std::initializer_list<int> targets, int n_subsystems) {
  return embed(op, std::span<const int>(targets.begin(), targets.size()), n_subsystems);
}

inline Matrix embed(const Matrix& op, std::span<const int> targets, const RegisterLayout& layout) {
  return embed(op, targets, layout.subsystems());
}

/// Cached spectral decomposition h = V diag(w) V^dagger, so exp(-i h t) can
/// be formed for any t without refactoring.
class Eigensystem {
 public:
  Eigensystem() = default;
  explicit Eigensystem(const HermitianOperator& h) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
    if (es.info() != Eigen::Success) throw std::runtime_error("Eigensystem: eigendecomposition failed");
    values_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
  }

  Eigen::Index dim() const { return values_.size(); }
  const Eigen::VectorXd& values() const { return values_; }
  const Matrix& vectors() const { return vectors_; }

  Vector phases(double t) const {
    Vector ph(values_.size());
    for (Eigen::Index i = 0; i < values_.size(); ++i) ph(i) = std::polar(1.0, -values_(i) * t);
    return ph;
  }

  /// exp(-i h t) applied to the columns of `block`.
  Matrix propagate(double t, const Matrix& block) const {
    if (block.rows() != dim()) throw std::invalid_argument("Eigensystem: dimension mismatch");
    Matrix coeffs = vectors_.adjoint() * block;
    coeffs = phases(t).asDiagonal() * coeffs;
    return vectors_ * coeffs;
  }

  Vector propagate(double t, const Vector& v) const {
    if (v.size() != dim()) throw std::invalid_argument("Eigensystem: dimension mismatch");
    Vector coeffs = phases(t).cwiseProduct(vectors_.adjoint() * v);
    return vectors_ * coeffs;
  }

  Matrix unitary(double t) const { return vectors_ * phases(t).asDiagonal() * vectors_.adjoint(); }

 private:
  Eigen::VectorXd values_;
  Matrix vectors_;
};

inline QuantumState evolve(const Eigensystem& es, double t, const QuantumState& psi) {
  return QuantumState(es.propagate(t, psi.amplitudes()), 1e-10);
}

/// exp(-i h t) psi.
inline QuantumState evolve(const HermitianOperator& h, double t, const QuantumState& psi) {
  if (h.dim() != psi.dim()) throw std::invalid_argument("evolve: dimension mismatch");
  return evolve(Eigensystem(h), t, psi);
}

namespace detail {

// Splits the full index space into (kept, traced) coordinates.
struct TraceMap {
  std::vector<Eigen::Index> kept, traced;
  Eigen::Index keep_dim = 0, trace_dim = 0;

  TraceMap(std::span<const int> keep, int n) {
    check_targets(keep, n);
    std::vector<int> rest;
    for (int k = 0; k < n; ++k)
      if (std::find(keep.begin(), keep.end(), k) == keep.end()) rest.push_back(k);
    const Eigen::Index dim = Eigen::Index{1} << n;
    keep_dim = Eigen::Index{1} << keep.size();
    trace_dim = Eigen::Index{1} << rest.size();
    kept.resize(dim);
    traced.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      kept[i] = gather(i, keep, n);
      traced[i] = gather(i, rest, n);
    }
  }
};

}  // namespace detail

/// Reshapes a pure state into a (kept x traced) coefficient matrix.
inline Matrix bipartition(const Vector& psi, std::span<const int> keep, int n_subsystems) {
  detail::TraceMap map(keep, n_subsystems);
  if (psi.size() != (Eigen::Index{1} << n_subsystems)) throw std::invalid_argument("bipartition: dimension mismatch");
  Matrix m = Matrix::Zero(map.keep_dim, map.trace_dim);
  for (Eigen::Index i = 0; i < psi.size(); ++i) m(map.kept[i], map.traced[i]) = psi(i);
  return m;
}

/// Reduced state over `keep` (in the listed order).
inline DensityMatrix partial_trace(const QuantumState& psi, std::span<const int> keep) {
  const Matrix m = bipartition(psi.amplitudes(), keep, psi.subsystems());
  Matrix rho = m * m.adjoint();
  return DensityMatrix::trusted(std::move(rho));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> keep) {
  const int n = rho.subsystems();
  detail::TraceMap map(keep, n);
  Matrix out = Matrix::Zero(map.keep_dim, map.keep_dim);
  const Matrix& m = rho.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (map.traced[i] == map.traced[j]) out(map.kept[i], map.kept[j]) += m(i, j);
  return DensityMatrix::trusted(std::move(out));
}

inline DensityMatrix partial_trace(const QuantumState& psi, std::span<const int> keep, const RegisterLayout& layout) {
  if (psi.subsystems() != layout.subsystems()) throw std::invalid_argument("partial_trace: layout mismatch");
  return partial_trace(psi, keep);
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> keep, const RegisterLayout& layout) {
  if (rho.subsystems() != layout.subsystems()) throw std::invalid_argument("partial_trace: layout mismatch");
  return partial_trace(rho, keep);
}

/// <ideal| rho |ideal>
inline double fidelity_pure_vs_mixed(const QuantumState& ideal, const DensityMatrix& actual) {
  if (ideal.dim() != actual.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  const cplx f = ideal.amplitudes().dot(actual.matrix() * ideal.amplitudes());
  if (std::abs(f.imag()) > 1e-12 * std::max(1.0, std::abs(f.real())) + 1e-12)
    throw std::domain_error("fidelity: non-real overlap");
  return detail::clip_unit(f.real(), "fidelity");
}

namespace detail {

inline Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Eigen::VectorXd w = es.eigenvalues();
  if (w.minCoeff() < -kHermTol) throw std::domain_error("matrix square root: not positive semidefinite");
  w = w.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

/// (Tr sqrt(sqrt(a) b sqrt(a)))^2, computed as the squared nuclear norm of
/// sqrt(a) sqrt(b); closed form for a single qubit.
inline double uhlmann_fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("uhlmann_fidelity: dimension mismatch");
  const Matrix& x = a.matrix();
  const Matrix& y = b.matrix();
  // For a pure argument F = Tr(ab); the square-root route loses ~1e-8 there.
  auto is_pure = [](const Matrix& m) { return std::abs(m.cwiseAbs2().sum() - 1.0) < 1e-13; };
  if (is_pure(x) || is_pure(y)) return detail::clip_unit((x * y).trace().real(), "uhlmann fidelity");
  if (a.dim() == 2) {
    const double tr = (x * y).trace().real();
    const double dx = std::max(0.0, x.determinant().real());
    const double dy = std::max(0.0, y.determinant().real());
    return detail::clip_unit(tr + 2.0 * std::sqrt(dx * dy), "uhlmann fidelity");
  }
  const Matrix prod = detail::psd_sqrt(x) * detail::psd_sqrt(y);
  Eigen::JacobiSVD<Matrix> svd(prod);
  const double nuclear = svd.singularValues().sum();
  return detail::clip_unit(nuclear * nuclear, "uhlmann fidelity");
}

/// Tr(rho^2)
inline double purity(const DensityMatrix& rho) {
  const Matrix& m = rho.matrix();
  // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho.
  return m.cwiseAbs2().sum();
}

/// Haar-uniform pure state: normalized i.i.d. standard complex Gaussians.
template <class Rng>
QuantumState haar_random_state(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("haar_random_state: n must be >= 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index dim = Eigen::Index{1} << n;
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    v(i) = cplx(re, im);
  }
  return QuantumState::normalized(std::move(v));
}

/// Max elementwise |U^dagger U - I|.
inline double unitarity_defect(const Matrix& u) {
  detail::require_square(u, "unitarity_defect");
  return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

}  // namespace qrc
